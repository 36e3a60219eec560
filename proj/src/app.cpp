#include "clusterseg/app.hpp"

#include "clusterseg/postproc.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace clusterseg {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  train.validate();
  if (output_dir.empty()) throw ConfigError("output directory must not be empty");
  if (workers < 0) throw ConfigError("worker count must be >= 0");
  if (ois) {
    if (ois_superpixels.empty()) throw ConfigError("OIS needs at least one superpixel count");
    for (int k : ois_superpixels)
      if (k < 2) throw ConfigError("superpixel counts must be >= 2");
  }
}

namespace {

std::array<std::uint8_t, 3> hsv_to_rgb8(double h, double s, double v) {
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(i) % 6) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  const auto byte = [](double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
  return {byte(r), byte(g), byte(b)};
}

}  // namespace

Rgb8 colorize(const LabelMap& labels, std::uint64_t seed) {
  constexpr double kGolden = 0.618033988749894848;
  std::set<int> distinct(labels.data(), labels.data() + labels.size());
  std::mt19937_64 rng(seed);
  const double start = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

  // Saturation and value cycle on top of the hue walk so that very long label
  // lists do not collapse onto identical 8-bit triples.
  std::map<int, std::array<std::uint8_t, 3>> palette;
  std::set<std::array<std::uint8_t, 3>> used;
  std::size_t step = 0;
  for (int label : distinct) {
    std::array<std::uint8_t, 3> color{};
    do {
      const double h = std::fmod(start + static_cast<double>(step) * kGolden, 1.0);
      const double s = 0.55 + 0.4 * static_cast<double>((step / 3) % 2);
      const double v = 0.95 - 0.3 * static_cast<double>((step / 7) % 3) / 2.0;
      color = hsv_to_rgb8(h, s, v);
      ++step;
    } while (!used.insert(color).second);
    palette.emplace(label, color);
  }

  Rgb8 out{labels.rows(), labels.cols(), std::vector<std::uint8_t>(static_cast<std::size_t>(3 * labels.size()))};
  for (Index i = 0; i < labels.size(); ++i) {
    const auto& c = palette.at(labels.data()[i]);
    std::copy(c.begin(), c.end(), out.pixels.begin() + 3 * i);
  }
  return out;
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  const auto resolve = [&](const std::string& p) {
    const fs::path q(p);
    return (q.is_absolute() ? q : base / q).lexically_normal().string();
  };

  DatasetManifest manifest;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::vector<std::string> fields;
    for (std::string t; tokens >> t;) fields.push_back(t);
    if (fields.empty()) continue;
    if (first && fields[0] == "format") {
      if (fields.size() != 2 || fields[1] != "paths") throw ConfigError("unsupported manifest format directive");
      manifest.format = fields[1];
      first = false;
      continue;
    }
    first = false;
    ManifestEntry entry{resolve(fields[0]), {}};
    for (std::size_t i = 1; i < fields.size(); ++i) entry.ground_truths.push_back(resolve(fields[i]));
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void validate_manifest(const DatasetManifest& manifest) {
  if (manifest.entries.empty()) throw ConfigError("manifest lists no images");
  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.image).second) throw ConfigError("manifest lists " + e.image + " twice");
    if (!fs::exists(e.image)) throw IoError("no such file: " + e.image);
    const Image image = read_png(e.image);
    if (e.ground_truths.empty()) throw ConfigError(e.image + ": benchmark entries need ground truth");
    for (const auto& g : e.ground_truths) {
      const LabelMap gt = read_label_map(g);
      if (gt.rows() != image.height() || gt.cols() != image.width())
        throw ConfigError(g + ": ground truth is " + std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()) +
                          " but the image is " + std::to_string(image.height()) + "x" +
                          std::to_string(image.width()));
    }
  }
}

std::string metric_csv_header() { return "image,K,stage," + metric_header(); }

std::string metric_csv_row(const std::string& image, const std::string& k, const std::string& stage,
                           const MetricValues& v) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", v.sc, v.pri, v.voi, v.gce, v.bde, v.miou);
  return image + "," + k + "," + stage + "," + buf;
}

namespace {

std::vector<LabelMap> read_ground_truths(const std::vector<std::string>& paths) {
  std::vector<LabelMap> gts;
  for (const auto& p : paths) gts.push_back(read_label_map(p));
  return gts;
}

void check_inputs(const Image& image, const std::vector<LabelMap>& gts, const RunConfig& cfg) {
  for (const auto& gt : gts)
    if (gt.rows() != image.height() || gt.cols() != image.width())
      throw ConfigError("ground truth size differs from the image");
  if (image.height() < ClusterNetwork::kMinSide || image.width() < ClusterNetwork::kMinSide)
    throw ConfigError("image sides must be at least 16 pixels");
  const Index limit = image.height() * image.width() / 4;
  const auto check_k = [&](int k) {
    if (k > limit) throw ConfigError("superpixel count " + std::to_string(k) + " exceeds H*W/4");
  };
  if (cfg.ois && !gts.empty())
    std::for_each(cfg.ois_superpixels.begin(), cfg.ois_superpixels.end(), check_k);
  else
    check_k(cfg.train.superpixels);
}

void print_summary(std::ostream& out, const MetricValues& raw, const MetricValues& post) {
  out << "stage  " << metric_header() << "\n";
  char buf[160];
  for (const auto& [stage, v] : {std::pair<const char*, const MetricValues*>{"raw", &raw}, {"post", &post}}) {
    std::snprintf(buf, sizeof buf, "%-5s  %.4f,%.4f,%.4f,%.4f,%.4f,%.4f", stage, v->sc, v->pri, v->voi, v->gce, v->bde,
                  v->miou);
    out << buf << "\n";
  }
}

// Outcome of training + post-processing one image.
struct ImageOutcome {
  bool failed = false;
  std::string failure;
  TrainTrace trace;
  LabelMap post;
  int superpixels = 0;
  std::vector<OisEntry> ois_table;
  SuperpixelMap superpixel_map;
};

ImageOutcome process_image(const Image& image, const std::vector<LabelMap>& gts, const RunConfig& cfg,
                           const TrainConfig& train) {
  ImageOutcome outcome;
  SuperpixelCache cache;
  const Image padded = pad_to_even(image);
  if (cfg.ois && !gts.empty()) {
    try {
      OisResult r = train_ois(image, gts, train, cfg.ois_superpixels, cfg.selection, &cache);
      outcome.trace = std::move(r.best);
      outcome.post = std::move(r.best_post);
      outcome.superpixels = cfg.ois_superpixels[static_cast<std::size_t>(r.best_index)];
      outcome.ois_table = std::move(r.table);
      TrainConfig chosen = train;
      chosen.superpixels = outcome.superpixels;
      chosen.seed = train.seed + static_cast<std::uint64_t>(r.best_index);
      outcome.superpixel_map = cache.get(padded, chosen.slic());
    } catch (const std::runtime_error& e) {
      if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw;
      outcome.failed = true;
      outcome.failure = e.what();
      outcome.trace = {};
    }
    return outcome;
  }
  outcome.trace = train_one(image, train, &cache);
  outcome.superpixels = train.superpixels;
  outcome.superpixel_map = cache.get(padded, train.slic());
  outcome.failed = outcome.trace.failed;
  outcome.failure = outcome.trace.failure;
  if (!outcome.failed)
    outcome.post = train.use_postprocess ? postprocess(image, outcome.trace.labels, train.pp_threshold)
                                         : relabel_dense(outcome.trace.labels);
  return outcome;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

int run_single(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    if (cfg.input.empty()) throw ConfigError("no input image given");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  Image image;
  std::vector<LabelMap> gts;
  try {
    if (!fs::exists(cfg.input)) throw IoError("no such file: " + cfg.input);
    image = read_png(cfg.input);
    gts = read_ground_truths(cfg.ground_truths);
  } catch (const IoError& e) {
    err << "unreadable input: " << e.what() << "\n";
    return kExitUnreadable;
  }

  const std::string stem = fs::path(cfg.input).stem().string();
  const fs::path dir(cfg.output_dir);
  TrainConfig train = cfg.train;
  if (cfg.emit.snapshot) train.snapshot_path = (dir / (stem + "_net.bin")).string();

  ImageOutcome outcome;
  try {
    check_inputs(image, gts, cfg);
    fs::create_directories(dir);
    outcome = process_image(image, gts, cfg, train);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUnreadable;
  }

  try {
    const auto& trace = outcome.trace;
    if (cfg.emit.training_log && !trace.log.empty()) write_training_log((dir / (stem + "_train.csv")).string(), trace.log);
    if (outcome.failed) {
      if (cfg.emit.label_csv && trace.labels.size() > 0)
        write_label_csv((dir / (stem + "_raw_labels.csv")).string(), trace.labels);
      err << "training diverged: " << outcome.failure << "\n";
      return kExitDiverged;
    }

    if (cfg.emit.label_csv) {
      write_label_csv((dir / (stem + "_labels.csv")).string(), outcome.post);
      write_label_csv((dir / (stem + "_raw_labels.csv")).string(), trace.labels);
    }
    if (cfg.emit.color_png) write_png_rgb8((dir / (stem + "_color.png")).string(), colorize(outcome.post, cfg.color_seed));
    if (cfg.emit.superpixel_dump) {
      const LabelMap sp = outcome.superpixel_map.labels.topLeftCorner(image.height(), image.width());
      write_label_png((dir / (stem + "_superpixels.png")).string(), sp);
      write_label_csv((dir / (stem + "_superpixels.csv")).string(), sp);
    }
    out << stem << ": " << trace.log.size() << " iterations, K=" << outcome.superpixels << ", "
        << (relabel_dense(trace.labels).maxCoeff() + 1) << " raw segments, " << (outcome.post.maxCoeff() + 1)
        << " after post-processing, final loss " << trace.log.back().total << "\n";

    if (!gts.empty()) {
      const MetricValues raw = evaluate(trace.labels, gts, cfg.voi_base).mean;
      const MetricValues post = evaluate(outcome.post, gts, cfg.voi_base).mean;
      const std::string k = std::to_string(outcome.superpixels);
      if (cfg.emit.metric_csv) {
        write_text(dir / (stem + "_metrics.csv"), metric_csv_header() + "\n" + metric_csv_row(stem, k, "raw", raw) +
                                                       "\n" + metric_csv_row(stem, k, "post", post) + "\n");
        if (!outcome.ois_table.empty()) {
          std::string table = metric_csv_header() + "\n";
          for (const auto& e : outcome.ois_table) {
            const std::string ek = std::to_string(e.superpixels);
            if (e.failed) continue;
            table += metric_csv_row(stem, ek, "raw", e.raw) + "\n" + metric_csv_row(stem, ek, "post", e.post) + "\n";
          }
          write_text(dir / (stem + "_ois.csv"), table);
        }
      }
      print_summary(out, raw, post);
    }
  } catch (const std::exception& e) {
    err << "error writing artifacts: " << e.what() << "\n";
    return kExitUnreadable;
  }
  return kExitOk;
}

int run_benchmark(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  DatasetManifest manifest;
  try {
    cfg.validate();
    if (cfg.manifest.empty()) throw ConfigError("no manifest given");
    manifest = read_manifest(cfg.manifest);
    validate_manifest(manifest);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "unreadable input: " << e.what() << "\n";
    return kExitUnreadable;
  }

  auto entries = manifest.entries;
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.image < b.image; });
  const fs::path dir(cfg.output_dir);
  try {
    fs::create_directories(dir);
  } catch (const std::exception& e) {
    err << "cannot create " << dir << ": " << e.what() << "\n";
    return kExitUnreadable;
  }

  struct Row {
    bool failed = false;
    std::string failure;
    std::string name;
    int superpixels = 0;
    MetricValues raw, post;
  };
  std::vector<Row> rows(entries.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  const auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      Row& row = rows[i];
      const auto& e = entries[i];
      row.name = fs::path(e.image).stem().string();
      try {
        const Image image = read_png(e.image);
        const std::vector<LabelMap> gts = read_ground_truths(e.ground_truths);
        check_inputs(image, gts, cfg);
        ImageOutcome o = process_image(image, gts, cfg, cfg.train);
        row.failed = o.failed;
        row.failure = o.failure;
        row.superpixels = o.superpixels;
        if (!o.failed) {
          row.raw = evaluate(o.trace.labels, gts, cfg.voi_base).mean;
          row.post = evaluate(o.post, gts, cfg.voi_base).mean;
          if (cfg.emit.label_csv) write_label_csv((dir / (row.name + "_labels.csv")).string(), o.post);
          if (cfg.emit.training_log) write_training_log((dir / (row.name + "_train.csv")).string(), o.trace.log);
        }
      } catch (const std::exception& ex) {
        row.failed = true;
        row.failure = ex.what();
      }
      const std::lock_guard<std::mutex> lock(log_mutex);
      err << (row.failed ? "failed " : "done ") << e.image << (row.failed ? ": " + row.failure : "") << "\n";
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers =
      std::min<std::size_t>(entries.size(), cfg.workers > 0 ? static_cast<std::size_t>(cfg.workers) : hw);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  MetricValues sum_raw, sum_post;
  int ok = 0, failed = 0;
  std::string report = metric_csv_header() + "\n";
  for (const auto& r : rows) {
    if (r.failed) {
      ++failed;
      continue;
    }
    ++ok;
    const std::string k = std::to_string(r.superpixels);
    report += metric_csv_row(r.name, k, "raw", r.raw) + "\n" + metric_csv_row(r.name, k, "post", r.post) + "\n";
    for (auto [sum, v] : {std::pair{&sum_raw, &r.raw}, std::pair{&sum_post, &r.post}}) {
      sum->sc += v->sc;
      sum->pri += v->pri;
      sum->voi += v->voi;
      sum->gce += v->gce;
      sum->bde += v->bde;
      sum->miou += v->miou;
    }
  }
  const auto mean = [ok](MetricValues v) {
    const double inv = ok > 0 ? 1.0 / ok : 0.0;
    v.sc *= inv, v.pri *= inv, v.voi *= inv, v.gce *= inv, v.bde *= inv, v.miou *= inv;
    return v;
  };
  const MetricValues mean_raw = mean(sum_raw), mean_post = mean(sum_post);
  std::string summary = "stage,images,failed," + metric_header() + "\n";
  if (ok > 0) {
    report += metric_csv_row("MEAN", "-", "raw", mean_raw) + "\n" + metric_csv_row("MEAN", "-", "post", mean_post) + "\n";
    for (const auto& [stage, v] : {std::pair{"raw", &mean_raw}, std::pair{"post", &mean_post}}) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", stage, ok, failed, v->sc, v->pri,
                    v->voi, v->gce, v->bde, v->miou);
      summary += buf;
    }
  }
  try {
    write_text(dir / "bench_metrics.csv", report);
    write_text(dir / "bench_summary.csv", summary);
  } catch (const IoError& e) {
    err << e.what() << "\n";
    return kExitUnreadable;
  }
  out << summary;
  if (failed > 0) out << failed << " image(s) failed and were excluded from the means\n";
  return ok > 0 ? kExitOk : kExitDiverged;
}

int run_metrics(const std::string& prediction, const std::vector<std::string>& ground_truths, LogBase base,
                const std::string& output, std::ostream& out, std::ostream& err) {
  LabelMap pred;
  std::vector<LabelMap> gts;
  try {
    if (ground_truths.empty()) throw ConfigError("at least one ground truth is required");
    pred = read_label_map(prediction);
    gts = read_ground_truths(ground_truths);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "unreadable input: " << e.what() << "\n";
    return kExitUnreadable;
  }
  MetricValues v;
  try {
    v = evaluate(pred, gts, base).mean;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string text =
      metric_csv_header() + "\n" + metric_csv_row(fs::path(prediction).stem().string(), "-", "eval", v) + "\n";
  out << text;
  if (!output.empty()) {
    try {
      write_text(output, text);
    } catch (const IoError& e) {
      err << e.what() << "\n";
      return kExitUnreadable;
    }
  }
  return kExitOk;
}

}  // namespace clusterseg
