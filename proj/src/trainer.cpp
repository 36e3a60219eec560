#include "clusterseg/trainer.hpp"

#include "clusterseg/postproc.hpp"
#include "clusterseg/spstats.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace clusterseg {

void TrainConfig::validate() const {
  optimizer().validate();
  loss.validate();
  if (clusters < 2) throw ConfigError("cluster count Q must be >= 2");
  if (superpixels < 2) throw ConfigError("superpixel count K must be >= 2");
  if (!(pp_threshold >= 0)) throw ConfigError("post-processing threshold must be >= 0");
  if (!(slic_compactness > 0)) throw ConfigError("SLIC compactness must be > 0");
  if (slic_iterations < 1) throw ConfigError("SLIC iteration count must be >= 1");
}

NetworkConfig TrainConfig::network() const {
  NetworkConfig n;
  n.clusters = clusters;
  n.use_attention = use_attention;
  return n;
}

const SuperpixelMap& SuperpixelCache::get(const Image& image, const SlicConfig& cfg) {
  const auto key = std::make_tuple(cfg.superpixels, cfg.seed, cfg.compactness, cfg.iterations);
  auto it = maps_.find(key);
  if (it == maps_.end()) {
    it = maps_.emplace(key, slic(image, cfg)).first;
    ++extractions_;
  }
  return it->second;
}

Image pad_to_even(const Image& image) {
  const Index h = image.height(), w = image.width();
  const Index ph = h + (h % 2), pw = w + (w % 2);
  if (ph == h && pw == w) return image;
  if (h < 2 || w < 2) throw ConfigError("image is too small to pad");
  Image out(image.channels(), ph, pw);
  for (Index c = 0; c < image.channels(); ++c)
    for (Index y = 0; y < ph; ++y)
      for (Index x = 0; x < pw; ++x) out(c, y, x) = image(c, y < h ? y : h - 2, x < w ? x : w - 2);
  return out;
}

namespace {

LabelMap crop(const LabelMap& labels, Index h, Index w) { return labels.topLeftCorner(h, w); }

}  // namespace

TrainTrace train_one(const Image& input, const TrainConfig& cfg, SuperpixelCache* cache) {
  cfg.validate();
  if (input.channels() != 3) throw ConfigError("training expects a 3-channel image");
  if (input.height() < ClusterNetwork::kMinSide || input.width() < ClusterNetwork::kMinSide)
    throw ConfigError("image sides must be at least 16 pixels");

  const auto start = std::chrono::steady_clock::now();
  const Image image = pad_to_even(input);
  const Image image_half = bicubic_down2(image);

  SuperpixelCache local_cache;
  const SuperpixelMap& sp = (cache != nullptr ? *cache : local_cache).get(image, cfg.slic());
  const AdjacencyMatrix adjacency = build_adjacency(sp);
  const Eigen::MatrixXd shallow = region_stats(image, sp);

  ClusterNetwork net(cfg.network(), cfg.seed);
  auto params = net.parameters();
  const OptimizerConfig opt = cfg.optimizer();

  TrainTrace trace;
  trace.superpixel_count = sp.count;
  LabelMap frozen;
  try {
    for (int t = 0; t < cfg.iterations; ++t) {
      ForwardResult fwd = net.forward(image);
      LabelMap target;
      if (cfg.freeze_pseudo_gt) {
        if (t == 0) frozen = pseudo_gt(fwd.labels, sp);
        target = frozen;
      } else {
        target = pseudo_gt(fwd.labels, sp);
      }

      Tensor<double> grad_scores;
      const double local = loss_local(fwd.scores, target, &grad_scores, cfg.loss.local_reduction);

      double global = 0;
      if (cfg.use_global) {
        const Tensor<double> probs = softmax_channels(fwd.scores);
        const Eigen::MatrixXd h = superpixel_probs(probs, sp);
        const RegionFeatures features{region_stats(fwd.scores, sp), shallow};
        const Eigen::MatrixXd a = affinity(features, adjacency, cfg.loss.alpha1, cfg.loss.alpha2);
        Eigen::MatrixXd grad_h;
        global = loss_global(h, a, &grad_h);
        if (cfg.loss.gamma1 != 0)
          grad_scores.data() += cfg.loss.gamma1 * superpixel_probs_backward(probs, sp, grad_h).data();
      }

      double rec1 = 0, rec2 = 0;
      Image grad_rec = Image::constant(3, image.height(), image.width(), 0.0);
      Image grad_rec_half = Image::constant(3, image_half.height(), image_half.width(), 0.0);
      if (cfg.use_rec) {
        rec1 = loss_msssim_l2(image, fwd.reconstruction, cfg.loss, &grad_rec);
        rec2 = loss_msssim_l2(image_half, fwd.reconstruction_half, cfg.loss, &grad_rec_half);
        grad_rec.data() *= cfg.loss.gamma2;
        grad_rec_half.data() *= cfg.loss.gamma2;
      }

      const LossBreakdown losses = total_loss(local, global, rec1, rec2, cfg.loss);
      net.backward(grad_scores, grad_rec, grad_rec_half);
      sgd_step(params, opt);
      trace.log.push_back(losses);
      trace.labels = crop(fwd.labels, input.height(), input.width());
      trace.result = std::move(fwd);
    }
  } catch (const DivergenceError& e) {
    trace.failed = true;
    trace.failure = e.what();
  }
  if (!trace.failed && !cfg.snapshot_path.empty()) net.save(cfg.snapshot_path);
  trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

void write_training_log(const std::string& path, const std::vector<LossBreakdown>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,L_local,L_global,L_rec1,L_rec2,total\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& l = log[i];
    out << i + 1 << ',' << l.local << ',' << l.global << ',' << l.rec1 << ',' << l.rec2 << ',' << l.total << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

SelectionMetric parse_selection_metric(const std::string& name) {
  if (name == "PRI" || name == "pri") return SelectionMetric::PRI;
  if (name == "SC" || name == "sc") return SelectionMetric::SC;
  if (name == "mIoU" || name == "miou") return SelectionMetric::MIoU;
  throw ConfigError("unknown selection metric: " + name);
}

namespace {

double select(const MetricValues& v, SelectionMetric m) {
  switch (m) {
    case SelectionMetric::SC: return v.sc;
    case SelectionMetric::MIoU: return v.miou;
    case SelectionMetric::PRI: break;
  }
  return v.pri;
}

}  // namespace

OisResult train_ois(const Image& image, const std::vector<LabelMap>& gts, const TrainConfig& base,
                    const std::vector<int>& superpixel_counts, SelectionMetric metric, SuperpixelCache* cache) {
  if (gts.empty()) throw ConfigError("OIS needs at least one ground truth");
  if (superpixel_counts.empty()) throw ConfigError("OIS needs at least one superpixel count");
  for (const auto& gt : gts)
    if (gt.rows() != image.height() || gt.cols() != image.width())
      throw ConfigError("ground truth size differs from the image");

  OisResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < superpixel_counts.size(); ++i) {
    TrainConfig cfg = base;
    cfg.superpixels = superpixel_counts[i];
    cfg.seed = base.seed + i;
    if (!base.snapshot_path.empty()) cfg.snapshot_path = base.snapshot_path + ".k" + std::to_string(cfg.superpixels);
    TrainTrace trace = train_one(image, cfg, cache);

    OisEntry entry;
    entry.superpixels = cfg.superpixels;
    entry.failed = trace.failed;
    entry.failure = trace.failure;
    LabelMap post;
    if (!trace.failed) {
      post = cfg.use_postprocess ? postprocess(image, trace.labels, cfg.pp_threshold) : relabel_dense(trace.labels);
      entry.raw = evaluate(trace.labels, gts).mean;
      entry.post = evaluate(post, gts).mean;
      entry.score = select(entry.post, metric);
      if (entry.score > best) {
        best = entry.score;
        result.best_index = static_cast<int>(i);
        result.best = trace;
        result.best_post = post;
      }
    }
    result.table.push_back(entry);
    result.traces.push_back(std::move(trace));
  }
  if (result.best_index < 0) throw std::runtime_error("training failed for every superpixel count");
  return result;
}

}  // namespace clusterseg
