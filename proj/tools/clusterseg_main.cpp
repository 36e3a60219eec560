// clusterseg: unsupervised per-image segmentation.
//
//   clusterseg segment IMAGE [--gt GT...] [options]
//   clusterseg bench MANIFEST [options]
//   clusterseg metrics PRED --gt GT... [--out CSV]
//
// `--config FILE` reads flat `key=value` lines named after the long options
// (e.g. `iters=50`, `no-eca=true`); explicit flags override the file.

#include "clusterseg/app.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <string>
#include <vector>

namespace {

using clusterseg::RunConfig;

void add_training_options(CLI::App* cmd, RunConfig& cfg, std::string& selection, bool& voi_bits) {
  auto& t = cfg.train;
  cmd->add_option("--iters", t.iterations, "Iterations T")->capture_default_str();
  cmd->add_option("--lr", t.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--momentum", t.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--gamma1", t.loss.gamma1, "Weight of the neighbour loss")->capture_default_str();
  cmd->add_option("--gamma2", t.loss.gamma2, "Weight of the reconstruction loss")->capture_default_str();
  cmd->add_option("--alpha1", t.loss.alpha1, "Affinity scale, deep features")->capture_default_str();
  cmd->add_option("--alpha2", t.loss.alpha2, "Affinity scale, image features")->capture_default_str();
  cmd->add_option("--eta", t.loss.eta, "MS-SSIM share of the reconstruction loss")->capture_default_str();
  cmd->add_option("--superpixels", t.superpixels, "Superpixel count K")->capture_default_str();
  cmd->add_option("--q", t.clusters, "Maximum cluster count Q")->capture_default_str();
  cmd->add_option("--pp-threshold", t.pp_threshold, "Post-processing merge threshold")->capture_default_str();
  cmd->add_option("--seed", t.seed, "Random seed")->capture_default_str();
  cmd->add_option("--compactness", t.slic_compactness, "SLIC compactness")->capture_default_str();
  cmd->add_flag("--ois", cfg.ois, "Sweep superpixel counts and keep the best (needs ground truth)");
  cmd->add_option("--ois-k", cfg.ois_superpixels, "Superpixel counts for the OIS sweep")->capture_default_str();
  cmd->add_option("--select", selection, "OIS selection metric: PRI, SC or mIoU")->capture_default_str();
  cmd->add_flag("--voi-bits", voi_bits, "Report VoI in bits instead of nats");
  cmd->add_option("-o,--out-dir", cfg.output_dir, "Output directory")->capture_default_str();

  cmd->add_flag("--no-eca", [&t](std::int64_t) { t.use_attention = false; }, "Disable channel attention");
  cmd->add_flag("--no-global", [&t](std::int64_t) { t.use_global = false; }, "Disable the neighbour loss");
  cmd->add_flag("--no-rec", [&t](std::int64_t) { t.use_rec = false; }, "Disable the reconstruction loss");
  cmd->add_flag("--no-postprocess", [&t](std::int64_t) { t.use_postprocess = false; }, "Skip post-processing");

  auto& e = cfg.emit;
  cmd->add_flag("--emit-labels,!--no-emit-labels", e.label_csv, "Write label CSVs");
  cmd->add_flag("--emit-color,!--no-emit-color", e.color_png, "Write the colorized PNG");
  cmd->add_flag("--emit-log,!--no-emit-log", e.training_log, "Write the training-log CSV");
  cmd->add_flag("--emit-metrics,!--no-emit-metrics", e.metric_csv, "Write the metric CSV");
  cmd->add_flag("--emit-superpixels", e.superpixel_dump, "Dump the superpixel map (PNG16 + CSV)");
  cmd->add_flag("--emit-snapshot", e.snapshot, "Save the trained parameters");
}

// Turns `key=value` lines of the file named by --config into `--key=value`
// arguments placed right after the subcommand, so later explicit flags win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty() || args.size() < 2) return args;
  std::vector<std::string> injected;
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    if (!item.parents.empty()) throw CLI::ConversionError("config file sections are not supported: " + path);
    for (const auto& value : item.inputs) injected.push_back("--" + item.name + "=" + value);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised per-image segmentation by superpixel-guided CNN clustering"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  RunConfig cfg;
  std::string selection = "PRI";
  bool voi_bits = false;

  auto* segment = app.add_subcommand("segment", "Segment one image");
  segment->add_option("image", cfg.input, "Input PNG")->required();
  segment->add_option("--gt", cfg.ground_truths, "Ground-truth label maps (PNG16 or CSV)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  segment->add_option("--color-seed", cfg.color_seed, "Seed of the label palette");
  add_training_options(segment, cfg, selection, voi_bits);

  auto* bench = app.add_subcommand("bench", "Segment and evaluate every image of a manifest");
  bench->add_option("manifest", cfg.manifest, "Manifest: one `image gt...` line per image")->required();
  bench->add_option("-j,--workers", cfg.workers, "Parallel images (0 = all cores)")->capture_default_str();
  add_training_options(bench, cfg, selection, voi_bits);

  std::string prediction, metrics_out;
  std::vector<std::string> metric_gts;
  bool metrics_bits = false;
  auto* metrics = app.add_subcommand("metrics", "Evaluate a precomputed label map");
  metrics->add_option("prediction", prediction, "Predicted label map (PNG16 or CSV)")->required();
  metrics->add_option("--gt", metric_gts, "Ground-truth label maps")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  metrics->add_option("--out", metrics_out, "Also write the CSV row here");
  metrics->add_flag("--voi-bits", metrics_bits, "Report VoI in bits instead of nats");

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(std::move(args));
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : clusterseg::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return clusterseg::kExitConfig;
  }

  try {
    cfg.selection = clusterseg::parse_selection_metric(selection);
  } catch (const clusterseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return clusterseg::kExitConfig;
  }
  cfg.voi_base = voi_bits ? clusterseg::LogBase::Bits : clusterseg::LogBase::Nats;

  if (*segment) return clusterseg::run_single(cfg, std::cout, std::cerr);
  if (*bench) return clusterseg::run_benchmark(cfg, std::cout, std::cerr);
  return clusterseg::run_metrics(prediction, metric_gts,
                                 metrics_bits ? clusterseg::LogBase::Bits : clusterseg::LogBase::Nats, metrics_out,
                                 std::cout, std::cerr);
}
