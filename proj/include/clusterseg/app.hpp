#ifndef CLUSTERSEG_APP_HPP
#define CLUSTERSEG_APP_HPP

#include "clusterseg/image_io.hpp"
#include "clusterseg/segmetrics.hpp"
#include "clusterseg/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace clusterseg {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitUnreadable = 2, kExitDiverged = 3 };

struct EmitFlags {
  bool label_csv = true;
  bool color_png = true;
  bool training_log = true;
  bool metric_csv = true;
  bool superpixel_dump = false;
  bool snapshot = false;
};

struct RunConfig {
  std::string input;                       ///< `segment`: one image
  std::vector<std::string> ground_truths;  ///< `segment`: optional
  std::string manifest;                    ///< `bench`
  TrainConfig train;
  bool ois = false;
  std::vector<int> ois_superpixels{50, 100, 150, 200, 250, 300};
  SelectionMetric selection = SelectionMetric::PRI;
  LogBase voi_base = LogBase::Nats;
  std::string output_dir = "clusterseg_out";
  EmitFlags emit;
  int workers = 0;  ///< `bench` worker threads; 0 = hardware concurrency
  std::uint64_t color_seed = 0;

  /// Throws ConfigError. Called before any file is decoded.
  void validate() const;
};

/// Deterministic label colors: hue advances by the golden-ratio conjugate per
/// distinct label (in sorted order) from a seed-dependent start.
Rgb8 colorize(const LabelMap& labels, std::uint64_t seed = 0);

struct ManifestEntry {
  std::string image;
  std::vector<std::string> ground_truths;
};

/// One entry per non-empty, non-comment line: an image path followed by zero
/// or more ground-truth paths, whitespace separated. Relative paths resolve
/// against the manifest's directory. An optional first directive
/// `format paths` names the layout.
struct DatasetManifest {
  std::string format = "paths";
  std::vector<ManifestEntry> entries;
};

DatasetManifest read_manifest(const std::string& path);

/// Checks that every file exists and decodes and every ground truth matches
/// its image size. Throws IoError or ConfigError.
void validate_manifest(const DatasetManifest& manifest);

/// Metric CSV header: image,K,stage,SC,PRI,VoI,GCE,BDE,mIoU
std::string metric_csv_header();
std::string metric_csv_row(const std::string& image, const std::string& k, const std::string& stage,
                           const MetricValues& v);

int run_single(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_benchmark(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Evaluates a precomputed label map against ground truths and prints one
/// metric CSV row (with header). Writes it to `output` too when non-empty.
int run_metrics(const std::string& prediction, const std::vector<std::string>& ground_truths, LogBase base,
                const std::string& output, std::ostream& out, std::ostream& err);

}  // namespace clusterseg

#endif  // CLUSTERSEG_APP_HPP
