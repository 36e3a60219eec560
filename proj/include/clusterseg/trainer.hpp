#ifndef CLUSTERSEG_TRAINER_HPP
#define CLUSTERSEG_TRAINER_HPP

#include "clusterseg/clusternet.hpp"
#include "clusterseg/losses.hpp"
#include "clusterseg/segmetrics.hpp"
#include "clusterseg/superpix.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace clusterseg {

struct TrainConfig {
  int iterations = 150;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int superpixels = 100;  ///< K
  int clusters = 100;     ///< Q
  LossConfig loss;
  std::uint64_t seed = 0;
  double pp_threshold = 10.0;

  double slic_compactness = 10.0;
  int slic_iterations = 10;

  // Ablation switches.
  bool use_attention = true;
  bool use_global = true;
  bool use_rec = true;
  bool use_postprocess = true;

  /// When non-empty, the final parameters are saved there after training.
  std::string snapshot_path;

  /// Keep the pseudo ground truth of the first iteration for the whole run.
  bool freeze_pseudo_gt = false;

  void validate() const;
  OptimizerConfig optimizer() const { return {learning_rate, momentum, iterations}; }
  SlicConfig slic() const { return {superpixels, slic_compactness, slic_iterations, seed}; }
  NetworkConfig network() const;
};

struct TrainTrace {
  std::vector<LossBreakdown> log;  ///< one entry per completed iteration
  LabelMap labels;                 ///< argmax of the last iteration, original image size
  ForwardResult result;            ///< last forward pass (on the even-padded image)
  int superpixel_count = 0;
  double seconds = 0;
  bool failed = false;
  std::string failure;
};

/// Memoizes superpixels per (K, seed, compactness, iterations) for a single
/// image and counts how many extractions actually ran.
class SuperpixelCache {
 public:
  const SuperpixelMap& get(const Image& image, const SlicConfig& cfg);
  int extractions() const { return extractions_; }

 private:
  std::map<std::tuple<int, std::uint64_t, double, int>, SuperpixelMap> maps_;
  int extractions_ = 0;
};

/// Reflect-pads the bottom row / right column when H or W is odd.
Image pad_to_even(const Image& image);

/// Per-image optimization: superpixels once, then T iterations of
/// forward -> argmax -> pseudo ground truth -> statistics -> losses ->
/// backward -> momentum SGD. A non-finite value stops the run and returns
/// the partial trace with `failed` set.
TrainTrace train_one(const Image& image, const TrainConfig& cfg, SuperpixelCache* cache = nullptr);

/// Writes iteration,L_local,L_global,L_rec1,L_rec2,total rows.
void write_training_log(const std::string& path, const std::vector<LossBreakdown>& log);

enum class SelectionMetric { PRI, SC, MIoU };

SelectionMetric parse_selection_metric(const std::string& name);

struct OisEntry {
  int superpixels = 0;
  bool failed = false;
  std::string failure;
  MetricValues raw;
  MetricValues post;
  double score = 0;  ///< selection metric of the post-processed result
};

struct OisResult {
  int best_index = -1;
  TrainTrace best;
  LabelMap best_post;
  std::vector<OisEntry> table;
  std::vector<TrainTrace> traces;  ///< one per K, same order as the table
};

/// Trains once per K (seed + K index), post-processes each result and keeps
/// the one with the highest selection metric against the ground truths.
/// Throws std::runtime_error if every K fails.
OisResult train_ois(const Image& image, const std::vector<LabelMap>& gts, const TrainConfig& base,
                    const std::vector<int>& superpixel_counts, SelectionMetric metric = SelectionMetric::PRI,
                    SuperpixelCache* cache = nullptr);

}  // namespace clusterseg

#endif  // CLUSTERSEG_TRAINER_HPP
