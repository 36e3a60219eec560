#ifndef CLUSTERSEG_SEGMETRICS_HPP
#define CLUSTERSEG_SEGMETRICS_HPP

#include "clusterseg/types.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace clusterseg {

// All metrics compare a predicted partition with one or more ground-truth
// partitions of the same size. Label values need not be dense; only the
// induced partitions matter. With several annotators the per-annotator
// values are averaged.

enum class LogBase { Nats, Bits };

/// Joint label histogram: rows index the first map's labels, columns the
/// second's, both compacted to 0..n-1.
Eigen::MatrixXd contingency_table(const LabelMap& a, const LabelMap& b);

double rand_index(const LabelMap& pred, const LabelMap& gt);
double variation_of_information(const LabelMap& pred, const LabelMap& gt, LogBase base = LogBase::Nats);
double global_consistency_error(const LabelMap& pred, const LabelMap& gt);
/// Mean distance from each boundary pixel of one map to the nearest boundary
/// pixel of the other, averaged over both directions. A boundary pixel has a
/// 4-neighbour with a different label; a map without any boundary uses the
/// image frame instead.
double boundary_displacement_error(const LabelMap& pred, const LabelMap& gt);
/// Covering of gt by pred: sum over gt regions R of |R|/N * max IoU(R, R').
double segmentation_covering(const LabelMap& pred, const LabelMap& gt);
/// Mean over gt segments of the best IoU with any predicted segment.
double miou(const LabelMap& pred, const LabelMap& gt);

double pri(const LabelMap& pred, const std::vector<LabelMap>& gts);
double voi(const LabelMap& pred, const std::vector<LabelMap>& gts, LogBase base = LogBase::Nats);
double gce(const LabelMap& pred, const std::vector<LabelMap>& gts);
double bde(const LabelMap& pred, const std::vector<LabelMap>& gts);
double seg_covering(const LabelMap& pred, const std::vector<LabelMap>& gts);
double miou(const LabelMap& pred, const std::vector<LabelMap>& gts);

/// Boundary mask used by BDE (1 = boundary pixel).
LabelMap boundary_mask(const LabelMap& labels);

/// Exact Euclidean distance from every pixel to the nearest nonzero pixel of
/// `mask` (+inf everywhere if the mask is empty).
RowMatrix<double> distance_transform(const LabelMap& mask);

struct MetricValues {
  double sc = 0, pri = 0, voi = 0, gce = 0, bde = 0, miou = 0;
};

struct MetricReport {
  MetricValues mean;
  std::vector<MetricValues> per_annotator;
};

MetricReport evaluate(const LabelMap& pred, const std::vector<LabelMap>& gts, LogBase base = LogBase::Nats);

/// "SC,PRI,VoI,GCE,BDE,mIoU"
std::string metric_header();

}  // namespace clusterseg

#endif  // CLUSTERSEG_SEGMETRICS_HPP
