#ifndef CLUSTERSEG_POSTPROC_HPP
#define CLUSTERSEG_POSTPROC_HPP

#include "clusterseg/color.hpp"
#include "clusterseg/types.hpp"

#include <map>
#include <utility>

namespace clusterseg {

/// Absolute forward differences of a (Lab) image along x and y; the last
/// column of dx and the last row of dy are zero.
struct GradientPair {
  Image dx;
  Image dy;
};

GradientPair lab_gradients(const Image& lab);

/// Edge weights between adjacent segments, keyed by (smaller, larger) raw
/// label. Pairs that are not adjacent are absent, i.e. infinitely heavy.
using RegionEdgeWeights = std::map<std::pair<int, int>, double>;

/// Weight of segment pair {i, j}: +inf when they are not adjacent.
double edge_weight(const RegionEdgeWeights& weights, int i, int j);

/// Delta(i,j) = |g^x + g^y|_1, where g^x averages |d/dx Lab| over the
/// horizontal crossings between i and j (each crossing represented by its
/// left pixel, whichever of the two segments it belongs to) and g^y likewise
/// over vertical crossings. A direction without crossings contributes 0.
RegionEdgeWeights boundary_gradients(const Image& lab, const LabelMap& segmentation);

/// Keeps edges with weight < threshold and labels each connected component
/// of the kept graph; output labels are dense, in raster order of first
/// appearance.
LabelMap graph_cut_merge(const LabelMap& segmentation, const RegionEdgeWeights& weights, double threshold);

/// Dense relabelling 0..n-1 in raster order of first appearance.
LabelMap relabel_dense(const LabelMap& labels);

/// rgb -> Lab -> boundary_gradients -> graph_cut_merge.
LabelMap postprocess(const Image& rgb, const LabelMap& segmentation, double threshold);

}  // namespace clusterseg

#endif  // CLUSTERSEG_POSTPROC_HPP
