#ifndef CLUSTERSEG_SUPERPIX_HPP
#define CLUSTERSEG_SUPERPIX_HPP

#include "clusterseg/types.hpp"

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace clusterseg {

struct SlicConfig {
  int superpixels = 100;    ///< requested K
  double compactness = 10;  ///< weight of the spatial term (CIELAB units)
  int iterations = 10;
  std::uint64_t seed = 0;   ///< drives the sub-cell jitter of the initial grid
};

/// A partition of the image into `count` 4-connected, nonempty regions
/// labelled densely 0..count-1.
struct SuperpixelMap {
  LabelMap labels;
  int count = 0;
  std::vector<std::vector<Index>> members;  ///< linear pixel indices per superpixel

  Index size(int k) const { return static_cast<Index>(members[static_cast<std::size_t>(k)].size()); }
};

/// Wraps an arbitrary label map: labels are densely renumbered in raster
/// order of first appearance. Regions are not required to be connected.
SuperpixelMap make_superpixel_map(const LabelMap& labels);

/// SLIC superpixels in CIELAB+xy space. Orphan fragments left after the
/// k-means iterations are merged into the adjacent superpixel sharing the
/// longest border, so every superpixel is 4-connected. Throws ConfigError
/// unless 2 <= K <= H*W/4.
SuperpixelMap slic(const Image& image, const SlicConfig& cfg);

/// B: count x count, symmetric, zero diagonal; B(i,j) = 1 iff some pixel of
/// i has a 4-neighbour in j.
using AdjacencyMatrix = Eigen::MatrixXi;

AdjacencyMatrix build_adjacency(const LabelMap& labels, int count);
AdjacencyMatrix build_adjacency(const SuperpixelMap& sp);

/// Directional boundary pixels keyed by ordered label pair (i, j), i != j:
///   horizontal[(i,j)]: pixels (m,n) of i whose right neighbour (m,n+1) is in j
///   vertical[(i,j)]:   pixels (m,n) of i whose lower neighbour (m+1,n) is in j
/// Pixels are linear indices in raster order; labels are the raw values.
struct BoundarySets {
  std::map<std::pair<int, int>, std::vector<Index>> horizontal;
  std::map<std::pair<int, int>, std::vector<Index>> vertical;
};

BoundarySets boundary_sets(const LabelMap& labels);

/// 4-connected components of equal labels; returns component ids (dense, in
/// raster order) and the component count.
std::pair<LabelMap, int> connected_components(const LabelMap& labels);

}  // namespace clusterseg

#endif  // CLUSTERSEG_SUPERPIX_HPP
