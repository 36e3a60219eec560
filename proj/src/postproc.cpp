#include "clusterseg/postproc.hpp"

#include "clusterseg/superpix.hpp"

#include <Eigen/Dense>

#include <limits>
#include <numeric>
#include <unordered_map>
#include <vector>

namespace clusterseg {

GradientPair lab_gradients(const Image& lab) {
  const Index h = lab.height(), w = lab.width();
  GradientPair g{Image(lab.channels(), h, w), Image(lab.channels(), h, w)};
  for (Index c = 0; c < lab.channels(); ++c) {
    const auto src = lab.channel(c);
    g.dx.channel(c).leftCols(w - 1) = (src.rightCols(w - 1) - src.leftCols(w - 1)).cwiseAbs();
    g.dy.channel(c).topRows(h - 1) = (src.bottomRows(h - 1) - src.topRows(h - 1)).cwiseAbs();
  }
  return g;
}

double edge_weight(const RegionEdgeWeights& weights, int i, int j) {
  auto it = weights.find({std::min(i, j), std::max(i, j)});
  return it == weights.end() ? std::numeric_limits<double>::infinity() : it->second;
}

RegionEdgeWeights boundary_gradients(const Image& lab, const LabelMap& segmentation) {
  if (lab.height() != segmentation.rows() || lab.width() != segmentation.cols())
    throw ConfigError("boundary_gradients: segmentation size differs from image");
  const GradientPair grads = lab_gradients(lab);
  const BoundarySets sets = boundary_sets(segmentation);

  struct Accum {
    Eigen::Vector3d sum_x = Eigen::Vector3d::Zero(), sum_y = Eigen::Vector3d::Zero();
    Index n_x = 0, n_y = 0;
  };
  std::map<std::pair<int, int>, Accum> acc;
  for (const auto& [pair, pixels] : sets.horizontal) {
    auto& a = acc[{std::min(pair.first, pair.second), std::max(pair.first, pair.second)}];
    for (Index p : pixels) a.sum_x += grads.dx.data().col(p).head<3>();
    a.n_x += static_cast<Index>(pixels.size());
  }
  for (const auto& [pair, pixels] : sets.vertical) {
    auto& a = acc[{std::min(pair.first, pair.second), std::max(pair.first, pair.second)}];
    for (Index p : pixels) a.sum_y += grads.dy.data().col(p).head<3>();
    a.n_y += static_cast<Index>(pixels.size());
  }

  RegionEdgeWeights weights;
  for (const auto& [pair, a] : acc) {
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    if (a.n_x > 0) g += a.sum_x / static_cast<double>(a.n_x);
    if (a.n_y > 0) g += a.sum_y / static_cast<double>(a.n_y);
    weights[pair] = g.lpNorm<1>();
  }
  return weights;
}

LabelMap relabel_dense(const LabelMap& labels) {
  LabelMap out(labels.rows(), labels.cols());
  std::unordered_map<int, int> ids;
  for (Index i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = ids.try_emplace(labels.data()[i], static_cast<int>(ids.size()));
    out.data()[i] = it->second;
  }
  return out;
}

LabelMap graph_cut_merge(const LabelMap& segmentation, const RegionEdgeWeights& weights, double threshold) {
  if (!(threshold >= 0)) throw ConfigError("post-processing threshold must be >= 0");
  const LabelMap dense = relabel_dense(segmentation);
  std::unordered_map<int, int> to_dense;
  for (Index i = 0; i < segmentation.size(); ++i) to_dense.emplace(segmentation.data()[i], dense.data()[i]);

  std::vector<int> parent(to_dense.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  };
  for (const auto& [pair, weight] : weights) {
    if (!(weight < threshold)) continue;
    auto a = to_dense.find(pair.first), b = to_dense.find(pair.second);
    if (a == to_dense.end() || b == to_dense.end()) continue;
    const int ra = find(a->second), rb = find(b->second);
    if (ra != rb) parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
  }

  LabelMap merged(segmentation.rows(), segmentation.cols());
  for (Index i = 0; i < dense.size(); ++i) merged.data()[i] = find(dense.data()[i]);
  return relabel_dense(merged);
}

LabelMap postprocess(const Image& rgb, const LabelMap& segmentation, double threshold) {
  const Image lab = rgb_to_lab(rgb);
  return graph_cut_merge(segmentation, boundary_gradients(lab, segmentation), threshold);
}

}  // namespace clusterseg
