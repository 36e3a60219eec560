#include "clusterseg/spstats.hpp"

#include <cmath>

namespace clusterseg {

namespace {

void check_shape(const Tensor<double>& t, const SuperpixelMap& sp, const char* what) {
  if (t.height() != sp.labels.rows() || t.width() != sp.labels.cols())
    throw ConfigError(std::string(what) + ": size differs from the superpixel map");
}

// Per-superpixel means and population standard deviations, (count x channels).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> moments(const Tensor<double>& values, const SuperpixelMap& sp) {
  const Index channels = values.channels();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(sp.count, channels);
  Eigen::MatrixXd dev = Eigen::MatrixXd::Zero(sp.count, channels);
  for (int k = 0; k < sp.count; ++k) {
    const auto& px = sp.members[static_cast<std::size_t>(k)];
    const double inv = 1.0 / static_cast<double>(px.size());
    for (Index i : px) mean.row(k) += values.data().col(i).transpose();
    mean.row(k) *= inv;
    for (Index i : px) dev.row(k) += (values.data().col(i).transpose() - mean.row(k)).cwiseAbs2();
    dev.row(k) = (dev.row(k) * inv).cwiseSqrt();
  }
  return {mean, dev};
}

}  // namespace

Eigen::MatrixXd region_stats(const Tensor<double>& values, const SuperpixelMap& sp) {
  check_shape(values, sp, "region_stats");
  auto [mean, dev] = moments(values, sp);
  return mean + dev;
}

Tensor<double> region_stats_backward(const Tensor<double>& values, const SuperpixelMap& sp,
                                     const Eigen::MatrixXd& grad) {
  check_shape(values, sp, "region_stats_backward");
  auto [mean, dev] = moments(values, sp);
  Tensor<double> out(values.channels(), values.height(), values.width());
  for (int k = 0; k < sp.count; ++k) {
    const auto& px = sp.members[static_cast<std::size_t>(k)];
    const double inv = 1.0 / static_cast<double>(px.size());
    for (Index c = 0; c < values.channels(); ++c) {
      const double g = grad(k, c);
      const double s = dev(k, c);
      for (Index i : px) {
        double d = inv;
        if (s > 0) d += (values.data()(c, i) - mean(k, c)) * inv / s;
        out.data()(c, i) = g * d;
      }
    }
  }
  return out;
}

RegionFeatures region_features(const Tensor<double>& scores, const Image& image, const SuperpixelMap& sp) {
  return {region_stats(scores, sp), region_stats(image, sp)};
}

Eigen::MatrixXd affinity(const RegionFeatures& features, const AdjacencyMatrix& adjacency,
                         double alpha1, double alpha2) {
  if (!(alpha1 > 0) || !(alpha2 > 0)) throw ConfigError("affinity scales must be positive");
  const Index k = adjacency.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      if (adjacency(i, j) == 0) continue;
      const double dv = (features.deep.row(i) - features.deep.row(j)).squaredNorm();
      const double de = (features.shallow.row(i) - features.shallow.row(j)).squaredNorm();
      a(i, j) = a(j, i) = std::exp(-dv / alpha1 - de / alpha2);
    }
  }
  return a;
}

Tensor<double> softmax_channels(const Tensor<double>& scores) {
  Tensor<double> p = scores;
  auto& d = p.data();
  const Eigen::RowVectorXd peak = d.colwise().maxCoeff();
  d.rowwise() -= peak;
  d = d.array().exp().matrix();
  Eigen::RowVectorXd inv = d.colwise().sum().cwiseInverse();
  d = d * inv.asDiagonal();
  return p;
}

Eigen::MatrixXd superpixel_probs(const Tensor<double>& probabilities, const SuperpixelMap& sp) {
  check_shape(probabilities, sp, "superpixel_probs");
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(sp.count, probabilities.channels());
  for (int k = 0; k < sp.count; ++k) {
    const auto& px = sp.members[static_cast<std::size_t>(k)];
    for (Index i : px) h.row(k) += probabilities.data().col(i).transpose();
    h.row(k) /= static_cast<double>(px.size());
  }
  return h;
}

Tensor<double> superpixel_probs_backward(const Tensor<double>& probabilities, const SuperpixelMap& sp,
                                         const Eigen::MatrixXd& grad_h) {
  check_shape(probabilities, sp, "superpixel_probs_backward");
  Tensor<double> out(probabilities.channels(), probabilities.height(), probabilities.width());
  for (int k = 0; k < sp.count; ++k) {
    const auto& px = sp.members[static_cast<std::size_t>(k)];
    const Eigen::VectorXd g = grad_h.row(k).transpose() / static_cast<double>(px.size());
    for (Index i : px) {
      const auto p = probabilities.data().col(i);
      const double dot = p.dot(g);
      out.data().col(i) = p.cwiseProduct(g - Eigen::VectorXd::Constant(g.size(), dot));
    }
  }
  return out;
}

}  // namespace clusterseg
