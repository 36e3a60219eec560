#ifndef CLUSTERSEG_TENSOR_HPP
#define CLUSTERSEG_TENSOR_HPP

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace clusterseg {

using Index = Eigen::Index;

/// Raised when shapes or hyperparameters are inconsistent. Always thrown
/// before any optimization work starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward or backward pass produces a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense channels x height x width tensor. Storage is a row-major
/// (channels, height*width) matrix, so each channel is one contiguous row
/// and pixel (y, x) lives at column y*width + x.
template <typename Scalar>
class Tensor {
 public:
  using Matrix = RowMatrix<Scalar>;
  using ChannelMap = Eigen::Map<Matrix>;
  using ConstChannelMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  Tensor(Index channels, Index height, Index width)
      : height_(height), width_(width), data_(Matrix::Zero(channels, height * width)) {}
  Tensor(Index height, Index width, Matrix data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.cols() != height * width)
      throw ConfigError("tensor data does not match height*width");
  }

  static Tensor constant(Index channels, Index height, Index width, Scalar value) {
    Tensor t(channels, height, width);
    t.data_.setConstant(value);
    return t;
  }

  Index channels() const { return data_.rows(); }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index pixels() const { return height_ * width_; }

  Matrix& data() { return data_; }
  const Matrix& data() const { return data_; }

  Scalar& operator()(Index c, Index y, Index x) { return data_(c, y * width_ + x); }
  Scalar operator()(Index c, Index y, Index x) const { return data_(c, y * width_ + x); }

  /// height x width view of one channel.
  ChannelMap channel(Index c) { return ChannelMap(data_.row(c).data(), height_, width_); }
  ConstChannelMap channel(Index c) const {
    return ConstChannelMap(data_.row(c).data(), height_, width_);
  }

  bool same_shape(const Tensor& other) const {
    return channels() == other.channels() && height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  Index height_ = 0;
  Index width_ = 0;
  Matrix data_;
};

/// Trainable weights with their gradient and momentum buffers. The value
/// matrix layout is chosen by the owning layer; `shape` records the logical
/// dimensions for snapshots.
template <typename Scalar>
struct Parameter {
  using Matrix = RowMatrix<Scalar>;

  Parameter() = default;
  Parameter(std::string id, Index rows, Index cols, std::vector<Index> logical_shape = {})
      : name(std::move(id)),
        shape(logical_shape.empty() ? std::vector<Index>{rows, cols} : std::move(logical_shape)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        momentum(Matrix::Zero(rows, cols)) {}

  std::string name;
  std::vector<Index> shape;
  Matrix value;
  Matrix grad;
  Matrix momentum;

  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

/// uniform(-b, b) with b = 1/sqrt(fan_in).
template <typename Scalar, typename Rng>
void init_uniform(Parameter<Scalar>& p, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng));
}

struct OptimizerConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int iterations = 150;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (iterations < 1) throw ConfigError("iteration count must be >= 1");
  }
};

/// Momentum SGD: m <- mu*m + g; p <- p - lr*m; then clears gradients.
/// Throws DivergenceError (leaving every parameter untouched) if any
/// gradient is non-finite.
template <typename Scalar>
void sgd_step(const std::vector<Parameter<Scalar>*>& params, const OptimizerConfig& cfg) {
  for (const auto* p : params) {
    if (!p->grad.allFinite()) throw DivergenceError("non-finite gradient in parameter " + p->name);
  }
  const auto mu = static_cast<Scalar>(cfg.momentum);
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  for (auto* p : params) {
    p->momentum = mu * p->momentum + p->grad;
    p->value -= lr * p->momentum;
    p->zero_grad();
  }
}

/// Stacks tensors of equal spatial size along the channel axis.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw ConfigError("concat: spatial sizes differ");
  Tensor<Scalar> out(a.channels() + b.channels(), a.height(), a.width());
  out.data().topRows(a.channels()) = a.data();
  out.data().bottomRows(b.channels()) = b.data();
  return out;
}

/// Inverse of concat_channels for gradients: returns (first `channels` rows, rest).
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& t, Index channels) {
  const Index rest = t.channels() - channels;
  return {Tensor<Scalar>(t.height(), t.width(), t.data().topRows(channels)),
          Tensor<Scalar>(t.height(), t.width(), t.data().bottomRows(rest))};
}

}  // namespace clusterseg

#endif  // CLUSTERSEG_TENSOR_HPP
