#ifndef CLUSTERSEG_LAYERS_HPP
#define CLUSTERSEG_LAYERS_HPP

#include "clusterseg/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace clusterseg {

// Every layer caches what its backward pass needs during forward(), so a
// layer instance is used exactly once per forward/backward cycle.

namespace detail {

/// Patch matrix of output rows [y0, y1) for a k x k "same" convolution (k
/// odd, zero padding k/2): (channels*k*k, (y1-y0)*W), written into `cols`.
template <typename Scalar>
void im2col_rows(const Tensor<Scalar>& in, Index k, Index y0, Index y1, RowMatrix<Scalar>& cols) {
  const Index h = in.height(), w = in.width(), r = k / 2;
  cols.resize(in.channels() * k * k, (y1 - y0) * w);
  cols.setZero();
  for (Index c = 0; c < in.channels(); ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        const Index dy = ky - r, dx = kx - r;
        const Index x0 = std::max<Index>(0, -dx), x1 = std::min<Index>(w, w - dx);
        if (x1 <= x0) continue;
        const Index ya = std::max<Index>(y0, -dy), yb = std::min<Index>(y1, h - dy);
        for (Index y = ya; y < yb; ++y) {
          cols.row(row).segment((y - y0) * w + x0, x1 - x0) =
              in.data().row(c).segment((y + dy) * w + x0 + dx, x1 - x0);
        }
      }
    }
  }
}

/// Adjoint of im2col_rows: accumulates `cols` into `out`.
template <typename Scalar>
void col2im_rows(const RowMatrix<Scalar>& cols, Index k, Index y0, Index y1, Tensor<Scalar>& out) {
  const Index h = out.height(), w = out.width(), r = k / 2;
  for (Index c = 0; c < out.channels(); ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        const Index dy = ky - r, dx = kx - r;
        const Index x0 = std::max<Index>(0, -dx), x1 = std::min<Index>(w, w - dx);
        if (x1 <= x0) continue;
        const Index ya = std::max<Index>(y0, -dy), yb = std::min<Index>(y1, h - dy);
        for (Index y = ya; y < yb; ++y) {
          out.data().row(c).segment((y + dy) * w + x0 + dx, x1 - x0) +=
              cols.row(row).segment((y - y0) * w + x0, x1 - x0);
        }
      }
    }
  }
}

/// (channels*k*k, H*W) patch matrix of the whole image.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& in, Index k) {
  RowMatrix<Scalar> cols;
  im2col_rows(in, k, 0, in.height(), cols);
  return cols;
}

/// Adjoint of im2col.
template <typename Scalar>
Tensor<Scalar> col2im(const RowMatrix<Scalar>& cols, Index channels, Index h, Index w, Index k) {
  Tensor<Scalar> out(channels, h, w);
  col2im_rows(cols, k, 0, h, out);
  return out;
}

/// Image rows per convolution block: keeps a block near 2048 pixels so the
/// patch matrix stays small whatever the image size.
inline Index rows_per_block(Index width) { return std::max<Index>(1, 2048 / std::max<Index>(1, width)); }

/// Per-thread patch buffer reused by every 3x3 convolution.
template <typename Scalar>
RowMatrix<Scalar>& scratch_cols() {
  thread_local RowMatrix<Scalar> cols;
  return cols;
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

}  // namespace detail

/// Stride-1 "same" convolution with a 1x1 or 3x3 kernel. Weight layout is
/// (out, in*k*k); the bias is optional because a convolution feeding batch
/// normalization has its bias cancelled exactly.
template <typename Scalar>
class Conv2d {
 public:
  using TensorT = Tensor<Scalar>;

  Conv2d() = default;
  Conv2d(const std::string& name, Index in_channels, Index out_channels, Index kernel, bool bias)
      : in_(in_channels), out_(out_channels), kernel_(kernel), has_bias_(bias),
        weight_(name + ".weight", out_channels, in_channels * kernel * kernel,
                {out_channels, in_channels, kernel, kernel}) {
    if (kernel != 1 && kernel != 3) throw ConfigError(name + ": kernel must be 1 or 3");
    if (in_channels < 1 || out_channels < 1) throw ConfigError(name + ": empty channel count");
    if (has_bias_) bias_ = Parameter<Scalar>(name + ".bias", out_channels, 1, {out_channels});
  }

  template <typename Rng>
  void init(Rng& rng) {
    init_uniform(weight_, in_ * kernel_ * kernel_, rng);
    if (has_bias_) bias_.value.setZero();
  }

  TensorT forward(const TensorT& x) {
    if (x.channels() != in_)
      throw ConfigError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                        std::to_string(x.channels()));
    input_ = x;
    typename TensorT::Matrix out(out_, x.pixels());
    if (kernel_ == 1) {
      out.noalias() = weight_.value * x.data();
    } else {
      auto& cols = detail::scratch_cols<Scalar>();
      const Index w = x.width(), step = detail::rows_per_block(w);
      for (Index y0 = 0; y0 < x.height(); y0 += step) {
        const Index y1 = std::min(x.height(), y0 + step);
        detail::im2col_rows(x, kernel_, y0, y1, cols);
        out.middleCols(y0 * w, (y1 - y0) * w).noalias() = weight_.value * cols;
      }
    }
    if (has_bias_) out.colwise() += bias_.value.col(0);
    return TensorT(x.height(), x.width(), std::move(out));
  }

  TensorT backward(const TensorT& grad, bool need_input_grad = true) {
    const auto& g = grad.data();
    if (has_bias_) bias_.grad.col(0) += g.rowwise().sum();
    if (kernel_ == 1) {
      weight_.grad.noalias() += g * input_.data().transpose();
      if (!need_input_grad) return {};
      return TensorT(grad.height(), grad.width(), weight_.value.transpose() * g);
    }
    TensorT dx;
    if (need_input_grad) dx = TensorT(in_, grad.height(), grad.width());
    auto& cols = detail::scratch_cols<Scalar>();
    const Index w = grad.width(), step = detail::rows_per_block(w);
    for (Index y0 = 0; y0 < grad.height(); y0 += step) {
      const Index y1 = std::min(grad.height(), y0 + step);
      const auto g_block = g.middleCols(y0 * w, (y1 - y0) * w);
      detail::im2col_rows(input_, kernel_, y0, y1, cols);
      weight_.grad.noalias() += g_block * cols.transpose();
      if (need_input_grad) {
        cols.noalias() = weight_.value.transpose() * g_block;
        detail::col2im_rows(cols, kernel_, y0, y1, dx);
      }
    }
    return dx;
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }
  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }

 private:
  Index in_ = 0, out_ = 0, kernel_ = 1;
  bool has_bias_ = false;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  TensorT input_;
};

/// Batch normalization for a single image: statistics always come from the
/// current input (population variance over the spatial extent), in training
/// and in inference alike.
template <typename Scalar>
class BatchNorm {
 public:
  using TensorT = Tensor<Scalar>;

  BatchNorm() = default;
  BatchNorm(const std::string& name, Index channels, Scalar eps = Scalar(1e-5))
      : channels_(channels), eps_(eps),
        gamma_(name + ".gamma", channels, 1, {channels}),
        beta_(name + ".beta", channels, 1, {channels}) {
    gamma_.value.setOnes();
  }

  void reset() {
    gamma_.value.setOnes();
    beta_.value.setZero();
  }

  TensorT forward(const TensorT& x) {
    if (x.channels() != channels_) throw ConfigError(gamma_.name + ": channel mismatch");
    if (x.pixels() < 2) throw ConfigError(gamma_.name + ": needs at least 2 spatial elements");
    const auto n = static_cast<Scalar>(x.pixels());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean = x.data().rowwise().sum() / n;
    normalized_ = x;
    normalized_.data().colwise() -= mean;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> var = normalized_.data().rowwise().squaredNorm() / n;
    inv_std_ = (var.array() + eps_).rsqrt().matrix();
    normalized_.data() = inv_std_.asDiagonal() * normalized_.data();
    TensorT out(x.height(), x.width(), gamma_.value.col(0).asDiagonal() * normalized_.data());
    out.data().colwise() += beta_.value.col(0);
    return out;
  }

  TensorT backward(const TensorT& grad) {
    const auto& g = grad.data();
    const auto& xh = normalized_.data();
    const auto n = static_cast<Scalar>(grad.pixels());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sum_g = g.rowwise().sum();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sum_gx = g.cwiseProduct(xh).rowwise().sum();
    gamma_.grad.col(0) += sum_gx;
    beta_.grad.col(0) += sum_g;
    typename TensorT::Matrix dx = n * g;
    dx.colwise() -= sum_g;
    dx -= sum_gx.asDiagonal() * xh;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scale =
        gamma_.value.col(0).cwiseProduct(inv_std_) / n;
    return TensorT(grad.height(), grad.width(), scale.asDiagonal() * dx);
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  Parameter<Scalar>& gamma() { return gamma_; }
  Parameter<Scalar>& beta() { return beta_; }

 private:
  Index channels_ = 0;
  Scalar eps_ = Scalar(1e-5);
  Parameter<Scalar> gamma_;
  Parameter<Scalar> beta_;
  TensorT normalized_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std_;
};

/// out = w_relu * max(x, 0) + w_tanh * tanh(x)
template <typename Scalar>
class ReluTanh {
 public:
  using TensorT = Tensor<Scalar>;

  explicit ReluTanh(Scalar w_relu = Scalar(1), Scalar w_tanh = Scalar(0.4))
      : w_relu_(w_relu), w_tanh_(w_tanh) {}

  static Scalar apply(Scalar x, Scalar w_relu, Scalar w_tanh) {
    return w_relu * std::max(x, Scalar(0)) + w_tanh * std::tanh(x);
  }

  TensorT forward(const TensorT& x) {
    input_ = x;
    TensorT out = x;
    out.data() = x.data().unaryExpr([this](Scalar v) { return apply(v, w_relu_, w_tanh_); });
    return out;
  }

  TensorT backward(const TensorT& grad) const {
    TensorT out = grad;
    out.data() = grad.data().binaryExpr(input_.data(), [this](Scalar g, Scalar v) {
      const Scalar t = std::tanh(v);
      return g * ((v > Scalar(0) ? w_relu_ : Scalar(0)) + w_tanh_ * (Scalar(1) - t * t));
    });
    return out;
  }

 private:
  Scalar w_relu_, w_tanh_;
  TensorT input_;
};

/// 2x2 stride-2 max pooling; ties resolve to the first window element in
/// row-major order.
template <typename Scalar>
class MaxPool2 {
 public:
  using TensorT = Tensor<Scalar>;

  TensorT forward(const TensorT& x) {
    if (x.height() % 2 != 0 || x.width() % 2 != 0)
      throw ConfigError("maxpool2 requires even height and width");
    in_h_ = x.height();
    in_w_ = x.width();
    const Index h = x.height() / 2, w = x.width() / 2;
    TensorT out(x.channels(), h, w);
    argmax_.assign(static_cast<std::size_t>(x.channels() * h * w), 0);
    for (Index c = 0; c < x.channels(); ++c) {
      for (Index y = 0; y < h; ++y) {
        for (Index xx = 0; xx < w; ++xx) {
          Index best = (2 * y) * in_w_ + 2 * xx;
          Scalar best_v = x.data()(c, best);
          for (Index k = 1; k < 4; ++k) {
            const Index idx = (2 * y + k / 2) * in_w_ + 2 * xx + k % 2;
            if (x.data()(c, idx) > best_v) {
              best_v = x.data()(c, idx);
              best = idx;
            }
          }
          out.data()(c, y * w + xx) = best_v;
          argmax_[static_cast<std::size_t>(c * h * w + y * w + xx)] = best;
        }
      }
    }
    return out;
  }

  TensorT backward(const TensorT& grad) const {
    TensorT out(grad.channels(), in_h_, in_w_);
    const Index n = grad.pixels();
    for (Index c = 0; c < grad.channels(); ++c)
      for (Index i = 0; i < n; ++i)
        out.data()(c, argmax_[static_cast<std::size_t>(c * n + i)]) += grad.data()(c, i);
    return out;
  }

 private:
  Index in_h_ = 0, in_w_ = 0;
  std::vector<Index> argmax_;
};

/// 2x2 stride-2 transposed convolution without bias; doubles H and W.
/// Weight layout is (out*4, in) with row index out*4 + dy*2 + dx.
template <typename Scalar>
class TransposedConv2 {
 public:
  using TensorT = Tensor<Scalar>;

  TransposedConv2() = default;
  TransposedConv2(const std::string& name, Index in_channels, Index out_channels)
      : in_(in_channels), out_(out_channels),
        weight_(name + ".weight", out_channels * 4, in_channels, {out_channels, 2, 2, in_channels}) {}

  template <typename Rng>
  void init(Rng& rng) {
    init_uniform(weight_, in_, rng);
  }

  TensorT forward(const TensorT& x) {
    if (x.channels() != in_) throw ConfigError(weight_.name + ": channel mismatch");
    input_ = x;
    const typename TensorT::Matrix z = weight_.value * x.data();
    const Index h = x.height(), w = x.width();
    TensorT out(out_, 2 * h, 2 * w);
    for (Index co = 0; co < out_; ++co)
      for (Index d = 0; d < 4; ++d)
        for (Index y = 0; y < h; ++y)
          for (Index xx = 0; xx < w; ++xx)
            out(co, 2 * y + d / 2, 2 * xx + d % 2) = z(co * 4 + d, y * w + xx);
    return out;
  }

  TensorT backward(const TensorT& grad) {
    const Index h = input_.height(), w = input_.width();
    typename TensorT::Matrix gz(out_ * 4, h * w);
    for (Index co = 0; co < out_; ++co)
      for (Index d = 0; d < 4; ++d)
        for (Index y = 0; y < h; ++y)
          for (Index xx = 0; xx < w; ++xx)
            gz(co * 4 + d, y * w + xx) = grad(co, 2 * y + d / 2, 2 * xx + d % 2);
    weight_.grad.noalias() += gz * input_.data().transpose();
    return TensorT(h, w, weight_.value.transpose() * gz);
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) { out.push_back(&weight_); }
  Parameter<Scalar>& weight() { return weight_; }

 private:
  Index in_ = 0, out_ = 0;
  Parameter<Scalar> weight_;
  TensorT input_;
};

/// Channel attention: s = sigmoid(conv1d(GAP(x))) over the channel axis
/// (zero padded, no bias), out_c = s_c * x_c.
template <typename Scalar>
class EcaAttention {
 public:
  using TensorT = Tensor<Scalar>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  EcaAttention() = default;
  EcaAttention(const std::string& name, Index channels, Index kernel = 3)
      : channels_(channels), kernel_(kernel), weight_(name + ".weight", 1, kernel, {kernel}) {
    if (kernel % 2 == 0 || channels < kernel)
      throw ConfigError(name + ": need odd kernel no larger than the channel count");
  }

  template <typename Rng>
  void init(Rng& rng) {
    init_uniform(weight_, kernel_, rng);
  }

  TensorT forward(const TensorT& x) {
    if (x.channels() != channels_) throw ConfigError(weight_.name + ": channel mismatch");
    input_ = x;
    pooled_ = x.data().rowwise().mean();
    const Vector z = conv1d(pooled_);
    scale_ = z.unaryExpr([](Scalar v) { return detail::sigmoid(v); });
    return TensorT(x.height(), x.width(), scale_.asDiagonal() * x.data());
  }

  TensorT backward(const TensorT& grad) {
    const auto& g = grad.data();
    const Vector dscale = g.cwiseProduct(input_.data()).rowwise().sum();
    const Vector dz = dscale.cwiseProduct(scale_).cwiseProduct((Vector::Ones(channels_) - scale_));
    const Index r = kernel_ / 2;
    Vector dpooled = Vector::Zero(channels_);
    for (Index c = 0; c < channels_; ++c) {
      for (Index k = 0; k < kernel_; ++k) {
        const Index j = c + k - r;
        if (j < 0 || j >= channels_) continue;
        weight_.grad(0, k) += dz(c) * pooled_(j);
        dpooled(j) += dz(c) * weight_.value(0, k);
      }
    }
    typename TensorT::Matrix dx = scale_.asDiagonal() * g;
    dx.colwise() += dpooled / static_cast<Scalar>(grad.pixels());
    return TensorT(grad.height(), grad.width(), std::move(dx));
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) { out.push_back(&weight_); }
  Parameter<Scalar>& weight() { return weight_; }
  const Vector& scale() const { return scale_; }

 private:
  Vector conv1d(const Vector& v) const {
    const Index r = kernel_ / 2;
    Vector z = Vector::Zero(channels_);
    for (Index c = 0; c < channels_; ++c)
      for (Index k = 0; k < kernel_; ++k) {
        const Index j = c + k - r;
        if (j >= 0 && j < channels_) z(c) += weight_.value(0, k) * v(j);
      }
    return z;
  }

  Index channels_ = 0, kernel_ = 3;
  Parameter<Scalar> weight_;
  TensorT input_;
  Vector pooled_;
  Vector scale_;
};

/// Cubic convolution kernel (Keys, a = -0.5).
template <typename Scalar>
Scalar cubic_kernel(Scalar t, Scalar a = Scalar(-0.5)) {
  t = std::abs(t);
  if (t <= Scalar(1)) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < Scalar(2)) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return Scalar(0);
}

/// Half-resolution bicubic resampling with pixel-center alignment and
/// replicated borders. Each output sample sits between input pixels 2i and
/// 2i+1, so its four taps are 2i-1..2i+2 at distances 1.5, 0.5, 0.5, 1.5.
template <typename Scalar>
Tensor<Scalar> bicubic_down2(const Tensor<Scalar>& in) {
  if (in.height() % 2 != 0 || in.width() % 2 != 0)
    throw ConfigError("bicubic_down2 requires even height and width");
  const Index h = in.height(), w = in.width(), oh = h / 2, ow = w / 2;
  const std::array<Scalar, 4> taps = {cubic_kernel(Scalar(1.5)), cubic_kernel(Scalar(0.5)),
                                      cubic_kernel(Scalar(0.5)), cubic_kernel(Scalar(1.5))};
  auto clamp = [](Index i, Index n) { return std::clamp<Index>(i, 0, n - 1); };

  Tensor<Scalar> out(in.channels(), oh, ow);
  RowMatrix<Scalar> horiz(h, ow);
  for (Index c = 0; c < in.channels(); ++c) {
    const auto src = in.channel(c);
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < ow; ++x) {
        Scalar acc = 0;
        for (Index k = 0; k < 4; ++k) acc += taps[k] * src(y, clamp(2 * x - 1 + k, w));
        horiz(y, x) = acc;
      }
    auto dst = out.channel(c);
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x) {
        Scalar acc = 0;
        for (Index k = 0; k < 4; ++k) acc += taps[k] * horiz(clamp(2 * y - 1 + k, h), x);
        dst(y, x) = acc;
      }
  }
  return out;
}

}  // namespace clusterseg

#endif  // CLUSTERSEG_LAYERS_HPP
