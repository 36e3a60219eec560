#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "clusterseg/layers.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace clusterseg;
using testutil::numeric_gradient;
using testutil::random_tensor;
using testutil::relative_error;
using testutil::storage;

namespace {

// Direct sliding-window "same" convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const RowMatrix<double>& weight, const Eigen::VectorXd& bias,
                          Index k) {
  const Index cin = x.channels(), cout = weight.rows(), h = x.height(), w = x.width(), r = k / 2;
  Tensor<double> out(cout, h, w);
  for (Index o = 0; o < cout; ++o)
    for (Index y = 0; y < h; ++y)
      for (Index xx = 0; xx < w; ++xx) {
        double acc = bias(o);
        for (Index c = 0; c < cin; ++c)
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
              const Index sy = y + ky - r, sx = xx + kx - r;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              acc += weight(o, (c * k + ky) * k + kx) * x(c, sy, sx);
            }
        out(o, y, xx) = acc;
      }
  return out;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) { return a.data().cwiseProduct(b.data()).sum(); }

// Pushes every entry at least `gap` away from zero.
void avoid_zero(Tensor<double>& t, double gap) {
  for (Index i = 0; i < t.data().size(); ++i) {
    double& v = t.data().data()[i];
    if (std::abs(v) < gap) v = v < 0 ? v - 2 * gap : v + 2 * gap;
  }
}

}  // namespace

TEST_CASE("conv2d matches a direct sliding-window oracle") {
  std::mt19937_64 rng(7);
  for (Index k : {1, 3}) {
    Conv2d<double> conv("c", 1, 2, k, true);
    conv.init(rng);
    conv.bias().value << 0.3, -0.7;
    const auto x = random_tensor(1, 4, 4, rng);
    const auto y = conv.forward(x);
    const auto ref = naive_conv(x, conv.weight().value, conv.bias().value.col(0), k);
    CHECK((y.data() - ref.data()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conv2d blocks rows on wide images without changing the result") {
  std::mt19937_64 rng(8);
  Conv2d<double> conv("c", 3, 4, 3, true);
  conv.init(rng);
  const auto x = random_tensor(3, 37, 300, rng);  // several row blocks, ragged last block
  const auto y = conv.forward(x);
  const auto ref = naive_conv(x, conv.weight().value, conv.bias().value.col(0), 3);
  CHECK((y.data() - ref.data()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity 1x1 and centre-tap 3x3 convolutions are the identity map") {
  std::mt19937_64 rng(1);
  const auto x = random_tensor(3, 5, 6, rng);
  Conv2d<double> one("a", 3, 3, 1, true);
  one.weight().value.setIdentity();
  CHECK((one.forward(x).data() - x.data()).cwiseAbs().maxCoeff() < 1e-12);

  Conv2d<double> three("b", 3, 3, 3, false);
  three.weight().value.setZero();
  for (Index c = 0; c < 3; ++c) three.weight().value(c, c * 9 + 4) = 1.0;
  CHECK((three.forward(x).data() - x.data()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("3x3 convolution of a zero input is the bias") {
  std::mt19937_64 rng(2);
  Conv2d<double> conv("c", 2, 3, 3, true);
  conv.init(rng);
  conv.bias().value << 1.0, -2.0, 0.5;
  const auto y = conv.forward(Tensor<double>(2, 4, 5));
  for (Index c = 0; c < 3; ++c) CHECK((y.data().row(c).array() == conv.bias().value(c, 0)).all());
}

TEST_CASE("conv2d rejects a channel mismatch") {
  Conv2d<double> conv("c", 2, 3, 3, true);
  CHECK_THROWS_AS(conv.forward(Tensor<double>(3, 4, 4)), ConfigError);
  CHECK_THROWS_AS(Conv2d<double>("bad", 2, 3, 5, true), ConfigError);
}

TEST_CASE("conv2d gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    for (Index k : {1, 3}) {
      Conv2d<double> conv("c", 3, 4, k, true);
      conv.init(rng);
      auto x = random_tensor(3, 6, 5, rng);
      const auto r = random_tensor(4, 6, 5, rng);
      const auto f = [&] { return dot(conv.forward(x), r); };
      conv.forward(x);
      const auto dx = conv.backward(r);
      CHECK(relative_error(storage(dx.data()), numeric_gradient(f, x.data(), 1e-5)) < 1e-4);
      CHECK(relative_error(storage(conv.weight().grad), numeric_gradient(f, conv.weight().value, 1e-5)) < 1e-4);
      CHECK(relative_error(storage(conv.bias().grad), numeric_gradient(f, conv.bias().value, 1e-5)) < 1e-4);
    }
  }
}

TEST_CASE("batchnorm normalizes each channel") {
  std::mt19937_64 rng(3);
  BatchNorm<double> bn("bn", 3);
  // Wide inputs: the normalized variance is var / (var + eps), within 1e-6 of
  // 1 once var >= 10.
  const auto x = random_tensor(3, 8, 8, rng, -10.0, 10.0);
  const auto y = bn.forward(x);
  for (Index c = 0; c < 3; ++c) {
    const double mean = y.data().row(c).mean();
    const double var = (y.data().row(c).array() - mean).square().mean();
    const double in_mean = x.data().row(c).mean();
    const double in_var = (x.data().row(c).array() - in_mean).square().mean();
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
    CHECK(std::abs(var - in_var / (in_var + 1e-5)) < 1e-12);
  }
}

TEST_CASE("batchnorm matches its definition and maps constant channels to beta") {
  BatchNorm<double> bn("bn", 2);
  bn.gamma().value << 2.0, 3.0;
  bn.beta().value << 0.25, -1.5;
  Tensor<double> x(2, 2, 2);
  x.data().row(0) << 1, 2, 3, 6;
  x.data().row(1).setConstant(4.0);
  const auto y = bn.forward(x);
  const double m = 3.0, var = (4 + 1 + 0 + 9) / 4.0;
  for (Index i = 0; i < 4; ++i) CHECK(y.data()(0, i) == doctest::Approx(2.0 * (x.data()(0, i) - m) / std::sqrt(var + 1e-5) + 0.25).epsilon(1e-13));
  CHECK((y.data().row(1).array() == -1.5).all());
  CHECK_THROWS_AS(bn.forward(Tensor<double>(2, 1, 1)), ConfigError);
}

TEST_CASE("batchnorm gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    BatchNorm<double> bn("bn", 4);
    bn.gamma().value = Eigen::VectorXd::Random(4) + Eigen::VectorXd::Constant(4, 1.5);
    bn.beta().value = Eigen::VectorXd::Random(4);
    auto x = random_tensor(4, 8, 8, rng);
    const auto r = random_tensor(4, 8, 8, rng);
    const auto f = [&] { return dot(bn.forward(x), r); };
    bn.forward(x);
    const auto dx = bn.backward(r);
    CHECK(relative_error(storage(dx.data()), numeric_gradient(f, x.data(), 1e-5)) < 1e-4);
    CHECK(relative_error(storage(bn.gamma().grad), numeric_gradient(f, bn.gamma().value, 1e-5)) < 1e-4);
    CHECK(relative_error(storage(bn.beta().grad), numeric_gradient(f, bn.beta().value, 1e-5)) < 1e-4);
  }
}

TEST_CASE("relu_tanh values") {
  CHECK(ReluTanh<double>::apply(0.0, 1.0, 0.4) == 0.0);
  CHECK(ReluTanh<double>::apply(1.0, 1.0, 0.4) == doctest::Approx(1.30464).epsilon(1e-5));
  // 0.4 * tanh(-2) = -0.3856110...
  CHECK(ReluTanh<double>::apply(-2.0, 1.0, 0.4) == doctest::Approx(-0.385611).epsilon(1e-6));
  CHECK(ReluTanh<double>::apply(-2.0, 1.0, 0.4) == doctest::Approx(0.4 * std::tanh(-2.0)).epsilon(1e-15));
  CHECK(ReluTanh<double>::apply(1.0, 1.0, 0.4) == doctest::Approx(1.0 + 0.4 * std::tanh(1.0)).epsilon(1e-15));
}

TEST_CASE("relu_tanh gradient away from the kink") {
  std::mt19937_64 rng(4);
  ReluTanh<double> act;
  auto x = random_tensor(4, 8, 8, rng, -3.0, 3.0);
  avoid_zero(x, 1e-3);
  const auto r = random_tensor(4, 8, 8, rng);
  const auto f = [&] { return dot(act.forward(x), r); };
  act.forward(x);
  const auto dx = act.backward(r);
  CHECK(relative_error(storage(dx.data()), numeric_gradient(f, x.data(), 1e-5)) < 1e-4);
}

TEST_CASE("maxpool2 forward, tie rule and gradient") {
  MaxPool2<double> pool;
  Tensor<double> x(1, 2, 2);
  x.data() << 1, 2, 3, 4;
  CHECK(pool.forward(x).data()(0, 0) == 4.0);

  const auto c = Tensor<double>::constant(2, 4, 6, 1.5);
  const auto y = pool.forward(c);
  CHECK(y.height() == 2);
  CHECK(y.width() == 3);
  CHECK((y.data().array() == 1.5).all());
  // All four tied: the gradient goes to the top-left element.
  Tensor<double> g = Tensor<double>::constant(2, 2, 3, 1.0);
  const auto dx = pool.backward(g);
  CHECK(dx(0, 0, 0) == 1.0);
  CHECK(dx(0, 0, 1) == 0.0);
  CHECK(dx(0, 1, 0) == 0.0);
  CHECK(dx.data().sum() == doctest::Approx(12.0));

  CHECK_THROWS_AS(pool.forward(Tensor<double>(1, 3, 4)), ConfigError);

  std::mt19937_64 rng(5);
  // A permutation of well-separated values: no ties within 1e-3.
  Tensor<double> xr(3, 8, 8);
  std::vector<double> vals(static_cast<std::size_t>(xr.data().size()));
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
  std::shuffle(vals.begin(), vals.end(), rng);
  std::copy(vals.begin(), vals.end(), xr.data().data());
  const auto r = random_tensor(3, 4, 4, rng);
  const auto f = [&] { return dot(pool.forward(xr), r); };
  pool.forward(xr);
  const auto dxr = pool.backward(r);
  CHECK(relative_error(storage(dxr.data()), numeric_gradient(f, xr.data(), 1e-5)) < 1e-4);
}

TEST_CASE("bicubic_down2 preserves constants and linear ramps") {
  const auto c = Tensor<double>::constant(3, 8, 10, 0.7);
  const auto d = bicubic_down2(c);
  CHECK(d.height() == 4);
  CHECK(d.width() == 5);
  CHECK((d.data().array() - 0.7).abs().maxCoeff() < 1e-12);

  Tensor<double> ramp(1, 6, 16);
  for (Index y = 0; y < 6; ++y)
    for (Index x = 0; x < 16; ++x) ramp(0, y, x) = 0.1 * x + 0.3;
  const auto r = bicubic_down2(ramp);
  // Output sample j sits at input coordinate 2j + 0.5; interior taps do not
  // touch the border.
  for (Index y = 0; y < 3; ++y)
    for (Index j = 1; j < 7; ++j) CHECK(std::abs(r(0, y, j) - (0.1 * (2 * j + 0.5) + 0.3)) < 1e-9);

  CHECK_THROWS_AS(bicubic_down2(Tensor<double>(1, 5, 4)), ConfigError);
}

TEST_CASE("bicubic_down2 matches a direct kernel-summation oracle on a checkerboard") {
  Tensor<double> board(1, 8, 8);
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 8; ++x) board(0, y, x) = (x + y) % 2 == 0 ? 1.0 : 0.0;
  // Keys cubic written out independently, a = -0.5.
  const auto keys = [](double t) {
    t = std::abs(t);
    if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
    if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
    return 0.0;
  };
  const auto out = bicubic_down2(board);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) {
      const double cy = 2 * i + 0.5, cx = 2 * j + 0.5;
      double acc = 0;
      for (Index sy = -2; sy < 10; ++sy)
        for (Index sx = -2; sx < 10; ++sx) {
          const double wy = keys(cy - sy), wx = keys(cx - sx);
          if (wy == 0 || wx == 0) continue;
          const Index py = std::clamp<Index>(sy, 0, 7), px = std::clamp<Index>(sx, 0, 7);
          acc += wy * wx * board(0, py, px);
        }
      CHECK(std::abs(out(0, i, j) - acc) < 1e-9);
    }
}

TEST_CASE("transposed_conv2 examples and gradient") {
  TransposedConv2<double> up("up", 1, 1);
  up.weight().value.setOnes();
  const auto y = up.forward(Tensor<double>::constant(1, 3, 2, 0.8));
  CHECK(y.height() == 6);
  CHECK(y.width() == 4);
  CHECK((y.data().array() == 0.8).all());
  CHECK(up.forward(Tensor<double>(1, 3, 2)).data().cwiseAbs().maxCoeff() == 0.0);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(200 + seed);
    TransposedConv2<double> t("t", 3, 2);
    t.init(rng);
    auto x = random_tensor(3, 4, 3, rng);
    const auto r = random_tensor(2, 8, 6, rng);
    const auto f = [&] { return dot(t.forward(x), r); };
    t.forward(x);
    const auto dx = t.backward(r);
    CHECK(relative_error(storage(dx.data()), numeric_gradient(f, x.data(), 1e-5)) < 1e-4);
    CHECK(relative_error(storage(t.weight().grad), numeric_gradient(f, t.weight().value, 1e-5)) < 1e-4);
  }
}

TEST_CASE("eca_attention examples") {
  std::mt19937_64 rng(9);
  EcaAttention<double> eca("eca", 4);
  eca.weight().value.setZero();
  const auto x = random_tensor(4, 3, 3, rng);
  const auto y = eca.forward(x);
  CHECK(((y.data() - 0.5 * x.data()).cwiseAbs().maxCoeff()) < 1e-15);

  // Single centre tap w: channel c is scaled by sigmoid(w * mean_c).
  eca.weight().value << 0.0, 1.7, 0.0;
  Tensor<double> one(4, 2, 2);
  one.data().row(2) << 1.0, 2.0, 3.0, 6.0;
  eca.forward(one);
  CHECK(eca.scale()(2) == doctest::Approx(1.0 / (1.0 + std::exp(-1.7 * 3.0))).epsilon(1e-14));
  CHECK(eca.scale()(0) == doctest::Approx(0.5));

  CHECK_THROWS_AS(EcaAttention<double>("bad", 2, 3), ConfigError);
}

TEST_CASE("eca_attention gradient through pooling, conv1d and sigmoid") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(300 + seed);
    EcaAttention<double> eca("eca", 4);
    eca.init(rng);
    eca.weight().value *= 3.0;
    auto x = random_tensor(4, 8, 8, rng);
    const auto r = random_tensor(4, 8, 8, rng);
    const auto f = [&] { return dot(eca.forward(x), r); };
    eca.forward(x);
    const auto dx = eca.backward(r);
    CHECK(relative_error(storage(dx.data()), numeric_gradient(f, x.data(), 1e-5)) < 1e-4);
    CHECK(relative_error(storage(eca.weight().grad), numeric_gradient(f, eca.weight().value, 1e-5)) < 1e-4);
  }
}

TEST_CASE("sgd_step recurrences") {
  Parameter<double> p("p", 1, 2, {2});
  p.value << 1.0, -1.0;
  OptimizerConfig cfg;

  SUBCASE("zero gradient is a no-op") {
    sgd_step<double>({&p}, cfg);
    CHECK(p.value(0, 0) == 1.0);
    CHECK(p.momentum.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("plain gradient descent without momentum") {
    cfg.momentum = 0.0;
    p.grad << 2.0, 4.0;
    sgd_step<double>({&p}, cfg);
    CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.05 * 2.0));
    CHECK(p.value(0, 1) == doctest::Approx(-1.0 - 0.05 * 4.0));
    CHECK(p.grad.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("two momentum steps with a constant gradient") {
    p.grad << 1.0, 1.0;
    sgd_step<double>({&p}, cfg);
    CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.05).epsilon(1e-15));
    p.grad << 1.0, 1.0;
    sgd_step<double>({&p}, cfg);
    CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.05 - 0.05 * 1.9).epsilon(1e-15));
  }
  SUBCASE("non-finite gradient aborts before any update") {
    Parameter<double> q("q", 1, 1, {1});
    q.grad(0, 0) = 1.0;
    p.grad << 1.0, std::nan("");
    CHECK_THROWS_AS(sgd_step<double>({&q, &p}, cfg), DivergenceError);
    CHECK(q.value(0, 0) == 0.0);
    CHECK(p.value(0, 0) == 1.0);
  }
}

TEST_CASE("optimizer config validation") {
  CHECK_NOTHROW(OptimizerConfig{}.validate());
  CHECK_THROWS_AS((OptimizerConfig{0.0, 0.9, 150}).validate(), ConfigError);
  CHECK_THROWS_AS((OptimizerConfig{0.05, 1.0, 150}).validate(), ConfigError);
  CHECK_THROWS_AS((OptimizerConfig{0.05, 0.9, 0}).validate(), ConfigError);
}

TEST_CASE("parameters start with zero momentum and seeded uniform weights") {
  std::mt19937_64 a(11), b(11);
  Conv2d<double> c1("c", 4, 5, 3, true), c2("c", 4, 5, 3, true);
  c1.init(a);
  c2.init(b);
  CHECK(c1.weight().value == c2.weight().value);
  CHECK(c1.weight().value.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(36.0));
  CHECK(c1.weight().momentum.cwiseAbs().maxCoeff() == 0.0);
  CHECK(c1.bias().value.cwiseAbs().maxCoeff() == 0.0);
}
