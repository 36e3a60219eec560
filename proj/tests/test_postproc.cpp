#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "clusterseg/postproc.hpp"
#include "clusterseg/superpix.hpp"
#include "test_util.hpp"

#include <limits>
#include <map>
#include <set>

using namespace clusterseg;
using testutil::random_labels;
using testutil::random_tensor;

namespace {

// Textbook sRGB -> XYZ (D65, 0..1) -> Lab, written out per step.
Eigen::Vector3d lab_oracle(double r, double g, double b) {
  auto linear = [](double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); };
  const double rl = linear(r), gl = linear(g), bl = linear(b);
  const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  auto f = [](double t) {
    const double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
  };
  const double fx = f(x / 0.95047), fy = f(y / 1.0), fz = f(z / 1.08883);
  return {116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)};
}

// Exhaustive Delta: scan every pixel and its right/lower neighbour.
RegionEdgeWeights delta_oracle(const Image& lab, const LabelMap& seg) {
  struct Sum {
    double x[3] = {0, 0, 0}, y[3] = {0, 0, 0};
    int nx = 0, ny = 0;
  };
  std::map<std::pair<int, int>, Sum> sums;
  for (Index m = 0; m < seg.rows(); ++m)
    for (Index n = 0; n < seg.cols(); ++n) {
      const int a = seg(m, n);
      if (n + 1 < seg.cols() && seg(m, n + 1) != a) {
        auto& s = sums[{std::min(a, seg(m, n + 1)), std::max(a, seg(m, n + 1))}];
        for (int c = 0; c < 3; ++c) s.x[c] += std::abs(lab(c, m, n + 1) - lab(c, m, n));
        ++s.nx;
      }
      if (m + 1 < seg.rows() && seg(m + 1, n) != a) {
        auto& s = sums[{std::min(a, seg(m + 1, n)), std::max(a, seg(m + 1, n))}];
        for (int c = 0; c < 3; ++c) s.y[c] += std::abs(lab(c, m + 1, n) - lab(c, m, n));
        ++s.ny;
      }
    }
  RegionEdgeWeights out;
  for (const auto& [pair, s] : sums) {
    double total = 0;
    for (int c = 0; c < 3; ++c) {
      const double gx = s.nx ? s.x[c] / s.nx : 0, gy = s.ny ? s.y[c] / s.ny : 0;
      total += std::abs(gx + gy);
    }
    out[pair] = total;
  }
  return out;
}

int segment_count(const LabelMap& m) {
  return static_cast<int>(std::set<int>(m.data(), m.data() + m.size()).size());
}

// Every output segment is a union of input segments: each input label maps
// to a single output label.
bool coarsens(const LabelMap& input, const LabelMap& output) {
  std::map<int, int> image_of;
  for (Index i = 0; i < input.size(); ++i) {
    auto [it, inserted] = image_of.emplace(input.data()[i], output.data()[i]);
    if (!inserted && it->second != output.data()[i]) return false;
  }
  return true;
}

// Blocky random segmentation: a coarse random map upsampled by `cell`.
LabelMap blocky_labels(Index h, Index w, Index cell, int count, std::mt19937_64& rng) {
  const auto coarse = random_labels((h + cell - 1) / cell, (w + cell - 1) / cell, count, rng);
  LabelMap m(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) m(y, x) = coarse(y / cell, x / cell);
  return m;
}

}  // namespace

TEST_CASE("CIELAB conversion") {
  const auto white = srgb_to_lab({1, 1, 1});
  CHECK(white.x() == doctest::Approx(100).epsilon(1e-4));
  CHECK(std::abs(white.y()) < 0.01);
  CHECK(std::abs(white.z()) < 0.01);

  const auto black = srgb_to_lab({0, 0, 0});
  CHECK(black.cwiseAbs().maxCoeff() < 0.01);

  const auto red = srgb_to_lab({1, 0, 0});
  const auto want = lab_oracle(1, 0, 0);
  CHECK((red - want).cwiseAbs().maxCoeff() < 0.05);
  CHECK(red.x() == doctest::Approx(53.24).epsilon(1e-3));

  std::mt19937_64 rng(50);
  const auto img = random_tensor(3, 4, 5, rng, 0.0, 1.0);
  const auto lab = rgb_to_lab(img);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 5; ++x) {
      const auto o = lab_oracle(img(0, y, x), img(1, y, x), img(2, y, x));
      for (int c = 0; c < 3; ++c) CHECK(std::abs(lab(c, y, x) - o(c)) < 0.05);
    }
}

TEST_CASE("Lab gradients are forward differences with a zero last column and row") {
  std::mt19937_64 rng(51);
  const auto lab = random_tensor(3, 4, 5, rng, -50, 50);
  const auto g = lab_gradients(lab);
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < 4; ++y)
      for (Index x = 0; x < 5; ++x) {
        CHECK(g.dx(c, y, x) == (x + 1 < 5 ? std::abs(lab(c, y, x + 1) - lab(c, y, x)) : 0.0));
        CHECK(g.dy(c, y, x) == (y + 1 < 4 ? std::abs(lab(c, y + 1, x) - lab(c, y, x)) : 0.0));
      }
}

TEST_CASE("boundary gradient examples") {
  SUBCASE("identical colors give zero weight") {
    LabelMap seg(4, 4);
    seg << 0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2;
    const auto w = boundary_gradients(Image::constant(3, 4, 4, 37.0), seg);
    CHECK(w.size() == 3);
    for (const auto& [pair, value] : w) CHECK(value == 0.0);
  }
  SUBCASE("vertical split gives the L1 color gap") {
    Image lab(3, 5, 6);
    const double p[3] = {40, -10, 5}, q[3] = {70, 12, -20};
    LabelMap seg(5, 6);
    for (Index y = 0; y < 5; ++y)
      for (Index x = 0; x < 6; ++x) {
        seg(y, x) = x < 2 ? 3 : 8;
        for (int c = 0; c < 3; ++c) lab(c, y, x) = x < 2 ? p[c] : q[c];
      }
    const auto w = boundary_gradients(lab, seg);
    REQUIRE(w.size() == 1);
    CHECK(w.at({3, 8}) == doctest::Approx(30 + 22 + 25).epsilon(1e-14));
    CHECK(edge_weight(w, 8, 3) == w.at({3, 8}));
    CHECK(edge_weight(w, 3, 4) == std::numeric_limits<double>::infinity());
  }
  SUBCASE("random maps match an exhaustive scan") {
    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 30; ++trial) {
      const auto seg = random_labels(8, 8, 3, rng);
      const auto lab = random_tensor(3, 8, 8, rng, -60, 60);
      const auto got = boundary_gradients(lab, seg);
      const auto want = delta_oracle(lab, seg);
      REQUIRE(got.size() == want.size());
      for (const auto& [pair, value] : want) CHECK(std::abs(got.at(pair) - value) < 1e-12);
    }
  }
  SUBCASE("swapping which segment lies left leaves the weight unchanged") {
    std::mt19937_64 rng(53);
    const auto lab = random_tensor(3, 6, 6, rng, -60, 60);
    const auto seg = random_labels(6, 6, 4, rng);
    LabelMap swapped = seg;
    for (Index i = 0; i < swapped.size(); ++i) swapped.data()[i] = 3 - seg.data()[i];
    const auto a = boundary_gradients(lab, seg), b = boundary_gradients(lab, swapped);
    for (const auto& [pair, value] : a) CHECK(std::abs(edge_weight(b, 3 - pair.first, 3 - pair.second) - value) < 1e-12);
  }
}

TEST_CASE("graph cut merge examples") {
  LabelMap row(1, 6);
  row << 5, 5, 9, 9, 2, 2;
  const RegionEdgeWeights w = {{{5, 9}, 3.0}, {{2, 9}, 8.0}};

  SUBCASE("threshold zero only relabels") {
    LabelMap want(1, 6);
    want << 0, 0, 1, 1, 2, 2;
    CHECK(graph_cut_merge(row, w, 0) == want);
  }
  SUBCASE("an infinite threshold merges every adjacent group") {
    CHECK(graph_cut_merge(row, w, std::numeric_limits<double>::infinity()).cwiseAbs().maxCoeff() == 0);
  }
  SUBCASE("a middle threshold merges only the light edge") {
    LabelMap want(1, 6);
    want << 0, 0, 0, 0, 1, 1;
    CHECK(graph_cut_merge(row, w, 8.0) == want);
    CHECK(graph_cut_merge(row, w, 3.5) == want);
    CHECK(segment_count(graph_cut_merge(row, w, 3.0)) == 3);
  }
  SUBCASE("non-adjacent segments never merge") {
    LabelMap two(1, 3);
    two << 0, 1, 2;
    const RegionEdgeWeights only = {{{0, 1}, 0.5}};
    LabelMap want(1, 3);
    want << 0, 0, 1;
    CHECK(graph_cut_merge(two, only, 1e300) == want);
  }
  SUBCASE("negative threshold is rejected") {
    CHECK_THROWS_AS(graph_cut_merge(row, w, -1), ConfigError);
  }
}

TEST_CASE("post-processing only coarsens and is monotone in the threshold") {
  std::mt19937_64 rng(54);
  const std::vector<double> thresholds = {0, 1, 5, 10, 20, 40, 80, 1e9};
  for (int trial = 0; trial < 25; ++trial) {
    const auto seg = blocky_labels(16, 20, 2 + trial % 3, 6, rng);
    const auto rgb = random_tensor(3, 16, 20, rng, 0.0, 1.0);
    int previous = std::numeric_limits<int>::max();
    for (double t : thresholds) {
      const auto out = postprocess(rgb, seg, t);
      const int count = segment_count(out);
      CHECK(count <= previous);
      previous = count;
      CHECK(coarsens(seg, out));
    }
    CHECK(segment_count(postprocess(rgb, seg, 0)) == segment_count(seg));
  }
}

TEST_CASE("flat regions with similar colors merge while distinct ones stay") {
  Image rgb(3, 8, 12);
  LabelMap seg(8, 12);
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 12; ++x) {
      seg(y, x) = static_cast<int>(x / 4);
      const double shade = x < 4 ? 0.50 : (x < 8 ? 0.51 : 0.95);
      rgb(0, y, x) = shade;
      rgb(1, y, x) = x < 8 ? 0.2 : 0.9;
      rgb(2, y, x) = 0.3;
    }
  const auto out = postprocess(rgb, seg, 10);
  CHECK(out(0, 0) == out(0, 5));
  CHECK(out(0, 5) != out(0, 10));
  CHECK(segment_count(out) == 2);
}
