#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "clusterseg/superpix.hpp"
#include "test_util.hpp"

#include <queue>
#include <set>

using namespace clusterseg;
using testutil::random_labels;
using testutil::random_tensor;

namespace {

Image two_halves(Index h, Index w, const double left[3], const double right[3]) {
  Image img(3, h, w);
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) img(c, y, x) = x < w / 2 ? left[c] : right[c];
  return img;
}

// Partition, density and 4-connectivity of every superpixel, checked by flood
// fill from its first member.
void check_valid(const SuperpixelMap& sp) {
  const Index h = sp.labels.rows(), w = sp.labels.cols();
  REQUIRE(static_cast<int>(sp.members.size()) == sp.count);
  Index total = 0;
  std::vector<int> seen(static_cast<std::size_t>(h * w), 0);
  for (int k = 0; k < sp.count; ++k) {
    REQUIRE(sp.size(k) > 0);
    total += sp.size(k);
    for (Index p : sp.members[static_cast<std::size_t>(k)]) {
      CHECK(sp.labels.data()[p] == k);
      ++seen[static_cast<std::size_t>(p)];
    }
  }
  CHECK(total == h * w);
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));

  for (int k = 0; k < sp.count; ++k) {
    const auto& members = sp.members[static_cast<std::size_t>(k)];
    std::vector<char> reached(static_cast<std::size_t>(h * w), 0);
    std::queue<Index> todo;
    todo.push(members.front());
    reached[static_cast<std::size_t>(members.front())] = 1;
    Index count = 0;
    while (!todo.empty()) {
      const Index p = todo.front();
      todo.pop();
      ++count;
      const Index y = p / w, x = p % w;
      const Index ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
      for (int d = 0; d < 4; ++d) {
        if (ny[d] < 0 || ny[d] >= h || nx[d] < 0 || nx[d] >= w) continue;
        const Index q = ny[d] * w + nx[d];
        if (reached[static_cast<std::size_t>(q)] || sp.labels.data()[q] != k) continue;
        reached[static_cast<std::size_t>(q)] = 1;
        todo.push(q);
      }
    }
    CHECK(count == static_cast<Index>(members.size()));
  }
}

AdjacencyMatrix brute_adjacency(const LabelMap& labels, int count) {
  AdjacencyMatrix b = AdjacencyMatrix::Zero(count, count);
  for (Index y1 = 0; y1 < labels.rows(); ++y1)
    for (Index x1 = 0; x1 < labels.cols(); ++x1)
      for (Index y2 = 0; y2 < labels.rows(); ++y2)
        for (Index x2 = 0; x2 < labels.cols(); ++x2) {
          if (std::abs(y1 - y2) + std::abs(x1 - x2) != 1) continue;
          const int a = labels(y1, x1), c = labels(y2, x2);
          if (a != c) b(a, c) = 1;
        }
  return b;
}

}  // namespace

TEST_CASE("constant image gives roughly equal cells") {
  const Image img = Image::constant(3, 32, 32, 0.5);
  const auto sp = slic(img, SlicConfig{4, 10, 10, 0});
  check_valid(sp);
  CHECK(sp.count == 4);
  const double ideal = 32.0 * 32.0 / 4;
  for (int k = 0; k < sp.count; ++k) {
    CHECK(sp.size(k) <= 2 * ideal);
    CHECK(sp.size(k) >= ideal / 2);
  }
}

TEST_CASE("two homogeneous halves are recovered") {
  const double left[3] = {0.9, 0.1, 0.2}, right[3] = {0.1, 0.3, 0.8};
  const Image img = two_halves(24, 32, left, right);
  const auto sp = slic(img, SlicConfig{2, 10, 10, 0});
  check_valid(sp);
  REQUIRE(sp.count == 2);
  std::set<std::pair<double, double>> means;
  std::set<bool> sides;
  for (int k = 0; k < 2; ++k) {
    double r = 0, b = 0;
    for (Index p : sp.members[static_cast<std::size_t>(k)]) {
      r += img.data()(0, p);
      b += img.data()(2, p);
    }
    means.insert({r / static_cast<double>(sp.size(k)), b / static_cast<double>(sp.size(k))});
  }
  for (const auto& m : means) {
    const bool is_left = std::abs(m.first - left[0]) < 1e-12 && std::abs(m.second - left[2]) < 1e-12;
    const bool is_right = std::abs(m.first - right[0]) < 1e-12 && std::abs(m.second - right[2]) < 1e-12;
    CHECK((is_left || is_right));
    sides.insert(is_left);
  }
  CHECK(sides.size() == 2);
}

TEST_CASE("slic output is a connected partition on textured images") {
  std::mt19937_64 rng(10);
  for (int k : {2, 9, 40, 100}) {
    for (std::uint64_t seed : {0u, 3u}) {
      const Image img = random_tensor(3, 40, 48, rng, 0.0, 1.0);
      const auto sp = slic(img, SlicConfig{k, 10, 10, seed});
      INFO("K=" << k << " seed=" << seed);
      check_valid(sp);
      CHECK(sp.count >= 1);
      CHECK(sp.count <= k + k / 2 + 2);
    }
  }
}

TEST_CASE("slic is deterministic for a fixed seed") {
  std::mt19937_64 rng(11);
  const Image img = random_tensor(3, 32, 32, rng, 0.0, 1.0);
  const auto a = slic(img, SlicConfig{20, 10, 10, 5});
  const auto b = slic(img, SlicConfig{20, 10, 10, 5});
  CHECK(a.labels == b.labels);
  CHECK(a.count == b.count);
}

TEST_CASE("slic rejects bad superpixel counts") {
  const Image img = Image::constant(3, 16, 16, 0.2);
  CHECK_THROWS_AS(slic(img, SlicConfig{65, 10, 10, 0}), ConfigError);
  CHECK_THROWS_AS(slic(img, SlicConfig{1, 10, 10, 0}), ConfigError);
  CHECK_NOTHROW(slic(img, SlicConfig{64, 10, 10, 0}));
}

TEST_CASE("adjacency of a 2x2 grid of cells") {
  LabelMap labels(4, 4);
  labels << 0, 0, 1, 1,  //
      0, 0, 1, 1,        //
      2, 2, 3, 3,        //
      2, 2, 3, 3;
  const auto b = build_adjacency(labels, 4);
  for (int i = 0; i < 4; ++i) CHECK(b.row(i).sum() == 2);
  CHECK(b(0, 3) == 0);
  CHECK(b(1, 2) == 0);
  CHECK(b(0, 1) == 1);
  CHECK(b(0, 2) == 1);
}

TEST_CASE("adjacency of a single superpixel is a 1x1 zero") {
  const auto b = build_adjacency(LabelMap::Zero(5, 7), 1);
  CHECK(b.rows() == 1);
  CHECK(b.cols() == 1);
  CHECK(b(0, 0) == 0);
}

TEST_CASE("adjacency matches an exhaustive pixel-pair scan") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto labels = random_labels(5 + trial % 4, 6 + trial % 3, 2 + trial % 6, rng);
    const auto sp = make_superpixel_map(labels);
    const auto b = build_adjacency(sp);
    CHECK(b == brute_adjacency(sp.labels, sp.count));
    CHECK(b == b.transpose());
    CHECK(b.diagonal().cwiseAbs().sum() == 0);
  }
}

TEST_CASE("make_superpixel_map renumbers in raster order") {
  LabelMap labels(2, 3);
  labels << 7, 7, 3,  //
      9, 3, 3;
  const auto sp = make_superpixel_map(labels);
  CHECK(sp.count == 3);
  LabelMap expected(2, 3);
  expected << 0, 0, 1,  //
      2, 1, 1;
  CHECK(sp.labels == expected);
  CHECK(sp.members[1] == std::vector<Index>{2, 4, 5});
}

TEST_CASE("boundary sets of a vertical split") {
  LabelMap labels(4, 6);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 6; ++x) labels(y, x) = x < 3 ? 0 : 1;
  const auto s = boundary_sets(labels);
  REQUIRE(s.horizontal.size() == 1);
  CHECK(s.horizontal.at({0, 1}) == std::vector<Index>{2, 8, 14, 20});
  CHECK(s.vertical.empty());
}

TEST_CASE("boundary sets of a horizontal split") {
  LabelMap labels(5, 3);
  for (Index y = 0; y < 5; ++y)
    for (Index x = 0; x < 3; ++x) labels(y, x) = y < 2 ? 4 : 2;
  const auto s = boundary_sets(labels);
  REQUIRE(s.vertical.size() == 1);
  CHECK(s.vertical.at({4, 2}) == std::vector<Index>{3, 4, 5});
  CHECK(s.horizontal.empty());
}

TEST_CASE("boundary sets match an exhaustive neighbour scan") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto labels = random_labels(6, 6, 3, rng);
    std::map<std::pair<int, int>, std::vector<Index>> hx, vy;
    for (Index m = 0; m < 6; ++m)
      for (Index n = 0; n < 6; ++n) {
        if (n + 1 < 6 && labels(m, n) != labels(m, n + 1)) hx[{labels(m, n), labels(m, n + 1)}].push_back(m * 6 + n);
        if (m + 1 < 6 && labels(m, n) != labels(m + 1, n)) vy[{labels(m, n), labels(m + 1, n)}].push_back(m * 6 + n);
      }
    const auto s = boundary_sets(labels);
    CHECK(s.horizontal == hx);
    CHECK(s.vertical == vy);
  }
}

TEST_CASE("connected components split disconnected labels") {
  LabelMap labels(3, 4);
  labels << 1, 1, 2, 1,  //
      2, 2, 2, 1,        //
      1, 2, 1, 1;
  const auto [comp, count] = connected_components(labels);
  CHECK(count == 4);
  LabelMap expected(3, 4);
  expected << 0, 0, 1, 2,  //
      1, 1, 1, 2,          //
      3, 1, 2, 2;
  CHECK(comp == expected);
}
