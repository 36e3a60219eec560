#include "clusterseg/superpix.hpp"

#include "clusterseg/color.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

namespace clusterseg {

namespace {

struct Center {
  Eigen::Vector3d lab;
  double y = 0, x = 0;
};

// Squared Lab gradient magnitude used to nudge seeds off edges.
double seed_gradient(const Image& lab, Index y, Index x) {
  const Index h = lab.height(), w = lab.width();
  const Index xl = std::max<Index>(x - 1, 0), xr = std::min<Index>(x + 1, w - 1);
  const Index yu = std::max<Index>(y - 1, 0), yd = std::min<Index>(y + 1, h - 1);
  double g = 0;
  for (Index c = 0; c < 3; ++c) {
    const double dx = lab(c, y, xr) - lab(c, y, xl);
    const double dy = lab(c, yd, x) - lab(c, yu, x);
    g += dx * dx + dy * dy;
  }
  return g;
}

class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int a) {
    while (parent_[static_cast<std::size_t>(a)] != a) {
      parent_[static_cast<std::size_t>(a)] = parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(a)])];
      a = parent_[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void attach(int child, int root) { parent_[static_cast<std::size_t>(find(child))] = find(root); }

 private:
  std::vector<int> parent_;
};

// Merges every component that is not the largest piece of its label into the
// neighbouring component with the longest shared border (ties: lower id).
LabelMap absorb_orphans(const LabelMap& labels) {
  auto [comp, ncomp] = connected_components(labels);
  const Index h = labels.rows(), w = labels.cols(), n = h * w;

  std::vector<Index> comp_size(static_cast<std::size_t>(ncomp), 0);
  std::vector<int> comp_label(static_cast<std::size_t>(ncomp), 0);
  std::vector<std::vector<Index>> comp_pixels(static_cast<std::size_t>(ncomp));
  for (Index i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(comp.data()[i]);
    ++comp_size[c];
    comp_label[c] = labels.data()[i];
    comp_pixels[c].push_back(i);
  }
  std::unordered_map<int, int> largest;  // label -> component
  for (int c = 0; c < ncomp; ++c) {
    auto it = largest.find(comp_label[static_cast<std::size_t>(c)]);
    if (it == largest.end() || comp_size[static_cast<std::size_t>(c)] > comp_size[static_cast<std::size_t>(it->second)])
      largest[comp_label[static_cast<std::size_t>(c)]] = c;
  }
  std::vector<bool> anchored(static_cast<std::size_t>(ncomp), false);
  for (const auto& [label, c] : largest) anchored[static_cast<std::size_t>(c)] = true;

  std::vector<int> orphans;
  for (int c = 0; c < ncomp; ++c)
    if (!anchored[static_cast<std::size_t>(c)]) orphans.push_back(c);
  std::stable_sort(orphans.begin(), orphans.end(), [&](int a, int b) {
    return comp_size[static_cast<std::size_t>(a)] < comp_size[static_cast<std::size_t>(b)];
  });

  DisjointSet sets(ncomp);
  // Orphans adjacent only to other orphans are retried until each group
  // reaches an anchored component.
  while (!orphans.empty()) {
    std::vector<int> pending;
    for (int orphan : orphans) {
      std::map<int, Index> border;
      for (Index p : comp_pixels[static_cast<std::size_t>(orphan)]) {
        const Index y = p / w, x = p % w;
        const Index nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (const auto& q : nb) {
          if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
          const int other = sets.find(comp(q[0], q[1]));
          if (other != sets.find(orphan)) ++border[other];
        }
      }
      int best = -1;
      Index best_len = 0;
      for (const auto& [other, len] : border) {
        if (len > best_len) {
          best = other;
          best_len = len;
        }
      }
      if (best < 0) continue;  // whole image is one component
      sets.attach(orphan, best);
      if (!anchored[static_cast<std::size_t>(best)]) pending.push_back(orphan);
    }
    // Groups whose root is still an orphan need another pass.
    std::vector<int> next;
    for (int orphan : pending)
      if (!anchored[static_cast<std::size_t>(sets.find(orphan))]) next.push_back(orphan);
    if (next.size() == orphans.size()) break;
    orphans = std::move(next);
  }

  LabelMap out(h, w);
  for (Index i = 0; i < n; ++i) {
    const int root = sets.find(comp.data()[i]);
    out.data()[i] = comp_label[static_cast<std::size_t>(root)];
  }
  return out;
}

}  // namespace

std::pair<LabelMap, int> connected_components(const LabelMap& labels) {
  const Index h = labels.rows(), w = labels.cols();
  LabelMap comp = LabelMap::Constant(h, w, -1);
  int count = 0;
  std::vector<Index> stack;
  for (Index start = 0; start < h * w; ++start) {
    if (comp.data()[start] >= 0) continue;
    const int label = labels.data()[start];
    comp.data()[start] = count;
    stack.assign(1, start);
    while (!stack.empty()) {
      const Index p = stack.back();
      stack.pop_back();
      const Index y = p / w, x = p % w;
      const Index nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
        const Index qi = q[0] * w + q[1];
        if (comp.data()[qi] < 0 && labels.data()[qi] == label) {
          comp.data()[qi] = count;
          stack.push_back(qi);
        }
      }
    }
    ++count;
  }
  return {comp, count};
}

SuperpixelMap make_superpixel_map(const LabelMap& labels) {
  SuperpixelMap sp;
  sp.labels.resize(labels.rows(), labels.cols());
  std::unordered_map<int, int> dense;
  for (Index i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = dense.try_emplace(labels.data()[i], sp.count);
    if (inserted) {
      ++sp.count;
      sp.members.emplace_back();
    }
    sp.labels.data()[i] = it->second;
    sp.members[static_cast<std::size_t>(it->second)].push_back(i);
  }
  return sp;
}

SuperpixelMap slic(const Image& image, const SlicConfig& cfg) {
  const Index h = image.height(), w = image.width(), n = h * w;
  if (image.channels() != 3) throw ConfigError("slic expects a 3-channel image");
  if (cfg.superpixels < 2) throw ConfigError("slic: K must be >= 2");
  if (static_cast<Index>(cfg.superpixels) > n / 4)
    throw ConfigError("slic: K=" + std::to_string(cfg.superpixels) + " too large for a " +
                      std::to_string(h) + "x" + std::to_string(w) + " image");
  if (cfg.iterations < 1 || !(cfg.compactness > 0)) throw ConfigError("slic: bad iteration count or compactness");

  const Image lab = rgb_to_lab(image);
  const double k = cfg.superpixels;
  const Index rows = std::max<Index>(1, std::lround(std::sqrt(k * static_cast<double>(h) / static_cast<double>(w))));
  const Index cols = std::max<Index>(1, std::lround(k / static_cast<double>(rows)));
  const double step_y = static_cast<double>(h) / static_cast<double>(rows);
  const double step_x = static_cast<double>(w) / static_cast<double>(cols);
  const double step = std::sqrt(static_cast<double>(n) / k);

  std::mt19937_64 rng(cfg.seed);
  const double jitter = std::floor(std::min(step_y, step_x) / 8.0);
  std::uniform_real_distribution<double> offset(-jitter, jitter);

  std::vector<Center> centers;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      Index y = std::clamp<Index>(std::lround((static_cast<double>(r) + 0.5) * step_y - 0.5 + offset(rng)), 0, h - 1);
      Index x = std::clamp<Index>(std::lround((static_cast<double>(c) + 0.5) * step_x - 0.5 + offset(rng)), 0, w - 1);
      // Move to the lowest-gradient pixel of the 3x3 neighbourhood.
      Index by = y, bx = x;
      double best = seed_gradient(lab, y, x);
      for (Index dy = -1; dy <= 1; ++dy)
        for (Index dx = -1; dx <= 1; ++dx) {
          const Index yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const double g = seed_gradient(lab, yy, xx);
          if (g < best) {
            best = g;
            by = yy;
            bx = xx;
          }
        }
      centers.push_back({lab.data().col(by * w + bx), static_cast<double>(by), static_cast<double>(bx)});
    }
  }

  const double spatial_weight = (cfg.compactness / step) * (cfg.compactness / step);
  const Index window = static_cast<Index>(std::ceil(std::max(step_y, step_x)));
  LabelMap assign = LabelMap::Constant(h, w, -1);
  Eigen::VectorXd dist(n);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    dist.setConstant(std::numeric_limits<double>::infinity());
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const Center& ctr = centers[ci];
      const Index y0 = std::max<Index>(0, static_cast<Index>(ctr.y) - window);
      const Index y1 = std::min<Index>(h, static_cast<Index>(ctr.y) + window + 1);
      const Index x0 = std::max<Index>(0, static_cast<Index>(ctr.x) - window);
      const Index x1 = std::min<Index>(w, static_cast<Index>(ctr.x) + window + 1);
      for (Index y = y0; y < y1; ++y) {
        for (Index x = x0; x < x1; ++x) {
          const Index i = y * w + x;
          const double dc = (lab.data().col(i) - ctr.lab).squaredNorm();
          const double ds = (static_cast<double>(y) - ctr.y) * (static_cast<double>(y) - ctr.y) +
                            (static_cast<double>(x) - ctr.x) * (static_cast<double>(x) - ctr.x);
          const double d = dc + spatial_weight * ds;
          if (d < dist(i)) {
            dist(i) = d;
            assign.data()[i] = static_cast<int>(ci);
          }
        }
      }
    }
    // Pixels outside every search window fall back to the globally nearest center.
    for (Index i = 0; i < n; ++i) {
      if (assign.data()[i] >= 0) continue;
      const double y = static_cast<double>(i / w), x = static_cast<double>(i % w);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t ci = 0; ci < centers.size(); ++ci) {
        const double d = (lab.data().col(i) - centers[ci].lab).squaredNorm() +
                         spatial_weight * ((y - centers[ci].y) * (y - centers[ci].y) + (x - centers[ci].x) * (x - centers[ci].x));
        if (d < best) {
          best = d;
          assign.data()[i] = static_cast<int>(ci);
        }
      }
    }

    std::vector<Center> sums(centers.size(), Center{Eigen::Vector3d::Zero(), 0, 0});
    std::vector<Index> counts(centers.size(), 0);
    for (Index i = 0; i < n; ++i) {
      const auto ci = static_cast<std::size_t>(assign.data()[i]);
      sums[ci].lab += lab.data().col(i);
      sums[ci].y += static_cast<double>(i / w);
      sums[ci].x += static_cast<double>(i % w);
      ++counts[ci];
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (counts[ci] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[ci]);
      centers[ci] = {sums[ci].lab * inv, sums[ci].y * inv, sums[ci].x * inv};
    }
  }

  return make_superpixel_map(absorb_orphans(assign));
}

AdjacencyMatrix build_adjacency(const LabelMap& labels, int count) {
  AdjacencyMatrix b = AdjacencyMatrix::Zero(count, count);
  const Index h = labels.rows(), w = labels.cols();
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const int a = labels(y, x);
      if (x + 1 < w && labels(y, x + 1) != a) b(a, labels(y, x + 1)) = b(labels(y, x + 1), a) = 1;
      if (y + 1 < h && labels(y + 1, x) != a) b(a, labels(y + 1, x)) = b(labels(y + 1, x), a) = 1;
    }
  }
  return b;
}

AdjacencyMatrix build_adjacency(const SuperpixelMap& sp) { return build_adjacency(sp.labels, sp.count); }

BoundarySets boundary_sets(const LabelMap& labels) {
  BoundarySets sets;
  const Index h = labels.rows(), w = labels.cols();
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const int a = labels(y, x);
      if (x + 1 < w && labels(y, x + 1) != a) sets.horizontal[{a, labels(y, x + 1)}].push_back(y * w + x);
      if (y + 1 < h && labels(y + 1, x) != a) sets.vertical[{a, labels(y + 1, x)}].push_back(y * w + x);
    }
  }
  return sets;
}

}  // namespace clusterseg
