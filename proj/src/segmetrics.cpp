#include "clusterseg/segmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace clusterseg {

namespace {

void check_sizes(const LabelMap& a, const LabelMap& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("label maps differ in size");
}

void check_gts(const std::vector<LabelMap>& gts) {
  if (gts.empty()) throw ConfigError("at least one ground truth is required");
}

template <typename Fn>
double average(const std::vector<LabelMap>& gts, Fn&& fn) {
  check_gts(gts);
  double sum = 0;
  for (const auto& gt : gts) sum += fn(gt);
  return sum / static_cast<double>(gts.size());
}

double pairs(double n) { return n * (n - 1) / 2; }

// 1-D squared distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = 0;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + q * q) - (f[static_cast<std::size_t>(p)] + p * p)) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = (q - p) * (q - p) + f[static_cast<std::size_t>(p)];
  }
}

LabelMap frame_mask(Index h, Index w) {
  LabelMap m = LabelMap::Zero(h, w);
  m.row(0).setOnes();
  m.row(h - 1).setOnes();
  m.col(0).setOnes();
  m.col(w - 1).setOnes();
  return m;
}

}  // namespace

Eigen::MatrixXd contingency_table(const LabelMap& a, const LabelMap& b) {
  check_sizes(a, b);
  std::unordered_map<int, Index> ia, ib;
  std::vector<Index> ra(static_cast<std::size_t>(a.size())), rb(static_cast<std::size_t>(b.size()));
  for (Index i = 0; i < a.size(); ++i) {
    ra[static_cast<std::size_t>(i)] = ia.try_emplace(a.data()[i], static_cast<Index>(ia.size())).first->second;
    rb[static_cast<std::size_t>(i)] = ib.try_emplace(b.data()[i], static_cast<Index>(ib.size())).first->second;
  }
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Index>(ia.size()), static_cast<Index>(ib.size()));
  for (std::size_t i = 0; i < ra.size(); ++i) table(ra[i], rb[i]) += 1;
  return table;
}

double rand_index(const LabelMap& pred, const LabelMap& gt) {
  const Eigen::MatrixXd t = contingency_table(pred, gt);
  const double n = t.sum();
  if (n < 2) return 1.0;
  const auto choose2 = [](double v) { return v * (v - 1) / 2; };
  const double both = t.unaryExpr(choose2).sum();
  const double same_pred = t.rowwise().sum().unaryExpr(choose2).sum();
  const double same_gt = t.colwise().sum().unaryExpr(choose2).sum();
  return 1.0 - (same_pred + same_gt - 2 * both) / pairs(n);
}

double variation_of_information(const LabelMap& pred, const LabelMap& gt, LogBase base) {
  const Eigen::MatrixXd t = contingency_table(pred, gt);
  const double n = t.sum();
  const Eigen::VectorXd a = t.rowwise().sum();
  const Eigen::RowVectorXd b = t.colwise().sum();
  double h_a = 0, h_b = 0, mi = 0;
  for (Index i = 0; i < a.size(); ++i) h_a -= a(i) / n * std::log(a(i) / n);
  for (Index j = 0; j < b.size(); ++j) h_b -= b(j) / n * std::log(b(j) / n);
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j)
      if (t(i, j) > 0) mi += t(i, j) / n * std::log(n * t(i, j) / (a(i) * b(j)));
  const double v = std::max(0.0, h_a + h_b - 2 * mi);
  return base == LogBase::Bits ? v / std::log(2.0) : v;
}

double global_consistency_error(const LabelMap& pred, const LabelMap& gt) {
  const Eigen::MatrixXd t = contingency_table(pred, gt);
  const double n = t.sum();
  const Eigen::VectorXd a = t.rowwise().sum();
  const Eigen::RowVectorXd b = t.colwise().sum();
  double e1 = 0, e2 = 0;
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j) {
      const double nij = t(i, j);
      if (nij == 0) continue;
      e1 += nij * (a(i) - nij) / a(i);
      e2 += nij * (b(j) - nij) / b(j);
    }
  return std::min(e1, e2) / n;
}

LabelMap boundary_mask(const LabelMap& labels) {
  const Index h = labels.rows(), w = labels.cols();
  LabelMap m = LabelMap::Zero(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (x + 1 < w && labels(y, x) != labels(y, x + 1)) m(y, x) = m(y, x + 1) = 1;
      if (y + 1 < h && labels(y, x) != labels(y + 1, x)) m(y, x) = m(y + 1, x) = 1;
    }
  return m;
}

RowMatrix<double> distance_transform(const LabelMap& mask) {
  const Index h = mask.rows(), w = mask.cols();
  constexpr double kFar = 1e20;
  RowMatrix<double> sq(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) sq(y, x) = mask(y, x) != 0 ? 0.0 : kFar;
  if ((mask.array() != 0).count() == 0)
    return RowMatrix<double>::Constant(h, w, std::numeric_limits<double>::infinity());

  const std::size_t longest = static_cast<std::size_t>(std::max(h, w));
  std::vector<double> f(longest), d(longest), z(longest + 1);
  std::vector<int> v(longest);
  for (Index x = 0; x < w; ++x) {
    f.resize(static_cast<std::size_t>(h));
    d.resize(static_cast<std::size_t>(h));
    for (Index y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = sq(y, x);
    edt_1d(f, d, v, z);
    for (Index y = 0; y < h; ++y) sq(y, x) = d[static_cast<std::size_t>(y)];
  }
  for (Index y = 0; y < h; ++y) {
    f.resize(static_cast<std::size_t>(w));
    d.resize(static_cast<std::size_t>(w));
    for (Index x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = sq(y, x);
    edt_1d(f, d, v, z);
    for (Index x = 0; x < w; ++x) sq(y, x) = d[static_cast<std::size_t>(x)];
  }
  return sq.cwiseSqrt();
}

double boundary_displacement_error(const LabelMap& pred, const LabelMap& gt) {
  check_sizes(pred, gt);
  LabelMap bp = boundary_mask(pred), bg = boundary_mask(gt);
  const bool has_p = (bp.array() != 0).any(), has_g = (bg.array() != 0).any();
  if (!has_p && !has_g) return 0.0;
  if (!has_p) bp = frame_mask(pred.rows(), pred.cols());
  if (!has_g) bg = frame_mask(gt.rows(), gt.cols());

  const RowMatrix<double> dp = distance_transform(bp), dg = distance_transform(bg);
  const auto mean_from = [](const LabelMap& from, const RowMatrix<double>& to) {
    double sum = 0;
    Index count = 0;
    for (Index i = 0; i < from.size(); ++i)
      if (from.data()[i] != 0) {
        sum += to.data()[i];
        ++count;
      }
    return sum / static_cast<double>(count);
  };
  return 0.5 * (mean_from(bp, dg) + mean_from(bg, dp));
}

double segmentation_covering(const LabelMap& pred, const LabelMap& gt) {
  const Eigen::MatrixXd t = contingency_table(pred, gt);
  const double n = t.sum();
  const Eigen::VectorXd a = t.rowwise().sum();
  const Eigen::RowVectorXd b = t.colwise().sum();
  double covering = 0;
  for (Index j = 0; j < t.cols(); ++j) {
    double best = 0;
    for (Index i = 0; i < t.rows(); ++i) best = std::max(best, t(i, j) / (a(i) + b(j) - t(i, j)));
    covering += b(j) / n * best;
  }
  return covering;
}

double miou(const LabelMap& pred, const LabelMap& gt) {
  const Eigen::MatrixXd t = contingency_table(pred, gt);
  const Eigen::VectorXd a = t.rowwise().sum();
  const Eigen::RowVectorXd b = t.colwise().sum();
  double sum = 0;
  for (Index j = 0; j < t.cols(); ++j) {
    double best = 0;
    for (Index i = 0; i < t.rows(); ++i) best = std::max(best, t(i, j) / (a(i) + b(j) - t(i, j)));
    sum += best;
  }
  return sum / static_cast<double>(t.cols());
}

double pri(const LabelMap& pred, const std::vector<LabelMap>& gts) {
  return average(gts, [&](const LabelMap& gt) { return rand_index(pred, gt); });
}

double voi(const LabelMap& pred, const std::vector<LabelMap>& gts, LogBase base) {
  return average(gts, [&](const LabelMap& gt) { return variation_of_information(pred, gt, base); });
}

double gce(const LabelMap& pred, const std::vector<LabelMap>& gts) {
  return average(gts, [&](const LabelMap& gt) { return global_consistency_error(pred, gt); });
}

double bde(const LabelMap& pred, const std::vector<LabelMap>& gts) {
  return average(gts, [&](const LabelMap& gt) { return boundary_displacement_error(pred, gt); });
}

double seg_covering(const LabelMap& pred, const std::vector<LabelMap>& gts) {
  return average(gts, [&](const LabelMap& gt) { return segmentation_covering(pred, gt); });
}

double miou(const LabelMap& pred, const std::vector<LabelMap>& gts) {
  return average(gts, [&](const LabelMap& gt) { return miou(pred, gt); });
}

MetricReport evaluate(const LabelMap& pred, const std::vector<LabelMap>& gts, LogBase base) {
  check_gts(gts);
  MetricReport report;
  for (const auto& gt : gts) {
    MetricValues v;
    v.sc = segmentation_covering(pred, gt);
    v.pri = rand_index(pred, gt);
    v.voi = variation_of_information(pred, gt, base);
    v.gce = global_consistency_error(pred, gt);
    v.bde = boundary_displacement_error(pred, gt);
    v.miou = miou(pred, gt);
    report.per_annotator.push_back(v);
    report.mean.sc += v.sc;
    report.mean.pri += v.pri;
    report.mean.voi += v.voi;
    report.mean.gce += v.gce;
    report.mean.bde += v.bde;
    report.mean.miou += v.miou;
  }
  const double inv = 1.0 / static_cast<double>(gts.size());
  auto& m = report.mean;
  m.sc *= inv;
  m.pri *= inv;
  m.voi *= inv;
  m.gce *= inv;
  m.bde *= inv;
  m.miou *= inv;
  return report;
}

std::string metric_header() { return "SC,PRI,VoI,GCE,BDE,mIoU"; }

}  // namespace clusterseg
