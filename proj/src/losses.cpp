#include "clusterseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace clusterseg {

namespace {

using Map2d = RowMatrix<double>;

constexpr double kLogFloor = -27.631021115928547;  // ln(1e-12)

Eigen::VectorXd gaussian_kernel(double sigma, Index radius) {
  Eigen::VectorXd k(2 * radius + 1);
  for (Index i = -radius; i <= radius; ++i)
    k(i + radius) = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  return k / k.sum();
}

Index window_radius(double sigma, const MsSsimConfig& cfg) {
  return static_cast<Index>(std::ceil(cfg.truncate * sigma));
}

// Separable Gaussian filter evaluated only on the interior pixels at
// distance >= margin from the border (margin >= kernel radius).
Map2d blur_valid(const Map2d& m, const Eigen::VectorXd& kernel, Index margin) {
  const Index r = (kernel.size() - 1) / 2;
  const Index h = m.rows(), w = m.cols(), oh = h - 2 * margin, ow = w - 2 * margin;
  Map2d horiz = Map2d::Zero(h, ow);
  for (Index t = -r; t <= r; ++t) horiz += kernel(t + r) * m.middleCols(margin + t, ow);
  Map2d out = Map2d::Zero(oh, ow);
  for (Index t = -r; t <= r; ++t) out += kernel(t + r) * horiz.middleRows(margin + t, oh);
  return out;
}

// Adjoint of blur_valid: scatters an interior map back to h x w.
Map2d blur_valid_adjoint(const Map2d& g, const Eigen::VectorXd& kernel, Index margin, Index h, Index w) {
  const Index r = (kernel.size() - 1) / 2;
  const Index oh = g.rows(), ow = g.cols();
  Map2d horiz = Map2d::Zero(h, ow);
  for (Index t = -r; t <= r; ++t) horiz.middleRows(margin + t, oh) += kernel(t + r) * g;
  Map2d out = Map2d::Zero(h, w);
  for (Index t = -r; t <= r; ++t) out.middleCols(margin + t, ow) += kernel(t + r) * horiz;
  return out;
}

void check_pair(const Image& x, const Image& y) {
  if (!x.same_shape(y)) throw ConfigError("image pair shapes differ");
}

}  // namespace

void LossConfig::validate() const {
  if (gamma1 < 0 || gamma2 < 0) throw ConfigError("loss weights must be non-negative");
  if (!(alpha1 > 0) || !(alpha2 > 0)) throw ConfigError("affinity scales must be positive");
  if (!(eta >= 0 && eta <= 1)) throw ConfigError("eta must lie in [0, 1]");
  if (ssim.sigmas.empty()) throw ConfigError("MS-SSIM needs at least one scale");
  for (double s : ssim.sigmas)
    if (!(s > 0)) throw ConfigError("MS-SSIM sigmas must be positive");
  if (!(ssim.truncate > 0)) throw ConfigError("MS-SSIM window truncation must be positive");
}

LabelMap pseudo_gt(const LabelMap& labels, const SuperpixelMap& sp) {
  if (labels.rows() != sp.labels.rows() || labels.cols() != sp.labels.cols())
    throw ConfigError("pseudo_gt: label map and superpixels differ in size");
  const int max_label = labels.size() > 0 ? labels.maxCoeff() : 0;
  if (labels.size() > 0 && labels.minCoeff() < 0) throw ConfigError("pseudo_gt: negative label");
  LabelMap out(labels.rows(), labels.cols());
  std::vector<Index> counts(static_cast<std::size_t>(max_label) + 1);
  for (int k = 0; k < sp.count; ++k) {
    std::fill(counts.begin(), counts.end(), 0);
    const auto& px = sp.members[static_cast<std::size_t>(k)];
    for (Index i : px) ++counts[static_cast<std::size_t>(labels.data()[i])];
    const auto mode = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    for (Index i : px) out.data()[i] = mode;
  }
  return out;
}

double loss_local(const Tensor<double>& scores, const LabelMap& target, Tensor<double>* grad, Reduction reduction) {
  if (scores.height() != target.rows() || scores.width() != target.cols())
    throw ConfigError("loss_local: target size differs from scores");
  const Index q = scores.channels();
  if (grad) *grad = Tensor<double>(q, scores.height(), scores.width());
  double loss = 0;
  Eigen::VectorXd e(q);
  for (Index n = 0; n < scores.pixels(); ++n) {
    const int c = target.data()[n];
    if (c < 0 || c >= q) throw ConfigError("loss_local: target label out of range");
    const auto s = scores.data().col(n);
    const double peak = s.maxCoeff();
    e = (s.array() - peak).exp();
    const double z = e.sum();
    const double logp = s(c) - peak - std::log(z);
    loss -= std::max(logp, kLogFloor);
    if (grad) {
      grad->data().col(n) = e / z;
      grad->data()(c, n) -= 1.0;
    }
  }
  if (reduction == Reduction::Mean) {
    const double inv = 1.0 / static_cast<double>(scores.pixels());
    if (grad) grad->data() *= inv;
    loss *= inv;
  }
  return loss;
}

double loss_global(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& affinity, Eigen::MatrixXd* grad) {
  if (affinity.rows() != probs.rows() || affinity.cols() != probs.rows())
    throw ConfigError("loss_global: affinity does not match H");
  const double mass = affinity.sum();
  if (mass <= 0) {
    if (grad) *grad = Eigen::MatrixXd::Zero(probs.rows(), probs.cols());
    return 0.0;
  }
  const Eigen::MatrixXd complement = Eigen::MatrixXd::Ones(probs.rows(), probs.cols()) - probs;
  const Eigen::MatrixXd a_comp = affinity * complement;
  const double value = probs.cwiseProduct(a_comp).sum() / mass;
  if (grad) *grad = (a_comp - affinity.transpose() * probs) / mass;
  return value;
}

std::vector<int> usable_scales(Index h, Index w, const MsSsimConfig& cfg) {
  std::vector<int> scales;
  for (std::size_t j = 0; j < cfg.sigmas.size(); ++j) {
    const Index size = 2 * window_radius(cfg.sigmas[j], cfg) + 1;
    if (size > std::min(h, w)) break;
    scales.push_back(static_cast<int>(j));
  }
  if (scales.empty())
    throw ConfigError("image of " + std::to_string(h) + "x" + std::to_string(w) +
                      " is too small for any MS-SSIM scale");
  return scales;
}

double ms_ssim(const Image& x, const Image& y, const MsSsimConfig& cfg, Image* grad_y) {
  check_pair(x, y);
  const Index h = x.height(), w = x.width();
  const std::vector<int> scales = usable_scales(h, w, cfg);
  const std::size_t m = scales.size();
  const Index margin = window_radius(cfg.sigmas[static_cast<std::size_t>(scales.back())], cfg);
  const Index oh = h - 2 * margin, ow = w - 2 * margin;
  const double weight = 1.0 / static_cast<double>(oh * ow * x.channels());

  std::vector<Eigen::VectorXd> kernels;
  for (int j : scales) {
    const double sigma = cfg.sigmas[static_cast<std::size_t>(j)];
    kernels.push_back(gaussian_kernel(sigma, window_radius(sigma, cfg)));
  }
  if (grad_y) *grad_y = Image(x.channels(), h, w);

  double total = 0;
  for (Index c = 0; c < x.channels(); ++c) {
    const Map2d xc = x.channel(c), yc = y.channel(c);
    const Map2d xx = xc.cwiseProduct(xc), yy = yc.cwiseProduct(yc), xy = xc.cwiseProduct(yc);

    std::vector<Map2d> mu_x(m), mu_y(m), num(m), den(m), cs(m);
    for (std::size_t j = 0; j < m; ++j) {
      mu_x[j] = blur_valid(xc, kernels[j], margin);
      mu_y[j] = blur_valid(yc, kernels[j], margin);
      const Map2d var_x = blur_valid(xx, kernels[j], margin) - mu_x[j].cwiseAbs2();
      const Map2d var_y = blur_valid(yy, kernels[j], margin) - mu_y[j].cwiseAbs2();
      const Map2d cov = blur_valid(xy, kernels[j], margin) - mu_x[j].cwiseProduct(mu_y[j]);
      num[j] = (2.0 * cov.array() + cfg.c2).matrix();
      den[j] = (var_x + var_y).array() + cfg.c2;
      cs[j] = num[j].cwiseQuotient(den[j]);
    }
    const Map2d& mx = mu_x.back();
    const Map2d& my = mu_y.back();
    const Map2d l_num = (2.0 * mx.cwiseProduct(my)).array() + cfg.c1;
    const Map2d l_den = (mx.cwiseAbs2() + my.cwiseAbs2()).array() + cfg.c1;
    const Map2d lum = l_num.cwiseQuotient(l_den);

    Map2d cs_prod = Map2d::Ones(oh, ow);
    for (const auto& s : cs) cs_prod = cs_prod.cwiseProduct(s);
    total += lum.cwiseProduct(cs_prod).sum();

    if (!grad_y) continue;
    // Products of all cs maps except index j via prefix/suffix products.
    std::vector<Map2d> prefix(m + 1, Map2d::Ones(oh, ow)), suffix(m + 1, Map2d::Ones(oh, ow));
    for (std::size_t j = 0; j < m; ++j) prefix[j + 1] = prefix[j].cwiseProduct(cs[j]);
    for (std::size_t j = m; j-- > 0;) suffix[j] = suffix[j + 1].cwiseProduct(cs[j]);

    Map2d gy = Map2d::Zero(h, w);
    for (std::size_t j = 0; j < m; ++j) {
      const Map2d g_cs = weight * lum.cwiseProduct(prefix[j]).cwiseProduct(suffix[j + 1]);
      const Map2d d_cov = 2.0 * g_cs.cwiseQuotient(den[j]);
      const Map2d d_var = -g_cs.cwiseProduct(num[j]).cwiseQuotient(den[j].cwiseAbs2());
      // cov = E[xy] - mu_x mu_y, var_y = E[yy] - mu_y^2
      Map2d d_mu = -d_cov.cwiseProduct(mu_x[j]) - 2.0 * d_var.cwiseProduct(mu_y[j]);
      if (j + 1 == m) {
        const Map2d dl = (2.0 * mx.cwiseProduct(l_den) - 2.0 * my.cwiseProduct(l_num)).cwiseQuotient(l_den.cwiseAbs2());
        d_mu += weight * cs_prod.cwiseProduct(dl);
      }
      gy += blur_valid_adjoint(d_mu, kernels[j], margin, h, w);
      gy += 2.0 * yc.cwiseProduct(blur_valid_adjoint(d_var, kernels[j], margin, h, w));
      gy += xc.cwiseProduct(blur_valid_adjoint(d_cov, kernels[j], margin, h, w));
    }
    grad_y->channel(c) = gy;
  }
  return total * weight;
}

double smoothed_l2(const Image& x, const Image& y, const MsSsimConfig& cfg, Image* grad_y) {
  check_pair(x, y);
  const Index h = x.height(), w = x.width();
  const std::vector<int> scales = usable_scales(h, w, cfg);
  const double sigma = cfg.sigmas[static_cast<std::size_t>(scales.back())];
  const Index margin = window_radius(sigma, cfg);
  const Eigen::VectorXd kernel = gaussian_kernel(sigma, margin);
  const Index oh = h - 2 * margin, ow = w - 2 * margin;
  const double weight = 1.0 / static_cast<double>(oh * ow * x.channels());

  if (grad_y) *grad_y = Image(x.channels(), h, w);
  Map2d d_err;
  if (grad_y) d_err = blur_valid_adjoint(Map2d::Constant(oh, ow, weight), kernel, margin, h, w);
  double total = 0;
  for (Index c = 0; c < x.channels(); ++c) {
    const Map2d diff = x.channel(c) - y.channel(c);
    total += blur_valid(diff.cwiseAbs2(), kernel, margin).sum();
    if (grad_y) grad_y->channel(c) = -2.0 * diff.cwiseProduct(d_err);
  }
  return total * weight;
}

double loss_msssim_l2(const Image& x, const Image& y, const LossConfig& cfg, Image* grad_y) {
  Image g_ssim, g_l2;
  const double ssim = ms_ssim(x, y, cfg.ssim, grad_y ? &g_ssim : nullptr);
  const double l2 = smoothed_l2(x, y, cfg.ssim, grad_y ? &g_l2 : nullptr);
  if (grad_y) {
    *grad_y = g_l2;
    grad_y->data() = -cfg.eta * g_ssim.data() + (1.0 - cfg.eta) * g_l2.data();
  }
  return cfg.eta * (1.0 - ssim) + (1.0 - cfg.eta) * l2;
}

double loss_rec(const Image& image, const Image& rec, const Image& image_half, const Image& rec_half,
                const LossConfig& cfg) {
  return loss_msssim_l2(image, rec, cfg) + loss_msssim_l2(image_half, rec_half, cfg);
}

LossBreakdown total_loss(double local, double global, double rec1, double rec2, const LossConfig& cfg) {
  const std::pair<const char*, double> terms[] = {
      {"L_local", local}, {"L_global", global}, {"L_rec1", rec1}, {"L_rec2", rec2}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite loss term ") + name);
  LossBreakdown b{local, global, rec1, rec2, 0};
  b.total = local + cfg.gamma1 * global + cfg.gamma2 * (rec1 + rec2);
  return b;
}

}  // namespace clusterseg
