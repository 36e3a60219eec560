#ifndef CLUSTERSEG_LOSSES_HPP
#define CLUSTERSEG_LOSSES_HPP

#include "clusterseg/superpix.hpp"
#include "clusterseg/types.hpp"

#include <Eigen/Core>

#include <vector>

namespace clusterseg {

/// Multi-scale structural similarity in the per-pixel form: every scale is a
/// Gaussian window of its own sigma over the full-resolution image;
///   MS-SSIM(p) = l_M(p) * prod_j cs_j(p)
/// averaged over the pixels where the widest window fits, and over channels.
struct MsSsimConfig {
  std::vector<double> sigmas{0.5, 1.0, 2.0, 4.0, 8.0};
  double truncate = 2.0;  ///< window radius = ceil(truncate * sigma)
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// How per-pixel cross-entropy terms are combined.
enum class Reduction { Sum, Mean };

struct LossConfig {
  double gamma1 = 1e-5;  ///< weight of the neighbour term
  double gamma2 = 0.1;   ///< weight of the reconstruction term
  double alpha1 = 200;   ///< affinity scale for deep features
  double alpha2 = 400;   ///< affinity scale for shallow features
  double eta = 0.84;     ///< MS-SSIM share of the reconstruction loss
  /// Reduction of L_local inside the training objective. The summed form
  /// scales the step with the pixel count and diverges at lr 0.05.
  Reduction local_reduction = Reduction::Mean;
  MsSsimConfig ssim;

  void validate() const;
};

struct LossBreakdown {
  double local = 0;
  double global = 0;
  double rec1 = 0;
  double rec2 = 0;
  double total = 0;
};

/// Most frequent predicted label of each superpixel, broadcast to all of
/// its pixels. Ties resolve to the lowest label.
LabelMap pseudo_gt(const LabelMap& labels, const SuperpixelMap& sp);

/// -sum_n ln softmax(scores)_n[target_n] (divided by N for Reduction::Mean).
/// Log-probabilities are clamped at ln(1e-12). When `grad` is given it
/// receives dL/dscores = softmax - onehot (over N for Mean).
double loss_local(const Tensor<double>& scores, const LabelMap& target, Tensor<double>* grad = nullptr,
                  Reduction reduction = Reduction::Sum);

/// tr(H^T A (1 - H)) / sum(A), with A held constant. Returns 0 when A is
/// all zeros.
double loss_global(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& affinity,
                   Eigen::MatrixXd* grad = nullptr);

/// Indices of the scales whose window fits in an h x w image; the coarsest
/// scales are dropped first. Throws ConfigError if no scale fits.
std::vector<int> usable_scales(Index h, Index w, const MsSsimConfig& cfg);

/// MS-SSIM(x, y). `grad_y` (optional) receives the gradient with respect to y.
double ms_ssim(const Image& x, const Image& y, const MsSsimConfig& cfg, Image* grad_y = nullptr);

/// Gaussian-smoothed mean squared error using the coarsest usable scale,
/// over the same pixels as ms_ssim.
double smoothed_l2(const Image& x, const Image& y, const MsSsimConfig& cfg, Image* grad_y = nullptr);

/// eta * (1 - MS-SSIM(x, y)) + (1 - eta) * smoothed_l2(x, y)
double loss_msssim_l2(const Image& x, const Image& y, const LossConfig& cfg, Image* grad_y = nullptr);

/// loss_msssim_l2(image, rec) + loss_msssim_l2(image_half, rec_half)
double loss_rec(const Image& image, const Image& rec, const Image& image_half, const Image& rec_half,
                const LossConfig& cfg);

/// total = local + gamma1 * global + gamma2 * (rec1 + rec2). Throws
/// DivergenceError naming the first non-finite term.
LossBreakdown total_loss(double local, double global, double rec1, double rec2, const LossConfig& cfg);

}  // namespace clusterseg

#endif  // CLUSTERSEG_LOSSES_HPP
