#ifndef CLUSTERSEG_SPSTATS_HPP
#define CLUSTERSEG_SPSTATS_HPP

#include "clusterseg/superpix.hpp"
#include "clusterseg/types.hpp"

#include <Eigen/Core>

namespace clusterseg {

/// Row k is mean + population standard deviation of `values` over the pixels
/// of superpixel k. Result is (count x channels).
Eigen::MatrixXd region_stats(const Tensor<double>& values, const SuperpixelMap& sp);

/// Gradient of sum(grad .* region_stats(values)) with respect to `values`.
/// Superpixels with zero deviation in a channel contribute only the mean
/// term there (the deviation is not differentiable at 0).
Tensor<double> region_stats_backward(const Tensor<double>& values, const SuperpixelMap& sp,
                                     const Eigen::MatrixXd& grad);

struct RegionFeatures {
  Eigen::MatrixXd deep;     ///< v: count x Q, statistics of the cluster scores
  Eigen::MatrixXd shallow;  ///< e: count x 3, statistics of the image
};

RegionFeatures region_features(const Tensor<double>& scores, const Image& image, const SuperpixelMap& sp);

/// A(i,j) = exp(-|v_i - v_j|^2 / alpha1 - |e_i - e_j|^2 / alpha2) where
/// B(i,j) = 1, and 0 elsewhere.
Eigen::MatrixXd affinity(const RegionFeatures& features, const AdjacencyMatrix& adjacency,
                         double alpha1, double alpha2);

/// Channel-wise softmax of the cluster scores (Q x H x W).
Tensor<double> softmax_channels(const Tensor<double>& scores);

/// H: count x Q, row k = mean over superpixel k of the per-pixel softmax.
Eigen::MatrixXd superpixel_probs(const Tensor<double>& probabilities, const SuperpixelMap& sp);

/// Gradient with respect to the raw scores given dL/dH, where
/// `probabilities` = softmax_channels(scores).
Tensor<double> superpixel_probs_backward(const Tensor<double>& probabilities, const SuperpixelMap& sp,
                                         const Eigen::MatrixXd& grad_h);

}  // namespace clusterseg

#endif  // CLUSTERSEG_SPSTATS_HPP
