#ifndef CLUSTERSEG_TYPES_HPP
#define CLUSTERSEG_TYPES_HPP

#include "clusterseg/tensor.hpp"

#include <Eigen/Core>

namespace clusterseg {

/// 3 x H x W raster with values in [0, 1] (RGB unless stated otherwise).
using Image = Tensor<double>;

/// H x W integer labels; row-major so the linear index y*W + x matches the
/// pixel column of a Tensor.
using LabelMap = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace clusterseg

#endif  // CLUSTERSEG_TYPES_HPP
