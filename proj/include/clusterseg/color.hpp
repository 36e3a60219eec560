#ifndef CLUSTERSEG_COLOR_HPP
#define CLUSTERSEG_COLOR_HPP

#include "clusterseg/types.hpp"

#include <Eigen/Core>

namespace clusterseg {

/// sRGB in [0,1] -> CIELAB (D65 white). L in [0,100].
Eigen::Vector3d srgb_to_lab(const Eigen::Vector3d& rgb);

/// Per-pixel srgb_to_lab over a 3-channel image; channels become L, a, b.
Image rgb_to_lab(const Image& image);

}  // namespace clusterseg

#endif  // CLUSTERSEG_COLOR_HPP
