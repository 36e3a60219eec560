#include "clusterseg/color.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace clusterseg {

namespace {

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

const Eigen::Matrix3d& rgb_to_xyz() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,
                                    0.2126729, 0.7151522, 0.0721750,
                                    0.0193339, 0.1191920, 0.9503041).finished();
  return m;
}

const Eigen::Vector3d kWhiteD65(0.95047, 1.0, 1.08883);

}  // namespace

Eigen::Vector3d srgb_to_lab(const Eigen::Vector3d& rgb) {
  const Eigen::Vector3d linear = rgb.unaryExpr([](double c) { return srgb_to_linear(c); });
  const Eigen::Vector3d xyz = (rgb_to_xyz() * linear).cwiseQuotient(kWhiteD65);
  const double fx = lab_f(xyz.x()), fy = lab_f(xyz.y()), fz = lab_f(xyz.z());
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Image rgb_to_lab(const Image& image) {
  if (image.channels() != 3) throw ConfigError("rgb_to_lab expects 3 channels");
  Image lab(3, image.height(), image.width());
  for (Index n = 0; n < image.pixels(); ++n)
    lab.data().col(n) = srgb_to_lab(image.data().col(n));
  return lab;
}

}  // namespace clusterseg
