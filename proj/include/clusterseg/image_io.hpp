#ifndef CLUSTERSEG_IMAGE_IO_HPP
#define CLUSTERSEG_IMAGE_IO_HPP

#include "clusterseg/types.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace clusterseg {

/// Missing, unreadable or undecodable input file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA) as a 3-channel image in
/// [0, 1]. Gray is replicated; alpha is dropped.
Image read_png(const std::string& path);

/// 8- or 16-bit grayscale PNG as integer labels.
LabelMap read_label_png(const std::string& path);

/// Interleaved 8-bit RGB raster, row-major.
struct Rgb8 {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;  ///< 3 * height * width bytes
};

/// Rounds [0, 1] values (clamped) to 8 bits.
Rgb8 to_rgb8(const Image& image);

void write_png_rgb8(const std::string& path, const Rgb8& raster);

/// 16-bit grayscale PNG; labels must lie in [0, 65535].
void write_label_png(const std::string& path, const LabelMap& labels);

/// CSV label map: a header line "H,W", then H rows of W integers.
LabelMap read_label_csv(const std::string& path);
void write_label_csv(const std::string& path, const LabelMap& labels);

/// Dispatches on the extension: .csv is a label CSV, anything else a PNG.
LabelMap read_label_map(const std::string& path);

}  // namespace clusterseg

#endif  // CLUSTERSEG_IMAGE_IO_HPP
