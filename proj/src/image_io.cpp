#include "clusterseg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace clusterseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::string& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path);
  return f;
}

// Decoded PNG samples: channels are 1 (gray) or 3 (RGB) after dropping alpha.
struct Decoded {
  Index height = 0, width = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

Decoded decode(const std::string& path) {
  File f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw IoError(path + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }

  Decoded out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode " + path);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if ((color & PNG_COLOR_MASK_ALPHA) != 0) png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
  png_read_update_info(png, info);

  out.width = static_cast<Index>(png_get_image_width(png, info));
  out.height = static_cast<Index>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  out.channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (out.channels != 1 && out.channels != 3) throw IoError(path + ": unsupported channel layout");
  const std::size_t count = static_cast<std::size_t>(out.height * out.width * out.channels);
  out.samples.resize(count);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < count; ++i)
      out.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

void encode(const std::string& path, Index height, Index width, int color_type, int bit_depth,
            const std::vector<png_byte>& buffer) {
  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(width * channels * bit_depth / 8);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = const_cast<png_bytep>(buffer.data() + y * rowbytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("cannot encode " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png(const std::string& path) {
  const Decoded d = decode(path);
  const double scale = 1.0 / (d.bit_depth == 16 ? 65535.0 : 255.0);
  Image out(3, d.height, d.width);
  for (Index i = 0; i < d.height * d.width; ++i)
    for (Index c = 0; c < 3; ++c) {
      const Index src = d.channels == 3 ? 3 * i + c : i;
      out.data()(c, i) = d.samples[static_cast<std::size_t>(src)] * scale;
    }
  return out;
}

LabelMap read_label_png(const std::string& path) {
  const Decoded d = decode(path);
  if (d.channels != 1) throw IoError(path + ": label maps must be grayscale");
  LabelMap out(d.height, d.width);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = d.samples[static_cast<std::size_t>(i)];
  return out;
}

Rgb8 to_rgb8(const Image& image) {
  if (image.channels() != 3) throw ConfigError("to_rgb8 expects 3 channels");
  Rgb8 out{image.height(), image.width(), std::vector<std::uint8_t>(static_cast<std::size_t>(3 * image.pixels()))};
  for (Index i = 0; i < image.pixels(); ++i)
    for (Index c = 0; c < 3; ++c) {
      const double v = std::clamp(image.data()(c, i), 0.0, 1.0);
      out.pixels[static_cast<std::size_t>(3 * i + c)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return out;
}

void write_png_rgb8(const std::string& path, const Rgb8& raster) {
  if (raster.pixels.size() != static_cast<std::size_t>(3 * raster.height * raster.width))
    throw ConfigError("RGB raster size mismatch");
  encode(path, raster.height, raster.width, PNG_COLOR_TYPE_RGB, 8, raster.pixels);
}

void write_label_png(const std::string& path, const LabelMap& labels) {
  std::vector<png_byte> buffer(static_cast<std::size_t>(2 * labels.size()));
  for (Index i = 0; i < labels.size(); ++i) {
    const int v = labels.data()[i];
    if (v < 0 || v > 65535) throw ConfigError("label out of 16-bit range");
    buffer[static_cast<std::size_t>(2 * i)] = static_cast<png_byte>(v >> 8);
    buffer[static_cast<std::size_t>(2 * i + 1)] = static_cast<png_byte>(v & 0xff);
  }
  encode(path, labels.rows(), labels.cols(), PNG_COLOR_TYPE_GRAY, 16, buffer);
}

LabelMap read_label_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  long long h = 0, w = 0;
  char comma = 0;
  if (!std::getline(in, line)) throw IoError(path + ": empty label CSV");
  std::istringstream header(line);
  if (!(header >> h >> comma >> w) || comma != ',' || h <= 0 || w <= 0) throw IoError(path + ": bad header, expected H,W");
  LabelMap out(h, w);
  for (Index y = 0; y < h; ++y) {
    if (!std::getline(in, line)) throw IoError(path + ": too few rows");
    std::istringstream row(line);
    for (Index x = 0; x < w; ++x) {
      if (x > 0 && !(row >> comma && comma == ',')) throw IoError(path + ": malformed row " + std::to_string(y + 1));
      if (!(row >> out(y, x))) throw IoError(path + ": malformed row " + std::to_string(y + 1));
    }
    row >> std::ws;
    if (!row.eof()) throw IoError(path + ": too many values in row " + std::to_string(y + 1));
  }
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) throw IoError(path + ": trailing data");
  return out;
}

void write_label_csv(const std::string& path, const LabelMap& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << labels.rows() << ',' << labels.cols() << '\n';
  for (Index y = 0; y < labels.rows(); ++y) {
    for (Index x = 0; x < labels.cols(); ++x) {
      if (x > 0) out << ',';
      out << labels(y, x);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

LabelMap read_label_map(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? read_label_csv(path) : read_label_png(path);
}

}  // namespace clusterseg
