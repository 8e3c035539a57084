#pragma once

// 8-bit PNG I/O via libpng's simplified API.

#include <spin/data.hpp>

#include <png.h>

#include <filesystem>

namespace spin {

class RasterIoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Reads an 8-bit PNG as interleaved gray (1) or RGB (3) bytes.
inline Raster<std::uint8_t> read_png(const std::string& path, bool want_rgb) {
  if (!std::filesystem::exists(path)) throw RasterIoError("cannot read raster '" + path + "': file does not exist");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw RasterIoError("cannot read raster '" + path + "': " + img.message);
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw RasterIoError("unsupported bit depth in '" + path + "': only 8-bit PNG is supported");
  }
  img.format = want_rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw RasterIoError("cannot decode raster '" + path + "': " + msg);
  }
  const int ch = want_rgb ? 3 : 1;
  Raster<std::uint8_t> out(ch, static_cast<int>(img.height), static_cast<int>(img.width));
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      for (int k = 0; k < ch; ++k)
        out.at(k, r, c) = buf[(static_cast<std::size_t>(r) * out.width + c) * ch + k];
  return out;
}

inline void write_png(const std::string& path, const Raster<std::uint8_t>& r) {
  if (r.channels != 1 && r.channels != 3) throw RasterIoError("write_png: need 1 or 3 channels");
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(r.height) * r.width * r.channels);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int k = 0; k < r.channels; ++k)
        buf[(static_cast<std::size_t>(y) * r.width + x) * r.channels + k] = r.at(k, y, x);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = r.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw RasterIoError("cannot write raster '" + path + "': " + img.message);
}

}  // namespace detail

// Binary mask; RGB input is converted to gray and thresholded at 128.
inline Mask load_mask(const std::string& path) {
  Mask m = detail::read_png(path, false);
  for (auto& v : m.data) v = v >= 128 ? 1 : 0;
  return m;
}

inline void save_mask(const Mask& m, const std::string& path) {
  Mask out = m;
  for (auto& v : out.data) v = v ? 255 : 0;
  detail::write_png(path, out);
}

// RGB image scaled to [0, 1].
inline Image load_image(const std::string& path) {
  const auto raw = detail::read_png(path, true);
  Image img(3, raw.height, raw.width);
  for (std::size_t i = 0; i < raw.data.size(); ++i) img.data[i] = raw.data[i] / 255.0f;
  return img;
}

inline void save_image(const Image& img, const std::string& path) {
  Raster<std::uint8_t> out(img.channels, img.height, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
  detail::write_png(path, out);
}

// Class-indexed 8-bit maps (orientation classes), stored verbatim.
inline Mask load_class_map(const std::string& path) { return detail::read_png(path, false); }
inline void save_class_map(const Mask& m, const std::string& path) { detail::write_png(path, m); }

}  // namespace spin
