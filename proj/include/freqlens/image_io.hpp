#pragma once

// PNG/JPEG decoding, 8-bit PNG previews and the FLSG float-grid format.
//
// FLSG layout (little endian):
//   bytes 0..3   magic "FLSG"
//   bytes 4..7   u32 version (1)
//   bytes 8..11  u32 side
//   bytes 12..15 u32 reserved (0)
//   then side*side f32 values, row-major

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "freqlens/spectra.hpp"

namespace freqlens {

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(std::span<const unsigned char> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

inline void put_f32(std::vector<unsigned char>& out, double value) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

inline double get_f32(std::span<const unsigned char> in, std::size_t offset) {
  return static_cast<double>(std::bit_cast<float>(get_u32(in, offset)));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

inline Image decode_jpeg(std::span<const unsigned char> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<unsigned char> raw;
  std::size_t h = 0, w = 0, c = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(std::string("corrupt JPEG: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  jpeg_start_decompress(&cinfo);
  h = cinfo.output_height;
  w = cinfo.output_width;
  c = static_cast<std::size_t>(cinfo.output_components);
  raw.resize(h * w * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = raw.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  Image img(h, w, c);
  std::transform(raw.begin(), raw.end(), img.pixels.begin(),
                 [](unsigned char v) { return static_cast<double>(v) / 255.0; });
  return img;
}

inline Image decode_png(std::span<const unsigned char> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw std::runtime_error(std::string("corrupt PNG: ") + image.message);
  const bool has_color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = has_color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = has_color ? 3 : 1;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("corrupt PNG: " + msg);
  }
  Image img(image.height, image.width, channels);
  std::transform(raw.begin(), raw.end(), img.pixels.begin(),
                 [](unsigned char v) { return static_cast<double>(v) / 255.0; });
  return img;
}

}  // namespace detail

/// Decodes a PNG or JPEG (sniffed by signature) into [0, 1] pixels.
inline Image read_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  static constexpr std::array<unsigned char, 8> png_sig{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::equal(png_sig.begin(), png_sig.end(), bytes.begin()))
    return detail::decode_png(bytes);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF)
    return detail::decode_jpeg(bytes);
  throw std::runtime_error("unrecognized image format: " + path.string());
}

/// Writes values in [0, 1] (clamped) as an 8-bit grayscale PNG.
inline void write_gray_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                           std::span<const double> values) {
  if (values.size() != height * width) throw std::invalid_argument("write_gray_png: size mismatch");
  std::vector<unsigned char> raw(values.size());
  std::transform(values.begin(), values.end(), raw.begin(), [](double v) {
    const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    return static_cast<unsigned char>(std::lround(c * 255.0));
  });
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, raw.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
}

/// Preview of a grid after min/max normalization.
inline void write_grid_png(const std::filesystem::path& path, const MagnitudeGrid& grid) {
  const MagnitudeGrid norm = normalize_grid(grid);
  write_gray_png(path, grid.side, grid.side, norm.values);
}

inline std::vector<unsigned char> encode_flsg(const MagnitudeGrid& grid) {
  std::vector<unsigned char> out;
  out.reserve(16 + grid.values.size() * 4);
  for (char c : {'F', 'L', 'S', 'G'}) out.push_back(static_cast<unsigned char>(c));
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(grid.side));
  detail::put_u32(out, 0);
  for (double v : grid.values) detail::put_f32(out, v);
  return out;
}

inline MagnitudeGrid decode_flsg(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "FLSG", 4) != 0)
    throw std::runtime_error("FLSG: bad magic/length");
  if (detail::get_u32(bytes, 4) != 1) throw std::runtime_error("FLSG: unsupported version");
  const std::size_t side = detail::get_u32(bytes, 8);
  if (bytes.size() != 16 + side * side * 4) throw std::runtime_error("FLSG: bad magic/length");
  MagnitudeGrid grid(side);
  for (std::size_t i = 0; i < side * side; ++i) grid.values[i] = detail::get_f32(bytes, 16 + 4 * i);
  return grid;
}

inline void write_flsg(const std::filesystem::path& path, const MagnitudeGrid& grid) {
  detail::write_file_bytes(path, encode_flsg(grid));
}

inline MagnitudeGrid read_flsg(const std::filesystem::path& path) {
  return decode_flsg(detail::read_file_bytes(path));
}

}  // namespace freqlens
