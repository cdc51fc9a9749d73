#pragma once

// Centered log-magnitude spectra of images and their patch-grid view.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

namespace freqlens {

/// Interleaved multichannel image with real-valued pixels.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;  // row-major, channel-interleaved

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 1, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
    return pixels[(r * width + c) * channels + ch];
  }
  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return pixels[(r * width + c) * channels + ch];
  }
  bool empty() const { return height == 0 || width == 0 || channels == 0; }
};

/// Square grid of (log-)magnitudes. When `centered`, the zero frequency sits
/// at (side/2, side/2).
struct MagnitudeGrid {
  std::size_t side = 0;
  std::vector<double> values;
  bool centered = true;

  MagnitudeGrid() = default;
  MagnitudeGrid(std::size_t s, double fill = 0.0, bool is_centered = true)
      : side(s), values(s * s, fill), centered(is_centered) {}

  std::size_t height() const { return side; }
  std::size_t width() const { return side; }
  double& at(std::size_t r, std::size_t c) { return values[r * side + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * side + c]; }

  friend bool operator==(const MagnitudeGrid&, const MagnitudeGrid&) = default;
};

/// n×n array of w×w tiles, stored tile-major: tile (i, j) occupies
/// [(i·n + j)·w², (i·n + j + 1)·w²) in `values`, row-major inside the tile.
struct PatchGrid {
  std::size_t n = 0;
  std::size_t w = 0;
  std::vector<double> values;

  PatchGrid() = default;
  PatchGrid(std::size_t patches_per_side, std::size_t patch_width, double fill = 0.0)
      : n(patches_per_side), w(patch_width), values(n * n * w * w, fill) {}

  std::size_t tile_size() const { return w * w; }
  std::size_t tile_count() const { return n * n; }

  std::span<double> block(std::size_t i, std::size_t j) {
    return {values.data() + (i * n + j) * tile_size(), tile_size()};
  }
  std::span<const double> block(std::size_t i, std::size_t j) const {
    return {values.data() + (i * n + j) * tile_size(), tile_size()};
  }
  /// Tile by flat token index p = i·n + j.
  std::span<double> token(std::size_t p) { return {values.data() + p * tile_size(), tile_size()}; }
  std::span<const double> token(std::size_t p) const {
    return {values.data() + p * tile_size(), tile_size()};
  }

  bool same_shape(const PatchGrid& other) const { return n == other.n && w == other.w; }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

enum class ResizeMode {
  stretch,      ///< bilinear resize straight to side×side
  center_crop,  ///< bilinear resize to (8/7)·side square, then center crop
};

struct SpectrumOptions {
  std::size_t side = 224;
  ResizeMode resize = ResizeMode::stretch;
  bool log_scale = true;  ///< log(1 + |F|) when set, raw |F| otherwise
  bool centered = true;   ///< apply the half-shift
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Channel mean into a single-channel image.
inline Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.height, img.width, 1);
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < img.channels; ++ch) s += img.at(r, c, ch);
      out.at(r, c) = s / static_cast<double>(img.channels);
    }
  return out;
}

/// Bilinear resampling with pixel-center alignment; same-size input is copied
/// through unchanged.
inline Image resize_bilinear(const Image& gray, std::size_t out_h, std::size_t out_w) {
  if (gray.height == out_h && gray.width == out_w) return gray;
  Image out(out_h, out_w, 1);
  const double sy = static_cast<double>(gray.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(gray.width) / static_cast<double>(out_w);
  const auto max_r = static_cast<double>(gray.height - 1);
  const auto max_c = static_cast<double>(gray.width - 1);
  for (std::size_t r = 0; r < out_h; ++r) {
    const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, max_r);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, gray.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      const double fx = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, max_c);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, gray.width - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = gray.at(y0, x0) * (1.0 - tx) + gray.at(y0, x1) * tx;
      const double bottom = gray.at(y1, x0) * (1.0 - tx) + gray.at(y1, x1) * tx;
      out.at(r, c) = top * (1.0 - ty) + bottom * ty;
    }
  }
  return out;
}

inline Image crop_center(const Image& gray, std::size_t side) {
  const std::size_t top = (gray.height - side) / 2;
  const std::size_t left = (gray.width - side) / 2;
  Image out(side, side, 1);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) out.at(r, c) = gray.at(top + r, left + c);
  return out;
}

}  // namespace detail

/// Grayscale side×side preprocessing shared by the spectrum and previews.
inline Image preprocess_image(const Image& image, std::size_t side, ResizeMode mode) {
  if (image.empty()) throw std::invalid_argument("magnitude_spectrum: empty image");
  if (side == 0) throw std::invalid_argument("magnitude_spectrum: side must be positive");
  for (double v : image.pixels)
    if (!std::isfinite(v)) throw std::invalid_argument("magnitude_spectrum: non-finite pixel");
  Image gray = detail::to_gray(image);
  if (mode == ResizeMode::center_crop) {
    const std::size_t big = (side * 8 + 3) / 7;
    return detail::crop_center(detail::resize_bilinear(gray, big, big), side);
  }
  return detail::resize_bilinear(gray, side, side);
}

/// 2-D DFT magnitude of the preprocessed image, optionally log-compressed and
/// half-shifted. Values are left unnormalized.
inline MagnitudeGrid magnitude_spectrum(const Image& image, const SpectrumOptions& opts = {}) {
  const Image gray = preprocess_image(image, opts.side, opts.resize);
  const std::size_t s = opts.side;
  const std::size_t total = s * s;

  auto* buffer = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * total));
  if (buffer == nullptr) throw std::bad_alloc();
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(s), static_cast<int>(s), buffer, buffer,
                            FFTW_FORWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < total; ++i) {
    buffer[i][0] = gray.pixels[i];
    buffer[i][1] = 0.0;
  }
  fftw_execute(plan);

  MagnitudeGrid grid(s, 0.0, opts.centered);
  const std::size_t shift = opts.centered ? s / 2 : 0;
  for (std::size_t p = 0; p < s; ++p) {
    for (std::size_t q = 0; q < s; ++q) {
      const auto& z = buffer[p * s + q];
      double mag = std::hypot(z[0], z[1]);
      if (opts.log_scale) mag = std::log1p(mag);
      grid.at((p + shift) % s, (q + shift) % s) = mag;
    }
  }
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buffer);
  return grid;
}

inline MagnitudeGrid magnitude_spectrum(const Image& image, std::size_t side) {
  SpectrumOptions opts;
  opts.side = side;
  return magnitude_spectrum(image, opts);
}

inline PatchGrid patchify(const MagnitudeGrid& grid, std::size_t w) {
  if (w == 0 || grid.side % w != 0)
    throw std::invalid_argument("patchify: grid side not divisible by patch width");
  const std::size_t n = grid.side / w;
  if (n % 2 != 0) throw std::invalid_argument("patchify: patches per side must be even");
  PatchGrid out(n, w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      auto tile = out.block(i, j);
      for (std::size_t m = 0; m < w; ++m)
        for (std::size_t q = 0; q < w; ++q) tile[m * w + q] = grid.at(i * w + m, j * w + q);
    }
  return out;
}

inline MagnitudeGrid unpatchify(const PatchGrid& patches, bool centered = true) {
  const std::size_t side = patches.n * patches.w;
  const std::size_t w = patches.w;
  MagnitudeGrid grid(side, 0.0, centered);
  for (std::size_t i = 0; i < patches.n; ++i)
    for (std::size_t j = 0; j < patches.n; ++j) {
      auto tile = patches.block(i, j);
      for (std::size_t m = 0; m < w; ++m)
        for (std::size_t q = 0; q < w; ++q) grid.at(i * w + m, j * w + q) = tile[m * w + q];
    }
  return grid;
}

/// Min/max rescale to [0, 1]; a constant grid maps to zeros.
inline MagnitudeGrid normalize_grid(const MagnitudeGrid& grid) {
  MagnitudeGrid out = grid;
  if (grid.values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(grid.values.begin(), grid.values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (double& v : out.values) v = (v - min) / range;
  return out;
}

}  // namespace freqlens
