#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fcmir {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> data;

  Image() = default;
  Image(int w, int h, Rgb fill = {}) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * h, fill);
  }

  Rgb& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

/// Luminance raster with intensities in [0,255].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * h, fill);
  }

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_size(const GrayImage& o) const { return width == o.width && height == o.height; }
};

/// One element of a frame sequence: position, wall-clock offset, pixels.
struct Frame {
  std::size_t index = 0;
  double timestamp_s = 0.0;
  Image image;
};

/// ITU-R 601 luma weights.
inline GrayImage to_grayscale(const Image& img) {
  GrayImage g(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const Rgb& p = img.data[i];
    double v = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
    g.data[i] = std::clamp(v, 0.0, 255.0);
  }
  return g;
}

inline GrayImage to_grayscale(const Frame& f) { return to_grayscale(f.image); }

namespace detail {

// Exact box integration of the source grid over the destination cell
// (pixel mixing). Handles both down- and upscaling.
template <typename GetChan, typename SetChan>
void area_resample(int sw, int sh, int dw, int dh, int channels, GetChan get, SetChan set) {
  const double rx = static_cast<double>(sw) / dw;
  const double ry = static_cast<double>(sh) / dh;
  std::vector<double> acc(channels);
  for (int dy = 0; dy < dh; ++dy) {
    const double y0 = dy * ry, y1 = (dy + 1) * ry;
    const int iy0 = static_cast<int>(std::floor(y0));
    const int iy1 = std::min(sh - 1, static_cast<int>(std::ceil(y1)) - 1);
    for (int dx = 0; dx < dw; ++dx) {
      const double x0 = dx * rx, x1 = (dx + 1) * rx;
      const int ix0 = static_cast<int>(std::floor(x0));
      const int ix1 = std::min(sw - 1, static_cast<int>(std::ceil(x1)) - 1);
      std::fill(acc.begin(), acc.end(), 0.0);
      double wsum = 0.0;
      for (int sy = iy0; sy <= iy1; ++sy) {
        const double wy = std::min<double>(sy + 1, y1) - std::max<double>(sy, y0);
        if (wy <= 0) continue;
        for (int sx = ix0; sx <= ix1; ++sx) {
          const double wx = std::min<double>(sx + 1, x1) - std::max<double>(sx, x0);
          if (wx <= 0) continue;
          const double w = wx * wy;
          wsum += w;
          for (int c = 0; c < channels; ++c) acc[c] += w * get(sx, sy, c);
        }
      }
      for (int c = 0; c < channels; ++c) set(dx, dy, c, acc[c] / wsum);
    }
  }
}

}  // namespace detail

inline GrayImage area_resize(const GrayImage& src, int dw, int dh) {
  if (dw < 1 || dh < 1) throw std::invalid_argument("resize target must be positive");
  if (dw == src.width && dh == src.height) return src;
  GrayImage dst(dw, dh);
  detail::area_resample(
      src.width, src.height, dw, dh, 1,
      [&](int x, int y, int) { return src.at(x, y); },
      [&](int x, int y, int, double v) { dst.at(x, y) = std::clamp(v, 0.0, 255.0); });
  return dst;
}

inline Image area_resize(const Image& src, int dw, int dh) {
  if (dw < 1 || dh < 1) throw std::invalid_argument("resize target must be positive");
  if (dw == src.width && dh == src.height) return src;
  Image dst(dw, dh);
  detail::area_resample(
      src.width, src.height, dw, dh, 3,
      [&](int x, int y, int c) {
        const Rgb& p = src.at(x, y);
        return static_cast<double>(c == 0 ? p.r : c == 1 ? p.g : p.b);
      },
      [&](int x, int y, int c, double v) {
        auto q = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        Rgb& p = dst.at(x, y);
        (c == 0 ? p.r : c == 1 ? p.g : p.b) = q;
      });
  return dst;
}

/// Keeps width at or below target, preserving aspect ratio. Never upscales.
inline GrayImage shrink_to_width(const GrayImage& src, int target_w) {
  if (target_w < 1 || src.width <= target_w) return src;
  int dh = std::max(1, static_cast<int>(std::lround(static_cast<double>(src.height) * target_w / src.width)));
  return area_resize(src, target_w, dh);
}

/// Rows [y0, y1) of src.
inline Image crop_rows(const Image& src, int y0, int y1) {
  if (y0 < 0 || y1 > src.height || y0 >= y1) throw std::invalid_argument("bad row range");
  Image dst(src.width, y1 - y0);
  std::copy(src.data.begin() + static_cast<std::size_t>(y0) * src.width,
            src.data.begin() + static_cast<std::size_t>(y1) * src.width, dst.data.begin());
  return dst;
}

inline Image vstack(const Image& top, const Image& bottom) {
  if (top.width != bottom.width) throw std::invalid_argument("width mismatch in vstack");
  Image dst(top.width, top.height + bottom.height);
  std::copy(top.data.begin(), top.data.end(), dst.data.begin());
  std::copy(bottom.data.begin(), bottom.data.end(), dst.data.begin() + top.data.size());
  return dst;
}

/// Separable mean filter with replicate borders; window side 2*radius+1.
inline Image box_blur(const Image& src, int radius) {
  if (radius < 1) return src;
  const int w = src.width, h = src.height;
  std::vector<double> tmp(src.pixel_count() * 3), out(src.pixel_count() * 3);
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  const double inv = 1.0 / (2 * radius + 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double r = 0, g = 0, b = 0;
      for (int k = -radius; k <= radius; ++k) {
        const Rgb& p = src.at(clampi(x + k, 0, w - 1), y);
        r += p.r; g += p.g; b += p.b;
      }
      std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
      tmp[i] = r * inv; tmp[i + 1] = g * inv; tmp[i + 2] = b * inv;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double r = 0, g = 0, b = 0;
      for (int k = -radius; k <= radius; ++k) {
        std::size_t i = (static_cast<std::size_t>(clampi(y + k, 0, h - 1)) * w + x) * 3;
        r += tmp[i]; g += tmp[i + 1]; b += tmp[i + 2];
      }
      std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
      out[i] = r * inv; out[i + 1] = g * inv; out[i + 2] = b * inv;
    }
  Image dst(w, h);
  for (std::size_t i = 0; i < dst.data.size(); ++i) {
    auto q = [&](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
    dst.data[i] = {q(out[i * 3]), q(out[i * 3 + 1]), q(out[i * 3 + 2])};
  }
  return dst;
}

}  // namespace fcmir
