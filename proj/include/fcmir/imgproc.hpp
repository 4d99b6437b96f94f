#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fcmir/bitstring.hpp"
#include "fcmir/image.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

enum class Comparator { phash_ssim, l1, phash_l1 };
enum class CompareAgainst { last_sampled, last_retained };

inline const char* to_string(Comparator c) {
  switch (c) {
    case Comparator::phash_ssim: return "phash_ssim";
    case Comparator::l1: return "l1";
    case Comparator::phash_l1: return "phash_l1";
  }
  return "?";
}

inline Comparator comparator_from_string(const std::string& s) {
  if (s == "phash_ssim") return Comparator::phash_ssim;
  if (s == "l1") return Comparator::l1;
  if (s == "phash_l1") return Comparator::phash_l1;
  throw ConfigError("unknown comparator: " + s);
}

struct SamplingParams {
  double interval_s = 1.0;
  double fps = 30.0;
  double blur_threshold = 100.0;
  int phash_threshold = 10;
  double ssim_threshold = 0.85;
  double l1_threshold = 8.0;
  double histogram_reject = 0.5;
  Comparator comparator = Comparator::phash_ssim;
  CompareAgainst compare_against = CompareAgainst::last_sampled;

  void validate() const {
    if (!(interval_s > 0)) throw ConfigError("interval_s must be > 0");
    if (!(fps > 0)) throw ConfigError("fps must be > 0");
    if (blur_threshold < 0) throw ConfigError("blur_threshold must be >= 0");
    if (phash_threshold < 0) throw ConfigError("phash_threshold must be >= 0");
    if (ssim_threshold < 0 || ssim_threshold > 1) throw ConfigError("ssim_threshold must be in [0,1]");
    if (l1_threshold < 0) throw ConfigError("l1_threshold must be >= 0");
  }
};

struct SsimParams {
  double c1 = 6.5025;    // (0.01*255)^2
  double c2 = 58.5225;   // (0.03*255)^2
  int window = 16;       // adaptive-window floor
  double overlap_frac = 0.5;
  int downsample_width = 256;

  void validate() const {
    if (!(c1 > 0) || !(c2 > 0)) throw ConfigError("ssim constants must be > 0");
    if (window < 4) throw ConfigError("ssim window must be >= 4");
    if (overlap_frac < 0 || overlap_frac >= 1) throw ConfigError("overlap_frac must be in [0,1)");
    if (downsample_width < 1) throw ConfigError("downsample_width must be >= 1");
  }
};

struct PerceptualHash {
  BitString bits = BitString::zeros(64);
};

inline int hamming_distance(const PerceptualHash& a, const PerceptualHash& b) {
  return hamming_distance(a.bits, b.bits);
}

/// Variance of the 4-neighbor Laplacian response with replicate borders.
/// Images smaller than 3x3 score 0.
inline double laplacian_variance(const GrayImage& g) {
  const int w = g.width, h = g.height;
  if (w < 3 || h < 3) return 0.0;
  std::vector<double> resp(g.pixel_count());
  auto cx = [&](int x) { return x < 0 ? 0 : (x >= w ? w - 1 : x); };
  auto cy = [&](int y) { return y < 0 ? 0 : (y >= h ? h - 1 : y); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      resp[static_cast<std::size_t>(y) * w + x] =
          g.at(cx(x - 1), y) + g.at(cx(x + 1), y) + g.at(x, cy(y - 1)) + g.at(x, cy(y + 1)) -
          4.0 * g.at(x, y);
  const double n = static_cast<double>(resp.size());
  const double mean = std::accumulate(resp.begin(), resp.end(), 0.0) / n;
  double var = 0.0;
  for (double v : resp) var += (v - mean) * (v - mean);
  return var / n;
}

inline bool is_blurry(const GrayImage& g, double threshold) {
  return laplacian_variance(g) < threshold;
}

namespace detail {

constexpr int kPhashSize = 32;
constexpr int kPhashKeptCoeffs = 64;  // low-frequency band after dropping DC

// Orthonormal type-II DCT, separable.
inline const std::array<double, kPhashSize * kPhashSize>& dct_table() {
  static const auto table = [] {
    std::array<double, kPhashSize * kPhashSize> t{};
    const double n = kPhashSize;
    for (int u = 0; u < kPhashSize; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (int i = 0; i < kPhashSize; ++i)
        t[static_cast<std::size_t>(u) * kPhashSize + i] =
            a * std::cos((2 * i + 1) * u * 3.14159265358979323846 / (2 * n));
    }
    return t;
  }();
  return table;
}

// (row, col) pairs in JPEG-style zigzag order over a kPhashSize grid.
inline const std::vector<std::pair<int, int>>& zigzag_order() {
  static const auto order = [] {
    std::vector<std::pair<int, int>> o;
    const int n = kPhashSize;
    for (int d = 0; d <= 2 * (n - 1); ++d) {
      if (d % 2 == 0) {
        for (int r = std::min(d, n - 1); r >= std::max(0, d - n + 1); --r) o.emplace_back(r, d - r);
      } else {
        for (int r = std::max(0, d - n + 1); r <= std::min(d, n - 1); ++r) o.emplace_back(r, d - r);
      }
    }
    return o;
  }();
  return order;
}

}  // namespace detail

/// 64-bit DCT hash: 32x32 area resize, 2-D DCT-II, the 64 lowest-frequency
/// coefficients after the DC term (zigzag order), thresholded at their median.
inline PerceptualHash phash(const GrayImage& g) {
  using namespace detail;
  const GrayImage small = area_resize(g, kPhashSize, kPhashSize);

  // rows then columns
  std::array<double, kPhashSize * kPhashSize> tmp{}, freq{};
  const auto& t = dct_table();
  for (int y = 0; y < kPhashSize; ++y)
    for (int u = 0; u < kPhashSize; ++u) {
      double s = 0;
      for (int x = 0; x < kPhashSize; ++x)
        s += small.at(x, y) * t[static_cast<std::size_t>(u) * kPhashSize + x];
      tmp[static_cast<std::size_t>(y) * kPhashSize + u] = s;
    }
  for (int u = 0; u < kPhashSize; ++u)
    for (int v = 0; v < kPhashSize; ++v) {
      double s = 0;
      for (int y = 0; y < kPhashSize; ++y)
        s += tmp[static_cast<std::size_t>(y) * kPhashSize + u] *
             t[static_cast<std::size_t>(v) * kPhashSize + y];
      freq[static_cast<std::size_t>(v) * kPhashSize + u] = s;
    }

  const auto& zz = zigzag_order();
  std::array<double, kPhashKeptCoeffs> coeffs{};
  for (int i = 0; i < kPhashKeptCoeffs; ++i) {
    auto [r, c] = zz[static_cast<std::size_t>(i) + 1];  // skip (0,0)
    coeffs[i] = freq[static_cast<std::size_t>(r) * kPhashSize + c];
  }
  auto sorted = coeffs;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * (sorted[kPhashKeptCoeffs / 2 - 1] + sorted[kPhashKeptCoeffs / 2]);

  PerceptualHash h;
  for (int i = 0; i < kPhashKeptCoeffs; ++i)
    h.bits.set_bit(static_cast<std::uint32_t>(i), coeffs[i] > median);
  return h;
}

/// Fast reject before SSIM: true when the images may still be similar.
/// Compares 64-bin normalized intensity histograms by L1 distance.
inline bool histogram_prescreen(const GrayImage& a, const GrayImage& b, double reject_threshold = 0.5) {
  std::array<double, 64> ha{}, hb{};
  for (double v : a.data) ha[std::min<std::size_t>(63, static_cast<std::size_t>(v / 4.0))] += 1.0;
  for (double v : b.data) hb[std::min<std::size_t>(63, static_cast<std::size_t>(v / 4.0))] += 1.0;
  double dist = 0;
  for (int i = 0; i < 64; ++i) dist += std::abs(ha[i] / a.pixel_count() - hb[i] / b.pixel_count());
  return dist <= reject_threshold;
}

namespace detail {

inline double ssim_window(const GrayImage& a, const GrayImage& b, int x0, int y0, int side_w,
                          int side_h, const SsimParams& p) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const double n = static_cast<double>(side_w) * side_h;
  for (int y = y0; y < y0 + side_h; ++y)
    for (int x = x0; x < x0 + side_w; ++x) {
      const double va = a.at(x, y), vb = b.at(x, y);
      sx += va;
      sy += vb;
      sxx += va * va;
      syy += vb * vb;
      sxy += va * vb;
    }
  const double mx = sx / n, my = sy / n;
  const double vx = sxx / n - mx * mx;
  const double vy = syy / n - my * my;
  const double cov = sxy / n - mx * my;
  return ((2 * mx * my + p.c1) * (2 * cov + p.c2)) /
         ((mx * mx + my * my + p.c1) * (vx + vy + p.c2));
}

// Window start positions with the last window clamped to the edge.
inline std::vector<int> window_starts(int extent, int side, int stride) {
  std::vector<int> starts;
  for (int s = 0; s + side <= extent; s += stride) starts.push_back(s);
  if (starts.empty() || starts.back() + side < extent) starts.push_back(extent - side);
  return starts;
}

}  // namespace detail

/// Whole-image SSIM with population statistics.
inline double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& p = {}) {
  if (!a.same_size(b)) throw StageError("ssim: dimension mismatch");
  return detail::ssim_window(a, b, 0, 0, a.width, a.height, p);
}

/// Minimum SSIM over overlapping adaptive windows after downsampling both
/// images to p.downsample_width. Sensitive to local edits a global score
/// would average away.
inline double min_window_ssim(const GrayImage& a, const GrayImage& b, const SsimParams& p = {}) {
  const GrayImage da = shrink_to_width(a, p.downsample_width);
  const GrayImage db = shrink_to_width(b, p.downsample_width);
  if (!da.same_size(db)) throw StageError("min_window_ssim: dimension mismatch");

  const int minside = std::min(da.width, da.height);
  int side = std::max(p.window, minside / 8);
  side = std::min(side, minside);
  const int stride = std::max(1, static_cast<int>(std::lround(side * (1.0 - p.overlap_frac))));

  double best = 1.0;
  for (int y : detail::window_starts(da.height, side, stride))
    for (int x : detail::window_starts(da.width, side, stride))
      best = std::min(best, detail::ssim_window(da, db, x, y, side, side, p));
  return best;
}

/// Mean absolute intensity difference.
inline double l1_distance(const GrayImage& a, const GrayImage& b) {
  if (!a.same_size(b)) throw StageError("l1_distance: dimension mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

namespace detail {

/// Lazily computed per-frame features so sequential comparisons don't redo
/// grayscale/hash/downsample work for the shared frame.
struct FrameFeatures {
  const Frame* frame = nullptr;
  std::optional<GrayImage> gray_full;
  std::optional<GrayImage> gray_small;
  std::optional<PerceptualHash> hash;

  explicit FrameFeatures(const Frame& f) : frame(&f) {}

  const GrayImage& gray() {
    if (!gray_full) gray_full = to_grayscale(*frame);
    return *gray_full;
  }
  const GrayImage& small(int width) {
    if (!gray_small) gray_small = shrink_to_width(gray(), width);
    return *gray_small;
  }
  const PerceptualHash& phash_of() {
    if (!hash) hash = phash(gray());
    return *hash;
  }
};

inline bool hybrid_similar_impl(FrameFeatures& a, FrameFeatures& b, const SamplingParams& p,
                                const SsimParams& sp) {
  // A resolution change is a content change.
  if (!a.frame->image.same_size(b.frame->image)) return false;

  auto phash_gate = [&] {
    return hamming_distance(a.phash_of().bits, b.phash_of().bits) <= p.phash_threshold;
  };
  auto l1_confirm = [&] {
    return l1_distance(a.small(sp.downsample_width), b.small(sp.downsample_width)) <= p.l1_threshold;
  };

  switch (p.comparator) {
    case Comparator::l1:
      return l1_confirm();
    case Comparator::phash_l1:
      return phash_gate() && l1_confirm();
    case Comparator::phash_ssim: {
      if (!phash_gate()) return false;
      const GrayImage& da = a.small(sp.downsample_width);
      const GrayImage& db = b.small(sp.downsample_width);
      if (!histogram_prescreen(da, db, p.histogram_reject)) return false;
      return min_window_ssim(da, db, sp) >= p.ssim_threshold;
    }
  }
  return false;
}

}  // namespace detail

/// Two-stage similarity decision: a global pHash gate followed by local
/// confirmation (windowed SSIM or L1, per the configured comparator).
inline bool hybrid_similar(const Frame& prev, const Frame& cur, const SamplingParams& p,
                           const SsimParams& sp = {}) {
  detail::FrameFeatures a(prev), b(cur);
  return detail::hybrid_similar_impl(a, b, p, sp);
}

}  // namespace fcmir
