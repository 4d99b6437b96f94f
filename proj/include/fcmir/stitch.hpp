#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "fcmir/bitstring.hpp"
#include "fcmir/image.hpp"
#include "fcmir/imgproc.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

struct Keypoint {
  double x = 0, y = 0;
  double score = 0;
  double orientation = 0;  // radians
};

struct Descriptor {
  BitString bits = BitString::zeros(256);
  Keypoint keypoint;
};

struct MatchPair {
  std::size_t query_index = 0;
  std::size_t best_train_index = 0;
  int d1 = 0;  // Hamming distance of the best match
  int d2 = 0;  // and of the second-best
};

struct MatchPoint {
  double x_a = 0, y_a = 0;  // accumulated image
  double x_b = 0, y_b = 0;  // incoming image
};

struct StitchParams {
  double ratio_threshold = 0.5;
  int knn_k = 2;
  int min_matches = 10;
  int max_features = 500;
  double fast_threshold = 20;
  int strip_height = 16;
  int bar_hamming_max = 3;
  double max_bar_frac = 0.25;
  double max_x_drift = 5;
  int margin = 20;  // keypoint border guard, covers rotated descriptor taps

  void validate() const {
    if (!(ratio_threshold > 0 && ratio_threshold < 1))
      throw ConfigError("ratio_threshold must be in (0,1)");
    if (knn_k < 2) throw ConfigError("knn_k must be >= 2");
    if (min_matches < 4) throw ConfigError("min_matches must be >= 4");
    if (max_features < 1) throw ConfigError("max_features must be >= 1");
    if (strip_height < 4) throw ConfigError("strip_height must be >= 4");
    if (!(max_bar_frac >= 0 && max_bar_frac < 0.5)) throw ConfigError("max_bar_frac must be in [0,0.5)");
  }
};

struct BarHeights {
  int top = 0;
  int bottom = 0;
};

struct StitchedImage {
  Image pixels;
  std::vector<std::size_t> member_indices;  // source keyframe indices
  std::vector<double> seam_offsets;         // y_pos per stitch, content coordinates
  int h_top = 0, h_bot = 0;
};

/// Shared top/bottom UI chrome between two equal-width frames, found by
/// per-strip perceptual-hash agreement and capped so content never vanishes.
inline BarHeights detect_common_bars(const Frame& a, const Frame& b, const StitchParams& p = {}) {
  if (a.image.width != b.image.width)
    throw StageError("detect_common_bars: width mismatch");
  const GrayImage ga = to_grayscale(a.image), gb = to_grayscale(b.image);
  const int h = std::min(ga.height, gb.height);
  const int max_strips = static_cast<int>(p.max_bar_frac * h) / p.strip_height;

  auto strip_of = [&](const GrayImage& g, int y0) {
    GrayImage s;
    s.width = g.width;
    s.height = p.strip_height;
    s.data.assign(g.data.begin() + static_cast<std::size_t>(y0) * g.width,
                  g.data.begin() + static_cast<std::size_t>(y0 + p.strip_height) * g.width);
    return s;
  };
  auto strips_match = [&](int ya, int yb) {
    return hamming_distance(phash(strip_of(ga, ya)).bits, phash(strip_of(gb, yb)).bits) <=
           static_cast<std::uint32_t>(p.bar_hamming_max);
  };

  BarHeights bars;
  for (int s = 0; s < max_strips; ++s) {
    if (!strips_match(s * p.strip_height, s * p.strip_height)) break;
    bars.top += p.strip_height;
  }
  for (int s = 0; s < max_strips; ++s) {
    const int ya = ga.height - (s + 1) * p.strip_height;
    const int yb = gb.height - (s + 1) * p.strip_height;
    if (!strips_match(ya, yb)) break;
    bars.bottom += p.strip_height;
  }
  return bars;
}

namespace detail {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
inline constexpr std::array<std::pair<int, int>, 16> kFastCircle{{{0, -3},
                                                                  {1, -3},
                                                                  {2, -2},
                                                                  {3, -1},
                                                                  {3, 0},
                                                                  {3, 1},
                                                                  {2, 2},
                                                                  {1, 3},
                                                                  {0, 3},
                                                                  {-1, 3},
                                                                  {-2, 2},
                                                                  {-3, 1},
                                                                  {-3, 0},
                                                                  {-3, -1},
                                                                  {-2, -2},
                                                                  {-1, -3}}};

inline bool fast9_corner(const GrayImage& g, int x, int y, double t, double* score) {
  const double c = g.at(x, y);
  // Quick reject on the compass points; a 9-run covers at least 2 of the 4.
  int bright4 = 0, dark4 = 0;
  for (int i : {0, 4, 8, 12}) {
    const double v = g.at(x + kFastCircle[i].first, y + kFastCircle[i].second);
    bright4 += v > c + t;
    dark4 += v < c - t;
  }
  if (bright4 < 2 && dark4 < 2) return false;

  std::array<int, 16> flag{};
  std::array<double, 16> val{};
  for (int i = 0; i < 16; ++i) {
    val[i] = g.at(x + kFastCircle[i].first, y + kFastCircle[i].second);
    flag[i] = val[i] > c + t ? 1 : (val[i] < c - t ? -1 : 0);
  }
  int run = 0, best_run = 0, prev_flag = 0;
  for (int i = 0; i < 32; ++i) {
    const int f = flag[i & 15];
    if (f != 0 && f == prev_flag) {
      ++run;
    } else {
      run = f != 0 ? 1 : 0;
    }
    prev_flag = f;
    best_run = std::max(best_run, run);
    if (best_run >= 16) break;
  }
  if (best_run < 9) return false;

  double s = 0;
  for (int i = 0; i < 16; ++i) s += std::max(0.0, std::abs(val[i] - c) - t);
  *score = s;
  return true;
}

inline double intensity_centroid_angle(const GrayImage& g, int x, int y) {
  constexpr int r = 15;
  double m10 = 0, m01 = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > r * r) continue;
      const double v = g.at(x + dx, y + dy);
      m10 += dx * v;
      m01 += dy * v;
    }
  return std::atan2(m01, m10);
}

// Fixed seeded 256-pair sampling pattern, coordinates in [-13,13].
inline const std::array<std::array<int, 4>, 256>& brief_pattern() {
  static const auto pattern = [] {
    std::array<std::array<int, 4>, 256> pat{};
    std::mt19937 rng(42);
    for (auto& pair : pat)
      for (auto& coord : pair) coord = static_cast<int>(rng() % 27) - 13;
    return pat;
  }();
  return pattern;
}

}  // namespace detail

/// FAST-9 corners with non-max suppression, intensity-centroid orientation,
/// and steered 256-bit binary descriptors from a fixed sampling pattern.
inline std::vector<Descriptor> orb_features(const GrayImage& g, const StitchParams& p = {}) {
  if (g.width < 32 || g.height < 32) throw StageError("orb_features: image too small");
  const int m = p.margin;
  if (g.width <= 2 * m || g.height <= 2 * m) return {};

  std::vector<double> score(g.pixel_count(), 0.0);
  std::vector<std::pair<int, int>> candidates;
  for (int y = m; y < g.height - m; ++y)
    for (int x = m; x < g.width - m; ++x) {
      double s = 0;
      if (detail::fast9_corner(g, x, y, p.fast_threshold, &s)) {
        score[static_cast<std::size_t>(y) * g.width + x] = s;
        candidates.emplace_back(x, y);
      }
    }

  // 3x3 non-max suppression; scan-order tie-break keeps one of a plateau.
  std::vector<Keypoint> kps;
  for (auto [x, y] : candidates) {
    const double s = score[static_cast<std::size_t>(y) * g.width + x];
    bool keep = true;
    for (int dy = -1; dy <= 1 && keep; ++dy)
      for (int dx = -1; dx <= 1 && keep; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const double sn = score[static_cast<std::size_t>(y + dy) * g.width + (x + dx)];
        if (sn > s || (sn == s && (dy < 0 || (dy == 0 && dx < 0)))) keep = false;
      }
    if (keep) kps.push_back({static_cast<double>(x), static_cast<double>(y), s, 0.0});
  }

  std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (kps.size() > static_cast<std::size_t>(p.max_features))
    kps.resize(static_cast<std::size_t>(p.max_features));

  std::vector<Descriptor> out;
  out.reserve(kps.size());
  const auto& pat = detail::brief_pattern();
  for (auto& kp : kps) {
    const int x = static_cast<int>(kp.x), y = static_cast<int>(kp.y);
    kp.orientation = detail::intensity_centroid_angle(g, x, y);
    const double c = std::cos(kp.orientation), s = std::sin(kp.orientation);
    Descriptor d;
    d.keypoint = kp;
    for (int i = 0; i < 256; ++i) {
      const auto& q = pat[static_cast<std::size_t>(i)];
      auto rot_x = [&](int px, int py) { return static_cast<int>(std::lround(px * c - py * s)); };
      auto rot_y = [&](int px, int py) { return static_cast<int>(std::lround(px * s + py * c)); };
      const double v1 = g.at(x + rot_x(q[0], q[1]), y + rot_y(q[0], q[1]));
      const double v2 = g.at(x + rot_x(q[2], q[3]), y + rot_y(q[2], q[3]));
      d.bits.set_bit(static_cast<std::uint32_t>(i), v1 < v2);
    }
    out.push_back(std::move(d));
  }
  return out;
}

/// For each query descriptor, the two nearest train descriptors by Hamming
/// distance. Queries are omitted when fewer than two train descriptors exist.
inline std::vector<MatchPair> knn_match(const std::vector<Descriptor>& query,
                                        const std::vector<Descriptor>& train, int k = 2) {
  if (k < 2) throw ConfigError("knn_match: k must be >= 2");
  std::vector<MatchPair> out;
  if (train.size() < 2) return out;
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    std::size_t best = 0;
    std::uint32_t d1 = UINT32_MAX, d2 = UINT32_MAX;
    for (std::size_t ti = 0; ti < train.size(); ++ti) {
      const std::uint32_t d = hamming_distance(query[qi].bits, train[ti].bits);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = ti;
      } else if (d < d2) {
        d2 = d;
      }
    }
    out.push_back({qi, best, static_cast<int>(d1), static_cast<int>(d2)});
  }
  return out;
}

/// Lowe ratio test: keep matches whose best distance is decisively smaller
/// than the runner-up. Degenerate d2 = 0 pairs are rejected.
inline std::vector<MatchPair> lowe_filter(const std::vector<MatchPair>& pairs, double tau) {
  if (!(tau > 0 && tau < 1)) throw ConfigError("lowe_filter: tau must be in (0,1)");
  std::vector<MatchPair> out;
  for (const auto& m : pairs)
    if (m.d2 > 0 && static_cast<double>(m.d1) / m.d2 < tau) out.push_back(m);
  return out;
}

/// Vertical overlap position: the upper median of per-match y differences,
/// guarded by the vertical-scroll motion model (bounded horizontal drift).
inline double overlap_offset(const std::vector<MatchPoint>& matches, const StitchParams& p = {}) {
  if (matches.size() < static_cast<std::size_t>(p.min_matches))
    throw StageError("overlap_offset: too few matches");
  std::vector<double> xdrift, offsets;
  xdrift.reserve(matches.size());
  offsets.reserve(matches.size());
  for (const auto& m : matches) {
    xdrift.push_back(std::abs(m.x_a - m.x_b));
    offsets.push_back(m.y_a - m.y_b);
  }
  auto upper_median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  if (upper_median(xdrift) > p.max_x_drift) throw StageError("overlap_offset: horizontal drift exceeded");
  return upper_median(offsets);
}

struct PairStitch {
  Image pixels;
  double y_pos = 0;
};

/// One stitch attempt on bar-stripped content. Returns nothing when the
/// feature pipeline cannot establish a valid overlap; the caller treats that
/// as a batch boundary.
inline std::optional<PairStitch> stitch_pair(const Image& acc, const Image& next,
                                             const StitchParams& p = {}) {
  try {
    const std::vector<Descriptor> train = orb_features(to_grayscale(acc), p);
    const std::vector<Descriptor> query = orb_features(to_grayscale(next), p);
    const auto matched = lowe_filter(knn_match(query, train, p.knn_k), p.ratio_threshold);
    std::vector<MatchPoint> points;
    points.reserve(matched.size());
    for (const auto& m : matched)
      points.push_back({train[m.best_train_index].keypoint.x, train[m.best_train_index].keypoint.y,
                        query[m.query_index].keypoint.x, query[m.query_index].keypoint.y});
    const double y_pos = overlap_offset(points, p);
    if (!(y_pos > 0 && y_pos < acc.height)) return std::nullopt;
    const int y = static_cast<int>(std::lround(y_pos));
    PairStitch out;
    out.pixels = vstack(crop_rows(acc, 0, y), next);
    out.y_pos = y_pos;
    return out;
  } catch (const StageError&) {
    return std::nullopt;
  }
}

/// Batch accumulation over ordered keyframes: strip the common bars, attempt
/// a pairwise stitch, re-attach the bars of the group's first frame on
/// success, emit the accumulator and start a new group on failure.
inline std::vector<StitchedImage> stitch_batch(const std::vector<Frame>& frames,
                                               const StitchParams& p = {}) {
  if (frames.empty()) throw StageError("stitch_batch: empty input");
  p.validate();

  std::vector<StitchedImage> out;
  StitchedImage cur;
  cur.pixels = frames[0].image;
  cur.member_indices = {frames[0].index};
  const Frame* group_first = &frames[0];

  for (std::size_t i = 1; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    std::optional<PairStitch> stitched;
    BarHeights bars;
    if (f.image.width == cur.pixels.width) {
      Frame acc_frame{0, 0.0, cur.pixels};
      bars = detect_common_bars(acc_frame, f, p);
      const Image acc_content = crop_rows(cur.pixels, bars.top, cur.pixels.height - bars.bottom);
      const Image next_content = crop_rows(f.image, bars.top, f.image.height - bars.bottom);
      stitched = stitch_pair(acc_content, next_content, p);
    }
    if (stitched) {
      Image with_bars = std::move(stitched->pixels);
      if (bars.top > 0) with_bars = vstack(crop_rows(group_first->image, 0, bars.top), with_bars);
      if (bars.bottom > 0)
        with_bars = vstack(with_bars, crop_rows(group_first->image,
                                                group_first->image.height - bars.bottom,
                                                group_first->image.height));
      cur.pixels = std::move(with_bars);
      cur.member_indices.push_back(f.index);
      cur.seam_offsets.push_back(stitched->y_pos);
      cur.h_top = bars.top;
      cur.h_bot = bars.bottom;
    } else {
      out.push_back(std::move(cur));
      cur = StitchedImage{};
      cur.pixels = f.image;
      cur.member_indices = {f.index};
      group_first = &f;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace fcmir
