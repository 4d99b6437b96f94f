#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fcmir/image.hpp"
#include "fcmir/imgproc.hpp"
#include "fcmir/util.hpp"

namespace fcmir::synth {

/// mt19937 with explicit derivation helpers. The std distributions are
/// implementation-defined, so frozen expectations use these instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}
  int uniform(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(eng_() % static_cast<std::uint32_t>(hi - lo + 1));
  }
  bool chance(double p) { return eng_() < p * 4294967296.0; }

 private:
  std::mt19937 eng_;
};

inline void fill_rect(Image& img, int x0, int y0, int w, int h, Rgb color) {
  const int x1 = std::min(img.width, x0 + w), y1 = std::min(img.height, y0 + h);
  for (int y = std::max(0, y0); y < y1; ++y)
    for (int x = std::max(0, x0); x < x1; ++x) img.at(x, y) = color;
}

inline Rgb gray_rgb(int v) {
  const auto c = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
  return {c, c, c};
}

namespace detail {

inline void draw_text_row(Image& img, Rng& rng, int x0, int y, int x1, int block_h) {
  int x = x0;
  while (x < x1 - 8) {
    const int bw = rng.uniform(2, 8);
    const int shade = rng.uniform(0, 130);
    const int tint = rng.uniform(0, 2);
    Rgb c = gray_rgb(shade);
    if (tint == 1) c.b = static_cast<std::uint8_t>(std::min(255, shade + 60));
    if (tint == 2) c.r = static_cast<std::uint8_t>(std::min(255, shade + 60));
    fill_rect(img, x, y, bw, block_h, c);
    x += bw + rng.uniform(2, 5);
  }
}

}  // namespace detail

struct PageSpec {
  int width = 384;
  int height = 2400;
  double texture_density = 1.0;  // 0 yields a near-constant page
  std::uint64_t seed = 1;
  int viewport_h = 0;  // when set, the page must cover at least two viewports
};

/// A deterministic app-page lookalike: card layout, text-like block rows,
/// occasional image placeholders, corner speckles. At full density any
/// viewport-sized window carries plenty of trackable structure.
inline Image generate_page(const PageSpec& spec) {
  if (spec.width < 64 || spec.height < 64) throw StageError("generate_page: page too small");
  if (spec.viewport_h > 0 && spec.height < 2 * spec.viewport_h)
    throw StageError("generate_page: page must be at least twice the viewport height");
  Rng rng(spec.seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
  Image page(spec.width, spec.height, gray_rgb(rng.uniform(228, 244)));

  int y = rng.uniform(4, 10);
  while (y < spec.height - 48) {
    const int card_h = rng.uniform(64, 150);
    if (!rng.chance(spec.texture_density)) {
      y += card_h;
      continue;
    }
    const int x0 = rng.uniform(4, 12);
    const int x1 = spec.width - rng.uniform(4, 12);
    fill_rect(page, x0, y, x1 - x0, card_h, gray_rgb(rng.uniform(246, 253)));
    const Rgb border = gray_rgb(rng.uniform(30, 90));
    fill_rect(page, x0, y, x1 - x0, 2, border);
    fill_rect(page, x0, y + card_h - 2, x1 - x0, 2, border);
    fill_rect(page, x0, y, 2, card_h, border);
    fill_rect(page, x1 - 2, y, 2, card_h, border);

    int ty = y + rng.uniform(6, 10);
    detail::draw_text_row(page, rng, x0 + 8, ty, x1 - 8, rng.uniform(9, 12));  // title
    ty += rng.uniform(14, 18);
    if (rng.uniform(0, 3) == 0 && ty + 46 < y + card_h) {  // image placeholder
      const int iw = rng.uniform(80, x1 - x0 - 24);
      fill_rect(page, x0 + 10, ty, iw, 40, gray_rgb(rng.uniform(90, 190)));
      for (int k = 0; k < 4; ++k)
        fill_rect(page, x0 + 10 + rng.uniform(0, iw - 12), ty + rng.uniform(2, 32),
                  rng.uniform(6, 12), rng.uniform(3, 6), gray_rgb(rng.uniform(20, 80)));
      ty += 46;
    }
    while (ty + 10 < y + card_h - 4) {
      detail::draw_text_row(page, rng, x0 + 8, ty, x1 - rng.uniform(8, 90), rng.uniform(5, 8));
      ty += rng.uniform(11, 15);
    }
    y += card_h + rng.uniform(8, 20);
  }
  const int speckles = static_cast<int>(spec.texture_density * spec.height / 24);
  for (int k = 0; k < speckles; ++k)
    fill_rect(page, rng.uniform(0, spec.width - 5), rng.uniform(0, spec.height - 5),
              rng.uniform(2, 4), rng.uniform(2, 4), gray_rgb(rng.uniform(0, 60)));
  return page;
}

inline Image make_status_bar(int width, int height, std::uint64_t seed) {
  Rng rng(seed * 0xBF58476D1CE4E5B9ULL + 11);
  Image bar(width, height, gray_rgb(24));
  detail::draw_text_row(bar, rng, 8, height / 2 - 4, width / 3, 8);                  // clock
  detail::draw_text_row(bar, rng, width - width / 4, height / 2 - 4, width - 8, 8);  // icons
  return bar;
}

inline Image make_nav_bar(int width, int height, std::uint64_t seed) {
  Rng rng(seed * 0x94D049BB133111EBULL + 7);
  Image bar(width, height, gray_rgb(40));
  for (int k = 0; k < 3; ++k) {
    const int cx = width * (2 * k + 1) / 6;
    fill_rect(bar, cx - 12, height / 2 - 10, 24, 20, gray_rgb(rng.uniform(150, 220)));
    fill_rect(bar, cx - 8, height / 2 - 6, 16, 12, gray_rgb(rng.uniform(40, 90)));
  }
  return bar;
}

/// Blur an image just past the detector's threshold, escalating the radius
/// until the Laplacian score actually drops below it.
inline Image blur_until_blurry(const Image& img, double threshold) {
  for (int radius = 2; radius <= 16; radius += 2) {
    Image b = box_blur(img, radius);
    if (laplacian_variance(to_grayscale(b)) < threshold) return b;
  }
  throw StageError("blur_until_blurry: threshold not reached");
}

inline Image add_intensity(const Image& img, int delta) {
  Image out = img;
  for (auto& px : out.data) {
    const int r = px.r + delta, g = px.g + delta, b = px.b + delta;
    if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
      throw StageError("add_intensity: clipping");
    px = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
          static_cast<std::uint8_t>(b)};
  }
  return out;
}

struct Viewport {
  int width = 384;
  int height = 800;
};

/// Everything a test needs to judge pipeline output on synthetic input.
struct SyntheticTruth {
  Image page;
  int viewport_w = 0, viewport_h = 0;
  std::vector<int> scroll_offsets;  // page row at the top of each base frame's content
  int h_top = 0, h_bot = 0;
  std::map<std::size_t, std::size_t> duplicate_map;  // inserted frame -> anchor frame
  std::set<std::size_t> blur_indices;
  std::size_t distinct_screens = 0;
  std::vector<std::size_t> screen_of_frame;  // offset index shown by each frame
};

/// One frame per scroll offset: fixed status bar, the page window, fixed nav
/// bar. The expected seam between group members k and k+1 of a stitched run
/// is scroll_offsets[k+1] - scroll_offsets[first of group].
inline std::pair<std::vector<Frame>, SyntheticTruth> render_sequence(const Image& page,
                                                                     Viewport vp,
                                                                     const std::vector<int>& offsets,
                                                                     int h_top, int h_bot,
                                                                     std::uint64_t seed) {
  const int content_h = vp.height - h_top - h_bot;
  if (content_h < 32) throw StageError("render_sequence: viewport too small for the bars");
  if (page.width != vp.width) throw StageError("render_sequence: page/viewport width mismatch");
  if (offsets.empty()) throw StageError("render_sequence: no offsets");
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i] < 0 || offsets[i] + content_h > page.height)
      throw StageError("render_sequence: offset beyond page");
    if (i > 0 && offsets[i] <= offsets[i - 1])
      throw StageError("render_sequence: offsets must increase");
  }

  SyntheticTruth truth;
  truth.page = page;
  truth.viewport_w = vp.width;
  truth.viewport_h = vp.height;
  truth.scroll_offsets = offsets;
  truth.h_top = h_top;
  truth.h_bot = h_bot;
  truth.distinct_screens = offsets.size();

  const Image status = make_status_bar(vp.width, h_top, seed);
  const Image nav = make_nav_bar(vp.width, h_bot, seed);
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    Frame f;
    f.index = i;
    f.timestamp_s = static_cast<double>(i);
    f.image = vstack(vstack(status, crop_rows(page, offsets[i], offsets[i] + content_h)), nav);
    frames.push_back(std::move(f));
    truth.screen_of_frame.push_back(i);
  }
  return {std::move(frames), std::move(truth)};
}

/// Inject redundancy: exact duplicates and verified-blurry copies, each
/// inserted immediately before its anchor frame (blurs before duplicates
/// within one anchor group), so the last frame of any similarity batch is
/// always an original.
inline std::pair<std::vector<Frame>, SyntheticTruth> corrupt_sequence(
    const std::vector<Frame>& frames, const SyntheticTruth& truth, int dup_count, int blur_count,
    std::uint64_t seed, double blur_threshold = 100.0) {
  if (frames.empty()) throw StageError("corrupt_sequence: empty input");
  if (blur_count > static_cast<int>(frames.size()))
    throw StageError("corrupt_sequence: more blurs than anchor slots");

  Rng rng(seed * 0x2545F4914F6CDD1DULL + 29);
  const auto n = frames.size();
  std::vector<int> dups_at(n, 0);
  std::vector<char> blur_at(n, 0);
  for (int d = 0; d < dup_count; ++d) dups_at[static_cast<std::size_t>(rng.uniform(0, static_cast<int>(n) - 1))]++;
  for (int b = 0; b < blur_count;) {
    const auto a = static_cast<std::size_t>(rng.uniform(0, static_cast<int>(n) - 1));
    if (blur_at[a]) continue;  // one blur per anchor keeps blur predecessors original
    blur_at[a] = 1;
    ++b;
  }

  std::vector<Frame> out;
  SyntheticTruth t = truth;
  t.duplicate_map.clear();
  t.blur_indices.clear();
  t.screen_of_frame.clear();

  auto emit = [&](Image img, std::size_t screen) {
    Frame f;
    f.index = out.size();
    f.timestamp_s = static_cast<double>(out.size());
    f.image = std::move(img);
    out.push_back(std::move(f));
    t.screen_of_frame.push_back(screen);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t screen = truth.screen_of_frame[i];
    if (blur_at[i]) {
      t.blur_indices.insert(out.size());
      emit(blur_until_blurry(frames[i].image, blur_threshold), screen);
    }
    const std::size_t anchor_pos = out.size() + static_cast<std::size_t>(dups_at[i]);
    for (int d = 0; d < dups_at[i]; ++d) {
      t.duplicate_map[out.size()] = anchor_pos;
      emit(frames[i].image, screen);
    }
    emit(frames[i].image, screen);
  }
  return {std::move(out), std::move(t)};
}

// --- corpus conveniences ----------------------------------------------------

struct ScrollSpec {
  int width = 384;
  int viewport_h = 800;
  int h_top = 48;
  int h_bot = 96;
  int n_frames = 6;
  int step_min = 300;
  int step_max = 360;
  double texture_density = 1.0;
  std::uint64_t seed = 1;
};

/// An uncorrupted downward-scroll capture of one page.
inline std::pair<std::vector<Frame>, SyntheticTruth> make_scroll_sequence(const ScrollSpec& s) {
  const int content_h = s.viewport_h - s.h_top - s.h_bot;
  Rng rng(s.seed * 0xDA942042E4DD58B5ULL + 3);
  std::vector<int> offsets{0};
  for (int i = 1; i < s.n_frames; ++i)
    offsets.push_back(offsets.back() + rng.uniform(s.step_min, s.step_max));

  PageSpec ps;
  ps.width = s.width;
  ps.height = std::max(offsets.back() + content_h + 32, 2 * s.viewport_h);
  ps.texture_density = s.texture_density;
  ps.seed = s.seed;
  ps.viewport_h = s.viewport_h;
  return render_sequence(generate_page(ps), {s.width, s.viewport_h}, offsets, s.h_top, s.h_bot,
                         s.seed);
}

struct TrajectorySpec {
  int width = 384;
  int viewport_h = 800;
  int h_top = 48;
  int h_bot = 96;
  int n_screens = 4;
  int dup_count = 6;
  int blur_count = 2;
  double blur_threshold = 100.0;
  double texture_density = 1.0;
  std::uint64_t seed = 1;
};

/// A UI trajectory: distinct screens (non-overlapping page windows) padded
/// with duplicate dwell frames and blurred transition frames. Every screen
/// keeps its clear original, so full coverage is achievable.
inline std::pair<std::vector<Frame>, SyntheticTruth> make_trajectory(const TrajectorySpec& s) {
  const int content_h = s.viewport_h - s.h_top - s.h_bot;
  if (content_h < 64) throw StageError("make_trajectory: viewport too small");

  Rng rng(s.seed * 0x9E6C63D0876A9ULL + 41);
  std::vector<int> offsets;
  int off = 0;
  for (int k = 0; k < s.n_screens; ++k) {
    offsets.push_back(off);
    off += content_h + rng.uniform(8, 40);
  }

  PageSpec ps;
  ps.width = s.width;
  ps.height = off + content_h;
  ps.texture_density = s.texture_density;
  ps.seed = s.seed;
  ps.viewport_h = s.viewport_h;
  auto [base, truth] =
      render_sequence(generate_page(ps), {s.width, s.viewport_h}, offsets, s.h_top, s.h_bot, s.seed);
  for (const Frame& f : base)
    if (laplacian_variance(to_grayscale(f.image)) < 2 * s.blur_threshold)
      throw StageError("make_trajectory: screen not crisp enough for the blur oracle");
  return corrupt_sequence(base, truth, s.dup_count, s.blur_count, s.seed, s.blur_threshold);
}

}  // namespace fcmir::synth
