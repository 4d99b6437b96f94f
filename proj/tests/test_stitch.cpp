#include <catch2/catch_amalgamated.hpp>

#include "fcmir/stitch.hpp"
#include "fcmir/synth.hpp"
#include "helpers.hpp"

using namespace fcmir;

namespace {

Image tall_page(std::uint64_t seed, int width = 384, int height = 2000) {
  synth::PageSpec ps;
  ps.width = width;
  ps.height = height;
  ps.viewport_h = 0;
  ps.seed = seed;
  return synth::generate_page(ps);
}

}  // namespace

TEST_CASE("orb features are deterministic, bounded, and need texture") {
  const GrayImage g = to_grayscale(tall_page(42, 256, 512));
  const auto a = orb_features(g), b = orb_features(g);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() <= 500);
  CHECK(a.size() >= 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].bits == b[i].bits);
    CHECK(a[i].keypoint.x == b[i].keypoint.x);
    CHECK(a[i].keypoint.y == b[i].keypoint.y);
  }
  CHECK(orb_features(GrayImage(64, 64, 128.0)).empty());
  CHECK_THROWS_AS(orb_features(GrayImage(16, 16, 0.0)), StageError);
}

TEST_CASE("a bright square yields corners near its corners") {
  GrayImage g(128, 128, 0.0);
  for (int y = 40; y < 88; ++y)
    for (int x = 40; x < 88; ++x) g.at(x, y) = 255.0;
  const auto feats = orb_features(g);
  REQUIRE(feats.size() >= 4);
  int near_corners = 0;
  for (const auto& d : feats)
    for (const double cx : {40.0, 87.0})
      for (const double cy : {40.0, 87.0})
        if (std::abs(d.keypoint.x - cx) <= 3 && std::abs(d.keypoint.y - cy) <= 3) ++near_corners;
  CHECK(near_corners >= 4);
}

TEST_CASE("knn matching orders distances and omits thin train sets") {
  const GrayImage g = to_grayscale(tall_page(43, 256, 512));
  const auto feats = orb_features(g);
  REQUIRE(feats.size() >= 10);

  const auto self = knn_match(feats, feats, 2);
  REQUIRE(self.size() == feats.size());
  for (const auto& m : self) {
    CHECK(m.d1 == 0);  // own descriptor is the best match
    CHECK(m.best_train_index == m.query_index);
    CHECK(m.d1 <= m.d2);
  }

  std::vector<Descriptor> one{feats.front()};
  CHECK(knn_match(feats, one, 2).empty());
  CHECK(knn_match(feats, {}, 2).empty());
  CHECK_THROWS_AS(knn_match(feats, feats, 1), ConfigError);
}

TEST_CASE("lowe ratio filter keeps only decisive matches") {
  std::vector<MatchPair> pairs{
      {0, 0, 10, 30},  // 0.333 < 0.5 kept
      {1, 1, 20, 30},  // 0.667 rejected
      {2, 2, 0, 0},    // degenerate rejected
      {3, 3, 0, 25},   // 0 < 0.5 kept
  };
  const auto kept = lowe_filter(pairs, 0.5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].query_index == 0);
  CHECK(kept[1].query_index == 3);

  const auto loose = lowe_filter(pairs, 0.9);
  CHECK(loose.size() >= kept.size());  // monotone in tau
  for (const auto& m : kept) {
    bool found = false;
    for (const auto& l : loose) found = found || l.query_index == m.query_index;
    CHECK(found);  // subset
  }
  CHECK_THROWS_AS(lowe_filter(pairs, 1.0), ConfigError);
}

TEST_CASE("overlap offset takes the upper median and guards the motion model") {
  StitchParams p;
  p.min_matches = 4;

  std::vector<MatchPoint> matches;
  for (const double off : {100.0, 101.0, 99.0, 100.0, 250.0})
    matches.push_back({10.0, off, 10.0, 0.0});
  CHECK(overlap_offset(matches, p) == 100.0);

  std::vector<MatchPoint> even{{0, 10, 0, 0}, {0, 20, 0, 0}, {0, 10, 1, 0}, {0, 20, 1, 0}};
  CHECK(overlap_offset(even, p) == 20.0);  // upper median of [10,10,20,20]

  CHECK_THROWS_AS(overlap_offset(matches, StitchParams{}), StageError);  // default min 10

  std::vector<MatchPoint> drifting;
  for (int i = 0; i < 12; ++i)
    drifting.push_back({100.0, 200.0, 100.0 - 40.0, 100.0});
  CHECK_THROWS_AS(overlap_offset(drifting, StitchParams{}), StageError);
}

TEST_CASE("stitch pair recovers an exact synthetic crop offset") {
  const Image page = tall_page(44);
  const Image acc = crop_rows(page, 0, 500);
  const Image next = crop_rows(page, 300, 800);
  const auto result = stitch_pair(acc, next);
  REQUIRE(result.has_value());
  CHECK(result->y_pos == Catch::Approx(300.0).margin(2.0));
  REQUIRE(result->pixels.height == 800);

  const Image expected = crop_rows(page, 0, 800);
  std::size_t mismatches = 0;
  for (int y = 0; y < 800; ++y)
    for (int x = 0; x < page.width; ++x) {
      const auto& a = result->pixels.at(x, y);
      const auto& b = expected.at(x, y);
      mismatches += a.r != b.r || a.g != b.g || a.b != b.b;
    }
  // only seam rounding may disturb pixels, and a 2 px seam error moves
  // at most 2 rows
  CHECK(mismatches <= static_cast<std::size_t>(4 * page.width));
}

TEST_CASE("stitch pair refuses near-duplicates and unrelated content") {
  const Image page = tall_page(45);
  const Image view = crop_rows(page, 100, 600);
  CHECK_FALSE(stitch_pair(view, view).has_value());  // y_pos ~ 0 is invalid

  const Image other = crop_rows(tall_page(46), 100, 600);
  CHECK_FALSE(stitch_pair(view, other).has_value());
}

TEST_CASE("common bars are found within one strip of the truth") {
  synth::ScrollSpec spec;
  spec.seed = 47;
  spec.n_frames = 3;
  auto [frames, truth] = synth::make_scroll_sequence(spec);
  const BarHeights bars = detect_common_bars(frames[0], frames[1]);
  CHECK(std::abs(bars.top - truth.h_top) <= 16);
  CHECK(std::abs(bars.bottom - truth.h_bot) <= 16);
}

TEST_CASE("identical frames cap bar detection at a quarter of the height") {
  synth::ScrollSpec spec;
  spec.seed = 48;
  spec.n_frames = 2;
  auto [frames, truth] = synth::make_scroll_sequence(spec);
  const Frame& f = frames[0];
  const BarHeights bars = detect_common_bars(f, f);
  const int h = f.image.height;
  const int cap = (h / 4) / 16 * 16;
  CHECK(bars.top == cap);
  CHECK(bars.bottom == cap);
  CHECK(bars.top + bars.bottom < h);
}

TEST_CASE("unrelated images share no bars") {
  const Image a = crop_rows(tall_page(49), 0, 640);
  const Image b = crop_rows(tall_page(50), 0, 640);
  const BarHeights bars = detect_common_bars({0, 0.0, a}, {1, 0.1, b});
  CHECK(bars.top == 0);
  CHECK(bars.bottom == 0);
}

TEST_CASE("bar detection requires equal widths") {
  const Image a(64, 64, {0, 0, 0}), b(65, 64, {0, 0, 0});
  CHECK_THROWS_AS(detect_common_bars({0, 0.0, a}, {1, 0.1, b}), StageError);
}

TEST_CASE("stitch batch reconstructs a scroll run with tight seams") {
  synth::ScrollSpec spec;
  spec.seed = 51;
  spec.n_frames = 4;
  auto [frames, truth] = synth::make_scroll_sequence(spec);
  const auto out = stitch_batch(frames, {});
  REQUIRE(out.size() == 1);
  const StitchedImage& s = out.front();
  CHECK(s.member_indices == std::vector<std::size_t>{0, 1, 2, 3});
  REQUIRE(s.seam_offsets.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const double expected = truth.scroll_offsets[k + 1] - truth.scroll_offsets[0];
    CHECK(std::abs(s.seam_offsets[k] - expected) <= 2.0);
  }

  // height identity: bars + accumulated content
  const int content_h = truth.viewport_h - truth.h_top - truth.h_bot;
  const double total_content =
      truth.scroll_offsets[3] - truth.scroll_offsets[0] + content_h;
  CHECK(std::abs(s.pixels.height - (s.h_top + s.h_bot + total_content)) <= 6.0);
  CHECK(s.h_top >= truth.h_top - 16);
  CHECK(s.h_bot >= truth.h_bot - 16);
}

TEST_CASE("an app switch splits the batch") {
  synth::ScrollSpec spec;
  spec.seed = 52;
  spec.n_frames = 2;
  auto [scroll, truth] = synth::make_scroll_sequence(spec);

  synth::ScrollSpec other_spec;
  other_spec.seed = 53;
  other_spec.n_frames = 1;
  auto [other, other_truth] = synth::make_scroll_sequence(other_spec);
  std::vector<Frame> frames = scroll;
  frames.push_back({2, 0.2, other.front().image});

  const auto out = stitch_batch(frames, {});
  REQUIRE(out.size() == 2);
  CHECK(out[0].member_indices == std::vector<std::size_t>{0, 1});
  CHECK(out[1].member_indices == std::vector<std::size_t>{2});
  CHECK(out[1].seam_offsets.empty());
}

TEST_CASE("a single frame passes through unchanged") {
  synth::ScrollSpec spec;
  spec.seed = 54;
  spec.n_frames = 1;
  auto [frames, truth] = synth::make_scroll_sequence(spec);
  const auto out = stitch_batch(frames, {});
  REQUIRE(out.size() == 1);
  CHECK(out[0].member_indices == std::vector<std::size_t>{0});
  CHECK(out[0].pixels.width == frames[0].image.width);
  CHECK(out[0].pixels.height == frames[0].image.height);
  CHECK_THROWS_AS(stitch_batch({}, StitchParams{}), StageError);
}

TEST_CASE("stitch params validation") {
  StitchParams p;
  p.ratio_threshold = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.knn_k = 1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.min_matches = 3;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  CHECK_NOTHROW(p.validate());
}
