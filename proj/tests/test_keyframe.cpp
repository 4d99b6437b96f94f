#include <catch2/catch_amalgamated.hpp>

#include "fcmir/keyframe.hpp"
#include "fcmir/synth.hpp"
#include "helpers.hpp"

using namespace fcmir;

namespace {

Image textured(std::uint64_t seed) {
  synth::PageSpec ps;
  ps.width = 96;
  ps.height = 192;
  ps.viewport_h = 0;
  ps.seed = seed;
  return synth::generate_page(ps);
}

std::vector<Frame> sequence_of(const std::vector<Image>& images) {
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < images.size(); ++i)
    frames.push_back({i, static_cast<double>(i) / 30.0, images[i]});
  return frames;
}

SamplingParams every_frame() {
  SamplingParams p;
  p.interval_s = 1.0 / 60.0;  // skip clamps to 1 at fps 30
  return p;
}

}  // namespace

TEST_CASE("batches retain the last frame of each run of similar frames") {
  const Image A = textured(1), B = textured(2), C = textured(3);
  const auto frames = sequence_of({A, A, A, B, B, C});
  const KeyframeManifest m = select_keyframes(frames, every_frame());
  REQUIRE(m.retained.size() == 3);
  CHECK(m.retained[0].index == 2);
  CHECK(m.retained[1].index == 4);
  CHECK(m.retained[2].index == 5);
  CHECK(m.sampled_indices.size() == 6);
}

TEST_CASE("an all-blurry sequence retains nothing") {
  const Image flat(64, 64, {120, 120, 120});
  const auto frames = sequence_of({flat, flat, flat});
  const KeyframeManifest m = select_keyframes(frames, every_frame());
  CHECK(m.retained.empty());
  CHECK(m.frame_compression_pct == 100.0);
}

TEST_CASE("interval sampling visits floor(fps*dt) strides") {
  std::vector<Image> images(45, textured(4));
  const auto frames = sequence_of(images);
  SamplingParams p;
  p.fps = 30.0;
  p.interval_s = 0.5;
  const KeyframeManifest m = select_keyframes(frames, p);
  CHECK(m.sampled_indices == std::vector<std::size_t>{0, 15, 30});

  p.fps = 29.97;
  p.interval_s = 1.0;
  CHECK(select_keyframes(frames, p).sampled_indices == std::vector<std::size_t>{0, 29});

  p.fps = 10.0;
  p.interval_s = 0.05;  // skip floors to 0, clamps to 1
  CHECK(select_keyframes(frames, p).sampled_indices.size() == 45);
}

TEST_CASE("the comparison target advances through blurry frames by default") {
  const Image A = textured(5);
  const Image blurry(A.width, A.height, {128, 128, 128});
  const auto frames = sequence_of({A, blurry, A});

  SamplingParams p = every_frame();
  REQUIRE(p.compare_against == CompareAgainst::last_sampled);
  const KeyframeManifest literal = select_keyframes(frames, p);
  REQUIRE(literal.retained.size() == 2);  // the blurry frame split the batch
  CHECK(literal.retained[0].index == 0);
  CHECK(literal.retained[1].index == 2);

  p.compare_against = CompareAgainst::last_retained;
  const KeyframeManifest bridged = select_keyframes(frames, p);
  REQUIRE(bridged.retained.size() == 1);  // comparison bridged the blurry gap
  CHECK(bridged.retained[0].index == 2);
}

TEST_CASE("no two consecutive retained frames are similar") {
  synth::TrajectorySpec spec;
  spec.seed = 77;
  auto [frames, truth] = synth::make_trajectory(spec);
  SamplingParams p = every_frame();
  SsimParams sp;
  const KeyframeManifest m = select_keyframes(frames, p, sp);
  for (std::size_t k = 1; k < m.retained.size(); ++k) {
    const Frame& a = frames[m.retained[k - 1].index];
    const Frame& b = frames[m.retained[k].index];
    const bool both_clear = !is_blurry(to_grayscale(a.image), p.blur_threshold) &&
                            !is_blurry(to_grayscale(b.image), p.blur_threshold);
    if (both_clear) CHECK_FALSE(hybrid_similar(a, b, p, sp));
  }
}

TEST_CASE("synthetic trajectory closure: coverage, no duplicates, strong compression") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    synth::TrajectorySpec spec;
    spec.seed = seed;
    auto [frames, truth] = synth::make_trajectory(spec);
    const KeyframeManifest m = select_keyframes(frames, every_frame());

    std::set<std::size_t> covered;
    for (const auto& r : m.retained) {
      covered.insert(truth.screen_of_frame[r.index]);
      CHECK(truth.duplicate_map.count(r.index) == 0);
      CHECK(truth.blur_indices.count(r.index) == 0);
    }
    CHECK(covered.size() == truth.distinct_screens);
    CHECK(m.frame_compression_pct >= 50.0);
  }
}

TEST_CASE("compression stats arithmetic") {
  std::vector<Image> images(45, textured(6));
  auto frames = sequence_of(images);
  KeyframeManifest m;
  for (std::size_t i = 0; i < 45; ++i) m.sampled_indices.push_back(i);
  for (std::size_t i = 0; i < 20; ++i) m.retained.push_back({i, ""});
  const auto [frame_pct, pixel_pct] = compression_stats(m, frames);
  CHECK(frame_pct == Catch::Approx(100.0 * 25.0 / 45.0).epsilon(1e-12));
  CHECK(pixel_pct == Catch::Approx(frame_pct).epsilon(1e-12));  // uniform sizes

  KeyframeManifest all;
  all.sampled_indices = m.sampled_indices;
  for (std::size_t i = 0; i < 45; ++i) all.retained.push_back({i, ""});
  const auto [f2, p2] = compression_stats(all, frames);
  CHECK(f2 == 0.0);
  CHECK(p2 == 0.0);

  KeyframeManifest empty;
  CHECK_THROWS_AS(compression_stats(empty, frames), StageError);
}

TEST_CASE("pixel compression tracks actual areas for mixed sizes") {
  Image big = textured(7);
  Image small(48, 96);
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 48; ++x) small.at(x, y) = big.at(x * 2, y * 2);
  auto frames = sequence_of({big, small});
  KeyframeManifest m;
  m.sampled_indices = {0, 1};
  m.retained.push_back({1, ""});
  const auto [frame_pct, pixel_pct] = compression_stats(m, frames);
  CHECK(frame_pct == Catch::Approx(50.0));
  const double total = 96.0 * 192.0 + 48.0 * 96.0;
  CHECK(pixel_pct == Catch::Approx(100.0 * (1.0 - 48.0 * 96.0 / total)).epsilon(1e-12));
}

TEST_CASE("selection is deterministic and rejects empty input") {
  synth::TrajectorySpec spec;
  spec.seed = 21;
  auto [frames, truth] = synth::make_trajectory(spec);
  const KeyframeManifest a = select_keyframes(frames, every_frame(), {}, "run");
  const KeyframeManifest b = select_keyframes(frames, every_frame(), {}, "run");
  REQUIRE(a.retained.size() == b.retained.size());
  for (std::size_t k = 0; k < a.retained.size(); ++k)
    CHECK(a.retained[k].index == b.retained[k].index);
  CHECK(a.sampled_indices == b.sampled_indices);
  CHECK(a.frame_compression_pct == b.frame_compression_pct);

  CHECK_THROWS_AS(select_keyframes({}, every_frame()), StageError);
}
