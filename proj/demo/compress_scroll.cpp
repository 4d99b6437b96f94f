// Generates a synthetic scrolling capture, keeps the keyframes, stitches the
// scroll run back into one tall screenshot, and prints what was saved.

#include <cstdio>
#include <filesystem>

#include "fcmir/image_io.hpp"
#include "fcmir/keyframe.hpp"
#include "fcmir/stitch.hpp"
#include "fcmir/synth.hpp"

int main() {
  using namespace fcmir;

  synth::ScrollSpec spec;
  spec.n_frames = 5;
  spec.seed = 2024;
  auto [frames, truth] = synth::make_scroll_sequence(spec);

  SamplingParams sampling;
  const KeyframeManifest manifest = select_keyframes(frames, sampling);
  std::printf("sampled %zu frames, retained %zu (%.1f%% frame compression)\n",
              manifest.sampled_indices.size(), manifest.retained.size(),
              manifest.frame_compression_pct);

  std::vector<Frame> keyframes;
  for (const auto& r : manifest.retained) keyframes.push_back(frames[r.index]);
  const auto stitched = stitch_batch(keyframes, {});

  double concat_area = 0, stitched_area = 0;
  for (const auto& f : keyframes) concat_area += f.image.pixel_count();
  for (const auto& s : stitched) stitched_area += s.pixels.pixel_count();
  std::printf("stitched %zu keyframes into %zu image(s), pixel area %.0f%% of concatenation\n",
              keyframes.size(), stitched.size(), 100.0 * stitched_area / concat_area);

  const auto out = std::filesystem::temp_directory_path() / "fcmir_demo_stitched.png";
  save_png(stitched.front().pixels, out);
  std::printf("expected seams from ground truth:");
  for (std::size_t k = 1; k < truth.scroll_offsets.size(); ++k)
    std::printf(" %d", truth.scroll_offsets[k] - truth.scroll_offsets[0]);
  std::printf("\nmeasured seams:");
  for (double s : stitched.front().seam_offsets) std::printf(" %.1f", s);
  std::printf("\nwrote %s\n", out.c_str());
  return 0;
}
