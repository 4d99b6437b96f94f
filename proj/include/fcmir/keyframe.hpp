#pragma once

#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fcmir/image.hpp"
#include "fcmir/imgproc.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

struct RetainedFrame {
  std::size_t index = 0;
  std::string path;  // filled once pixels are written to disk
};

struct KeyframeManifest {
  std::string source_id;
  SamplingParams params;
  std::vector<std::size_t> sampled_indices;
  std::vector<RetainedFrame> retained;
  double frame_compression_pct = 0.0;
  double pixel_compression_pct = 0.0;
};

/// Compression relative to the interval-sampled baseline, as percentages:
/// one over frame counts, one over pixel areas (mixed sizes count by area).
inline std::pair<double, double> compression_stats(const KeyframeManifest& m,
                                                   const std::vector<Frame>& frames) {
  if (m.sampled_indices.empty()) throw StageError("compression_stats: no sampled frames");
  double sampled_area = 0, retained_area = 0;
  for (std::size_t i : m.sampled_indices)
    sampled_area += static_cast<double>(frames[i].image.pixel_count());
  for (const auto& r : m.retained)
    retained_area += static_cast<double>(frames[r.index].image.pixel_count());
  const double frame_pct =
      (1.0 - static_cast<double>(m.retained.size()) / static_cast<double>(m.sampled_indices.size())) *
      100.0;
  const double pixel_pct = (1.0 - retained_area / sampled_area) * 100.0;
  return {frame_pct, pixel_pct};
}

/// Interval sampling, blur rejection, and similarity batching in one pass.
/// Similar consecutive frames form a batch; only the batch's last frame is
/// retained. The comparison target advances to every sampled frame (blurry
/// included) unless params.compare_against narrows it to clear frames.
inline KeyframeManifest select_keyframes(const std::vector<Frame>& frames,
                                         const SamplingParams& params, const SsimParams& sp = {},
                                         std::string source_id = "") {
  if (frames.empty()) throw StageError("select_keyframes: empty input");
  params.validate();
  sp.validate();

  KeyframeManifest m;
  m.source_id = std::move(source_id);
  m.params = params;

  const auto skip =
      static_cast<std::size_t>(std::max(1.0, std::floor(params.fps * params.interval_s)));
  for (std::size_t i = 0; i < frames.size(); i += skip) m.sampled_indices.push_back(i);

  std::optional<detail::FrameFeatures> prev;
  std::optional<std::size_t> batch_last;  // highest index in the open batch

  for (std::size_t i : m.sampled_indices) {
    detail::FrameFeatures cur(frames[i]);
    const bool blurry = is_blurry(cur.gray(), params.blur_threshold);
    if (blurry) {
      if (params.compare_against == CompareAgainst::last_sampled) prev = std::move(cur);
      continue;
    }
    if (!batch_last) {
      batch_last = i;
    } else if (prev && detail::hybrid_similar_impl(*prev, cur, params, sp)) {
      batch_last = i;
    } else {
      m.retained.push_back({*batch_last, {}});
      batch_last = i;
    }
    prev = std::move(cur);
  }
  if (batch_last) m.retained.push_back({*batch_last, {}});

  std::tie(m.frame_compression_pct, m.pixel_compression_pct) = compression_stats(m, frames);
  return m;
}

}  // namespace fcmir
