#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "fcmir/image.hpp"
#include "fcmir/image_io.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

enum class SourceKind { frame_dir, video_file };

struct IngestParams {
  double fps = 30.0;
  std::string decoder_cmd;  // template with {input} and {outdir} placeholders
};

namespace detail {

inline bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  return files;
}

inline std::string substitute_placeholder(std::string s, const std::string& key,
                                          const std::string& value) {
  for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos))
    s.replace(pos, key.size(), value), pos += value.size();
  return s;
}

}  // namespace detail

inline std::vector<Frame> load_frames(const std::filesystem::path& source, SourceKind kind,
                                      const IngestParams& params = {}) {
  if (!std::filesystem::exists(source))
    throw StageError("source does not exist: " + source.string());

  if (kind == SourceKind::video_file) {
    if (params.decoder_cmd.empty())
      throw ConfigError("video input requires decoder_cmd to be configured");
    auto outdir = std::filesystem::temp_directory_path() /
                  ("fcmir_frames_" + std::to_string(fnv1a64(source.string())));
    std::filesystem::create_directories(outdir);
    std::string cmd = detail::substitute_placeholder(params.decoder_cmd, "{input}", source.string());
    cmd = detail::substitute_placeholder(cmd, "{outdir}", outdir.string());
    if (std::system(cmd.c_str()) != 0) throw StageError("decoder command failed: " + cmd);
    IngestParams dir_params = params;
    return load_frames(outdir, SourceKind::frame_dir, dir_params);
  }

  if (!std::filesystem::is_directory(source))
    throw StageError("frame source is not a directory: " + source.string());
  const auto files = detail::list_frame_files(source);
  if (files.empty()) throw StageError("no frames in " + source.string());

  std::vector<Frame> frames;
  frames.reserve(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    Frame f;
    f.index = i;
    f.timestamp_s = static_cast<double>(i) / params.fps;
    f.image = load_image(files[i]);
    frames.push_back(std::move(f));
  }
  return frames;
}

/// Indices kept by interval sampling: every skip-th frame, skip = floor(fps*Δt)
/// clamped to at least 1 so a degenerate interval still returns frames.
inline std::vector<std::size_t> sample_indices(double fps, double interval_s, std::size_t total) {
  if (!(fps > 0)) throw ConfigError("fps must be > 0");
  if (!(interval_s > 0)) throw ConfigError("interval_s must be > 0");
  auto skip = static_cast<std::size_t>(std::max(1.0, std::floor(fps * interval_s)));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < total; i += skip) out.push_back(i);
  return out;
}

/// Downscale-only width normalization; aspect ratio preserved.
inline Frame resize_to_width(const Frame& frame, int target_w) {
  if (target_w < 16) throw ConfigError("target width must be >= 16");
  Frame out = frame;
  if (frame.image.width <= target_w) return out;
  const int target_h = std::max(
      1, static_cast<int>(std::lround(static_cast<double>(frame.image.height) * target_w /
                                      frame.image.width)));
  out.image = area_resize(frame.image, target_w, target_h);
  return out;
}

}  // namespace fcmir
