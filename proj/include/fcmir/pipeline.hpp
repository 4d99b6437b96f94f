#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fcmir/config.hpp"
#include "fcmir/image_io.hpp"
#include "fcmir/ingest.hpp"
#include "fcmir/keyframe.hpp"
#include "fcmir/llm.hpp"
#include "fcmir/manifest.hpp"
#include "fcmir/stitch.hpp"

namespace fcmir {

struct StageSet {
  bool sample = false;
  bool stitch = false;
  bool summarize = false;
  bool suggest = false;
};

/// Stage names form a dependency chain: stitch and summarize build on sample,
/// suggest consumes the summary.
inline StageSet parse_stages(const std::vector<std::string>& names) {
  StageSet s;
  for (const auto& n : names) {
    if (n == "sample") s.sample = true;
    else if (n == "stitch") s.stitch = true;
    else if (n == "summarize") s.summarize = true;
    else if (n == "suggest") s.suggest = true;
    else throw ConfigError("unknown stage: " + n);
  }
  if (!s.sample) throw ConfigError("the sample stage is required");
  if (s.stitch && !s.sample) throw ConfigError("stitch requires sample");
  if (s.summarize && !s.sample) throw ConfigError("summarize requires sample");
  if (s.suggest && !s.summarize) throw ConfigError("suggest requires summarize");
  return s;
}

struct PipelineInput {
  std::filesystem::path source;
  SourceKind kind = SourceKind::frame_dir;
  std::string source_id;  // defaults to the source basename
};

namespace detail {

inline std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu.png", index);
  return buf;
}

inline std::string stitched_filename(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "stitched_%03zu.png", k);
  return buf;
}

inline PromptTemplate pipeline_template(const Config& cfg, PromptKind kind, const char* filename,
                                        int max_images) {
  const std::string dir = cfg.get_string("templates.dir", "");
  if (!dir.empty()) {
    const auto path = std::filesystem::path(dir) / filename;
    if (std::filesystem::exists(path)) return load_template(path, kind, max_images);
  }
  PromptTemplate tpl = default_template(kind);
  tpl.max_images = max_images;
  return tpl;
}

inline void record_params(PipelineManifest& m, const SamplingParams& p, const SsimParams& sp,
                          const StitchParams& st, int resize_width) {
  auto& c = m.effective_config;
  auto put = [&](const std::string& k, auto v) { c[k] = std::to_string(v); };
  put("sampling.interval_s", p.interval_s);
  put("sampling.fps", p.fps);
  put("sampling.blur_threshold", p.blur_threshold);
  put("sampling.phash_threshold", p.phash_threshold);
  put("sampling.ssim_threshold", p.ssim_threshold);
  put("sampling.l1_threshold", p.l1_threshold);
  put("sampling.histogram_reject", p.histogram_reject);
  c["sampling.comparator"] = to_string(p.comparator);
  c["sampling.compare_against"] =
      p.compare_against == CompareAgainst::last_sampled ? "last_sampled" : "last_retained";
  put("ssim.window", sp.window);
  put("ssim.overlap_frac", sp.overlap_frac);
  put("ssim.downsample_width", sp.downsample_width);
  put("stitch.ratio_threshold", st.ratio_threshold);
  put("stitch.knn_k", st.knn_k);
  put("stitch.min_matches", st.min_matches);
  put("stitch.max_features", st.max_features);
  put("stitch.fast_threshold", st.fast_threshold);
  put("stitch.strip_height", st.strip_height);
  put("stitch.bar_hamming_max", st.bar_hamming_max);
  put("stitch.max_bar_frac", st.max_bar_frac);
  put("stitch.max_x_drift", st.max_x_drift);
  put("pipeline.resize_width", resize_width);
}

inline void record_endpoint(PipelineManifest& m, const EndpointConfig& e) {
  auto& c = m.effective_config;
  c["endpoint.base_url"] = e.base_url;  // the key itself stays in the environment
  c["endpoint.model"] = e.model;
  c["endpoint.max_images"] = std::to_string(e.max_images);
  c["endpoint.image_width"] = std::to_string(e.image_width);
  c["endpoint.max_retries"] = std::to_string(e.max_retries);
  c["endpoint.max_in_flight"] = std::to_string(e.max_in_flight);
}

inline void write_manifest(const PipelineManifest& m, const std::filesystem::path& out_dir) {
  const auto tmp = out_dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw StageError("cannot write manifest in " + out_dir.string());
    out << manifest_to_json(m).dump(2) << "\n";
  }
  std::filesystem::rename(tmp, out_dir / "manifest.json");
}

class StageTimer {
 public:
  StageTimer(PipelineManifest& m, const char* stage) : m_(m), stage_(stage) {}
  ~StageTimer() {
    const auto dt = std::chrono::steady_clock::now() - t0_;
    m_.timing_ms[stage_] =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(dt).count();
  }

 private:
  PipelineManifest& m_;
  std::string stage_;
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Execute the requested stages over one source and write all artifacts under
/// out_dir: keyframes/, stitched/, responses/, reports/, manifest.json. On a
/// stage failure the partial manifest is written with complete=false before
/// the error propagates.
inline PipelineManifest run_pipeline(const PipelineInput& input, const Config& cfg,
                                     const StageSet& stages,
                                     const std::filesystem::path& out_dir) {
  const SamplingParams sampling = sampling_params_from(cfg);
  const SsimParams ssimp = ssim_params_from(cfg);
  const StitchParams stitchp = stitch_params_from(cfg);
  const IngestParams ingestp = ingest_params_from(cfg);
  const int resize_width = cfg.get_int("pipeline.resize_width", 0);
  if (resize_width != 0 && resize_width < 16)
    throw ConfigError("pipeline.resize_width must be 0 or >= 16");

  std::optional<EndpointConfig> endpoint;
  if (stages.summarize || stages.suggest) {
    endpoint = endpoint_config_from(cfg);
    if (endpoint->base_url.empty())
      throw ConfigError("endpoint.base_url (or FCMIR_API_BASE) is required for LLM stages");
  }

  PipelineManifest m;
  m.source_id = input.source_id.empty() ? input.source.filename().string() : input.source_id;
  detail::record_params(m, sampling, ssimp, stitchp, resize_width);
  if (endpoint) detail::record_endpoint(m, *endpoint);

  std::filesystem::create_directories(out_dir / "keyframes");
  std::filesystem::create_directories(out_dir / "stitched");
  std::filesystem::create_directories(out_dir / "responses");
  std::filesystem::create_directories(out_dir / "reports");

  try {
    std::vector<Frame> frames;
    {
      detail::StageTimer timer(m, "ingest");
      frames = load_frames(input.source, input.kind, ingestp);
      if (resize_width > 0)
        for (auto& f : frames) f = resize_to_width(f, resize_width);
    }

    KeyframeManifest km;
    {
      detail::StageTimer timer(m, "sample");
      km = select_keyframes(frames, sampling, ssimp, m.source_id);
      for (auto& r : km.retained) {
        r.path = "keyframes/" + detail::frame_filename(r.index);
        save_png(frames[r.index].image, out_dir / r.path);
      }
      m.stages.push_back("sample");
      m.sampled_indices = km.sampled_indices;
      m.retained = km.retained;
      m.frame_compression_pct = km.frame_compression_pct;
      m.pixel_compression_pct = km.pixel_compression_pct;
    }

    std::vector<StitchedImage> stitched;
    if (stages.stitch) {
      detail::StageTimer timer(m, "stitch");
      std::vector<Frame> keyframes;
      for (const auto& r : km.retained) keyframes.push_back(frames[r.index]);
      if (!keyframes.empty()) stitched = stitch_batch(keyframes, stitchp);
      double sampled_area = 0, stitched_area = 0;
      for (std::size_t i : km.sampled_indices)
        sampled_area += static_cast<double>(frames[i].image.pixel_count());
      for (std::size_t k = 0; k < stitched.size(); ++k) {
        StitchedRecord rec;
        rec.path = "stitched/" + detail::stitched_filename(k);
        rec.member_indices = stitched[k].member_indices;
        rec.seam_offsets = stitched[k].seam_offsets;
        rec.h_top = stitched[k].h_top;
        rec.h_bot = stitched[k].h_bot;
        rec.width = stitched[k].pixels.width;
        rec.height = stitched[k].pixels.height;
        stitched_area += static_cast<double>(stitched[k].pixels.pixel_count());
        save_png(stitched[k].pixels, out_dir / rec.path);
        m.stitched.push_back(std::move(rec));
      }
      if (sampled_area > 0)
        m.stitched_pixel_compression_pct = (1.0 - stitched_area / sampled_area) * 100.0;
      m.stages.push_back("stitch");
    }

    if (stages.summarize || stages.suggest) {
      LlmClient client(*endpoint, out_dir / "responses");
      std::vector<Image> images;
      if (!stitched.empty()) {
        for (const auto& s : stitched) images.push_back(s.pixels);
      } else {
        for (const auto& r : km.retained) images.push_back(frames[r.index].image);
      }

      if (stages.summarize) {
        detail::StageTimer timer(m, "summarize");
        const auto tpl = detail::pipeline_template(cfg, PromptKind::summarize, "summarize.txt",
                                                   endpoint->max_images);
        m.intent = summarize_intent(images, client, tpl);
        m.stages.push_back("summarize");
      }
      if (stages.suggest) {
        detail::StageTimer timer(m, "suggest");
        const auto op_tpl = detail::pipeline_template(cfg, PromptKind::suggest_operation,
                                                      "suggest_operation.txt", endpoint->max_images);
        const auto search_tpl = detail::pipeline_template(cfg, PromptKind::suggest_search,
                                                          "suggest_search.txt", endpoint->max_images);
        m.suggestion_sets.push_back(
            generate_suggestions(*m.intent, images, SuggestionKind::operation, client, op_tpl));
        m.suggestion_sets.push_back(
            generate_suggestions(*m.intent, images, SuggestionKind::search, client, search_tpl));
        m.stages.push_back("suggest");
      }
    }
  } catch (...) {
    m.complete = false;
    try {
      detail::write_manifest(m, out_dir);
    } catch (...) {
      // the original error matters more than a failed partial write
    }
    throw;
  }

  m.complete = true;
  detail::write_manifest(m, out_dir);
  return m;
}

// --- ablation harness ---------------------------------------------------------

struct AblationRow {
  std::string comparator;
  std::size_t sampled = 0;
  std::size_t retained = 0;
  double frame_compression_pct = 0;
  double pixel_compression_pct = 0;
  std::optional<double> judge_normalized;  // mean of judge total/10 across sequences
};

/// Re-run keyframe selection per comparator over the same corpus. When a
/// client and judge template are supplied, each sequence's keyframes are
/// summarized and judged against the reference text.
inline std::vector<AblationRow> run_ablation(const std::vector<std::vector<Frame>>& corpus,
                                             SamplingParams base, const SsimParams& sp,
                                             LlmClient* client = nullptr,
                                             const PromptTemplate* summarize_tpl = nullptr,
                                             const PromptTemplate* judge_tpl = nullptr,
                                             const std::string& reference = "") {
  if (corpus.empty()) throw StageError("run_ablation: empty corpus");
  std::vector<AblationRow> rows;
  for (const Comparator cmp : {Comparator::l1, Comparator::phash_l1, Comparator::phash_ssim}) {
    SamplingParams p = base;
    p.comparator = cmp;
    AblationRow row;
    row.comparator = to_string(cmp);
    double sampled_area = 0, retained_area = 0, judge_sum = 0;
    std::size_t judged = 0;
    for (const auto& frames : corpus) {
      const KeyframeManifest km = select_keyframes(frames, p, sp);
      row.sampled += km.sampled_indices.size();
      row.retained += km.retained.size();
      for (std::size_t i : km.sampled_indices)
        sampled_area += static_cast<double>(frames[i].image.pixel_count());
      for (const auto& r : km.retained)
        retained_area += static_cast<double>(frames[r.index].image.pixel_count());
      if (client && summarize_tpl && judge_tpl && !reference.empty()) {
        std::vector<Image> images;
        for (const auto& r : km.retained) images.push_back(frames[r.index].image);
        const IntentSummary summary = summarize_intent(images, *client, *summarize_tpl);
        const ScoreCard card =
            judge_score(to_json(summary).dump(), reference, Rubric::summary, *client, *judge_tpl);
        judge_sum += static_cast<double>(card.total()) / 10.0;
        ++judged;
      }
    }
    row.frame_compression_pct =
        (1.0 - static_cast<double>(row.retained) / static_cast<double>(row.sampled)) * 100.0;
    row.pixel_compression_pct = (1.0 - retained_area / sampled_area) * 100.0;
    if (judged > 0) row.judge_normalized = judge_sum / static_cast<double>(judged);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json ablation_report_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j;
  j["report"] = "comparator_ablation";
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"comparator", r.comparator},
                       {"sampled", r.sampled},
                       {"retained", r.retained},
                       {"frame_compression_pct", r.frame_compression_pct},
                       {"pixel_compression_pct", r.pixel_compression_pct}};
    if (r.judge_normalized) row["judge_normalized"] = *r.judge_normalized;
    arr.push_back(std::move(row));
  }
  j["rows"] = arr;
  return j;
}

inline std::vector<std::vector<std::string>> ablation_report_rows(
    const std::vector<AblationRow>& rows) {
  std::vector<std::vector<std::string>> out;
  const bool judged = !rows.empty() && rows.front().judge_normalized.has_value();
  std::vector<std::string> header{"comparator", "sampled", "retained", "frame_compression_pct",
                                  "pixel_compression_pct"};
  if (judged) header.push_back("judge_normalized");
  out.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> row{r.comparator, std::to_string(r.sampled),
                                 std::to_string(r.retained),
                                 std::to_string(r.frame_compression_pct),
                                 std::to_string(r.pixel_compression_pct)};
    if (judged) row.push_back(r.judge_normalized ? std::to_string(*r.judge_normalized) : "");
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace fcmir
