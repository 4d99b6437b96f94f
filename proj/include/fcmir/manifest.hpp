#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fcmir/evalkit.hpp"
#include "fcmir/keyframe.hpp"
#include "fcmir/llm.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

struct StitchedRecord {
  std::string path;
  std::vector<std::size_t> member_indices;
  std::vector<double> seam_offsets;
  int h_top = 0, h_bot = 0;
  int width = 0, height = 0;
};

/// Everything one pipeline run produced. Serialized with sorted keys so two
/// identical runs differ only under "timing_ms".
struct PipelineManifest {
  int schema = 1;
  std::string source_id;
  std::vector<std::string> stages;
  bool complete = false;
  std::map<std::string, std::string> effective_config;
  std::vector<std::size_t> sampled_indices;
  std::vector<RetainedFrame> retained;
  double frame_compression_pct = 0;
  double pixel_compression_pct = 0;
  std::optional<double> stitched_pixel_compression_pct;
  std::vector<StitchedRecord> stitched;
  std::optional<IntentSummary> intent;
  std::vector<SuggestionSet> suggestion_sets;
  std::vector<ScoreCard> score_cards;
  std::map<std::string, double> timing_ms;
};

inline nlohmann::json manifest_to_json(const PipelineManifest& m) {
  nlohmann::json j;
  j["schema"] = m.schema;
  j["source_id"] = m.source_id;
  j["stages"] = m.stages;
  j["complete"] = m.complete;
  j["effective_config"] = m.effective_config;
  j["sampled_indices"] = m.sampled_indices;

  auto retained = nlohmann::json::array();
  for (const auto& r : m.retained)
    retained.push_back(nlohmann::json{{"index", r.index}, {"path", r.path}});
  j["retained"] = retained;
  j["frame_compression_pct"] = m.frame_compression_pct;
  j["pixel_compression_pct"] = m.pixel_compression_pct;
  if (m.stitched_pixel_compression_pct)
    j["stitched_pixel_compression_pct"] = *m.stitched_pixel_compression_pct;

  auto stitched = nlohmann::json::array();
  for (const auto& s : m.stitched)
    stitched.push_back(nlohmann::json{{"path", s.path},
                                      {"member_indices", s.member_indices},
                                      {"seam_offsets", s.seam_offsets},
                                      {"h_top", s.h_top},
                                      {"h_bot", s.h_bot},
                                      {"width", s.width},
                                      {"height", s.height}});
  j["stitched"] = stitched;

  if (m.intent) j["intent"] = to_json(*m.intent);
  auto suggestions = nlohmann::json::array();
  for (const auto& s : m.suggestion_sets)
    suggestions.push_back(nlohmann::json{{"kind", to_string(s.kind)}, {"suggestions", s.suggestions}});
  j["suggestion_sets"] = suggestions;

  auto cards = nlohmann::json::array();
  for (const auto& c : m.score_cards)
    cards.push_back(nlohmann::json{{"rubric", to_string(c.rubric)}, {"scores", c.scores}});
  j["score_cards"] = cards;

  j["timing_ms"] = m.timing_ms;
  return j;
}

/// Structural validation used by tests and downstream consumers.
inline void validate_manifest_json(const nlohmann::json& j) {
  auto need = [&](const char* key, bool ok) {
    if (!j.contains(key) || !ok) throw StageError(std::string("manifest: bad or missing ") + key);
  };
  need("schema", j.value("schema", 0) == 1);
  need("source_id", j.contains("source_id") && j["source_id"].is_string());
  need("stages", j.contains("stages") && j["stages"].is_array());
  need("complete", j.contains("complete") && j["complete"].is_boolean());
  need("effective_config", j.contains("effective_config") && j["effective_config"].is_object());
  need("sampled_indices", j.contains("sampled_indices") && j["sampled_indices"].is_array());
  need("retained", j.contains("retained") && j["retained"].is_array());
  for (const auto& r : j["retained"])
    if (!r.contains("index") || !r.contains("path"))
      throw StageError("manifest: retained entries need index and path");
  need("frame_compression_pct",
       j.contains("frame_compression_pct") && j["frame_compression_pct"].is_number());
  need("pixel_compression_pct",
       j.contains("pixel_compression_pct") && j["pixel_compression_pct"].is_number());
  need("stitched", j.contains("stitched") && j["stitched"].is_array());
  for (const auto& s : j["stitched"])
    if (!s.contains("path") || !s.contains("member_indices") || !s.contains("seam_offsets"))
      throw StageError("manifest: stitched entries need path, member_indices, seam_offsets");
  if (j.contains("intent")) {
    if (!j["intent"].contains("Operation") || !j["intent"].contains("Intent"))
      throw StageError("manifest: intent needs Operation and Intent");
  }
  need("suggestion_sets", j.contains("suggestion_sets") && j["suggestion_sets"].is_array());
  need("timing_ms", j.contains("timing_ms") && j["timing_ms"].is_object());
}

}  // namespace fcmir
