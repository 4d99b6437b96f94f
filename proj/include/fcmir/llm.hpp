#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "fcmir/evalkit.hpp"
#include "fcmir/image.hpp"
#include "fcmir/image_io.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

enum class PromptKind { summarize, suggest_operation, suggest_search, judge_summary, judge_suggestion };

struct PromptTemplate {
  PromptKind kind = PromptKind::summarize;
  std::string text;
  int max_images = 8;
};

struct IntentSummary {
  std::string operation;
  std::string intent;
  bool operator==(const IntentSummary&) const = default;
};

inline nlohmann::json to_json(const IntentSummary& s) {
  return nlohmann::json{{"Operation", s.operation}, {"Intent", s.intent}};
}

enum class SuggestionKind { operation, search };

inline const char* to_string(SuggestionKind k) {
  return k == SuggestionKind::operation ? "operation" : "search";
}

struct SuggestionSet {
  SuggestionKind kind = SuggestionKind::operation;
  std::vector<std::string> suggestions;
};

struct EndpointConfig {
  std::string base_url;  // origin plus optional path prefix, e.g. http://host:1234/v1
  std::string model = "mock-mllm";
  std::string api_key;  // environment only, never config files
  int max_images = 8;
  int image_width = 512;
  double timeout_s = 30.0;
  int max_retries = 3;
  int max_in_flight = 4;
  int backoff_ms = 50;

  void validate() const {
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (max_images < 1) throw ConfigError("max_images must be >= 1");
    if (image_width < 16) throw ConfigError("image_width must be >= 16");
  }
};

/// FCMIR_API_BASE and FCMIR_API_KEY override whatever the config file said.
inline EndpointConfig endpoint_from_env(EndpointConfig cfg) {
  if (const char* base = std::getenv("FCMIR_API_BASE"); base && *base) cfg.base_url = base;
  if (const char* key = std::getenv("FCMIR_API_KEY"); key && *key) cfg.api_key = key;
  return cfg;
}

// --- prompt rendering --------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Remove one optional surrounding markdown code fence (``` or ```json).
inline std::string strip_code_fence(const std::string& raw) {
  std::string s = detail::trim(raw);
  if (s.rfind("```", 0) == 0) {
    const auto nl = s.find('\n');
    s = nl == std::string::npos ? "" : s.substr(nl + 1);
    const auto close = s.rfind("```");
    if (close != std::string::npos) s = s.substr(0, close);
    s = detail::trim(s);
  }
  return s;
}

/// Substitute {{name}} placeholders and build a chat-completions request body
/// with the images attached in order as base64 PNG data URIs.
inline nlohmann::json render_prompt(const PromptTemplate& tpl,
                                    const std::map<std::string, std::string>& slots,
                                    const std::vector<std::string>& png_payloads) {
  if (png_payloads.size() > static_cast<std::size_t>(tpl.max_images))
    throw StageError("render_prompt: too many images");
  if (tpl.kind == PromptKind::summarize && png_payloads.empty())
    throw StageError("render_prompt: summarization requires at least one image");

  std::string text;
  text.reserve(tpl.text.size());
  for (std::size_t i = 0; i < tpl.text.size();) {
    if (tpl.text.compare(i, 2, "{{") == 0) {
      const auto end = tpl.text.find("}}", i + 2);
      if (end == std::string::npos) throw StageError("render_prompt: unterminated placeholder");
      const std::string name = tpl.text.substr(i + 2, end - i - 2);
      const auto it = slots.find(name);
      if (it == slots.end()) throw StageError("render_prompt: unbound placeholder: " + name);
      text += it->second;
      i = end + 2;
    } else {
      text += tpl.text[i++];
    }
  }

  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", text}});
  for (const auto& png : png_payloads)
    content.push_back(
        {{"type", "image_url"},
         {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
  return nlohmann::json{
      {"messages", nlohmann::json::array({nlohmann::json{{"role", "user"}, {"content", content}}})}};
}

// --- response parsing --------------------------------------------------------

namespace detail {

inline nlohmann::json parse_strict_json(const std::string& raw, const char* what) {
  try {
    return nlohmann::json::parse(strip_code_fence(raw));
  } catch (const nlohmann::json::parse_error&) {
    throw StageError(std::string(what) + ": response is not valid JSON");
  }
}

inline std::string require_text(const nlohmann::json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw StageError(std::string(what) + ": missing " + key);
  if (!j[key].is_string() || j[key].get<std::string>().empty())
    throw StageError(std::string(what) + ": empty " + key);
  return j[key].get<std::string>();
}

}  // namespace detail

inline IntentSummary parse_intent_response(const std::string& raw) {
  const auto j = detail::parse_strict_json(raw, "intent summary");
  IntentSummary s;
  s.operation = detail::require_text(j, "Operation", "intent summary");
  s.intent = detail::require_text(j, "Intent", "intent summary");
  return s;
}

inline SuggestionSet parse_suggestions(const std::string& raw, SuggestionKind kind) {
  const auto j = detail::parse_strict_json(raw, "suggestions");
  if (!j.contains("Suggestions") || !j["Suggestions"].is_array() || j["Suggestions"].empty())
    throw StageError("suggestions: missing or empty Suggestions array");
  SuggestionSet set;
  set.kind = kind;
  for (const auto& item : j["Suggestions"]) {
    if (!item.is_string() || item.get<std::string>().empty())
      throw StageError("suggestions: entries must be nonempty strings");
    set.suggestions.push_back(item.get<std::string>());
  }
  return set;
}

inline ScoreCard parse_scorecard(const std::string& raw, Rubric rubric) {
  const auto j = detail::parse_strict_json(raw, "score card");
  if (!j.is_object()) throw StageError("score card: response must be a JSON object");
  ScoreCard card;
  card.rubric = rubric;
  for (const auto& name : metric_names(rubric)) {
    if (!j.contains(name)) throw StageError("score card: incomplete rubric");
    if (!j[name].is_number_integer()) throw StageError("score card: score must be an integer");
    const int v = j[name].get<int>();
    if (v < 0 || v > 2) throw StageError("score card: score out of range");
    card.scores[name] = v;
  }
  return card;
}

// --- HTTP client -------------------------------------------------------------

namespace detail {

struct SplitUrl {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // defaults to /v1
};

inline SplitUrl split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url must include a scheme");
  const auto path_start = base_url.find('/', scheme_end + 3);
  SplitUrl u;
  if (path_start == std::string::npos) {
    u.origin = base_url;
    u.path_prefix = "/v1";
  } else {
    u.origin = base_url.substr(0, path_start);
    u.path_prefix = base_url.substr(path_start);
    while (u.path_prefix.size() > 1 && u.path_prefix.back() == '/') u.path_prefix.pop_back();
  }
  return u;
}

}  // namespace detail

/// Chat-completions client with bounded concurrency, exponential-backoff
/// retries on transport and 5xx failures, and raw-response archiving. The
/// X-Fcmir-Kind header labels each call for fixture dispatch in tests.
class LlmClient {
 public:
  explicit LlmClient(EndpointConfig cfg, std::filesystem::path responses_dir = {})
      : cfg_(std::move(cfg)), responses_dir_(std::move(responses_dir)), sem_(cfg_.max_in_flight) {
    cfg_.validate();
    if (cfg_.base_url.empty()) throw ConfigError("endpoint base_url is not configured");
    const auto u = detail::split_base_url(cfg_.base_url);
    origin_ = u.origin;
    path_prefix_ = u.path_prefix;
    if (!responses_dir_.empty()) std::filesystem::create_directories(responses_dir_);
  }

  const EndpointConfig& config() const { return cfg_; }
  int retries_performed() const { return retries_.load(); }

  /// One chat round-trip; returns the assistant message content.
  std::string chat(const nlohmann::json& rendered_prompt, const std::string& kind) {
    nlohmann::json body = rendered_prompt;
    body["model"] = cfg_.model;
    const std::string raw = post_json("/chat/completions", body, kind);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      throw EndpointError("endpoint returned a non-JSON body");
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty() ||
        !j["choices"][0].contains("message") || !j["choices"][0]["message"].contains("content") ||
        !j["choices"][0]["message"]["content"].is_string())
      throw EndpointError("malformed endpoint response");
    return j["choices"][0]["message"]["content"].get<std::string>();
  }

  std::vector<double> embed(const std::string& text) {
    const nlohmann::json body{{"model", cfg_.model}, {"input", text}};
    const std::string raw = post_json("/embeddings", body, "embed");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      throw EndpointError("embedding endpoint returned a non-JSON body");
    }
    if (!j.contains("data") || !j["data"].is_array() || j["data"].empty() ||
        !j["data"][0].contains("embedding") || !j["data"][0]["embedding"].is_array())
      throw EndpointError("malformed embedding response");
    std::vector<double> v;
    for (const auto& x : j["data"][0]["embedding"]) v.push_back(x.get<double>());
    return v;
  }

 private:
  std::string post_json(const std::string& path, const nlohmann::json& body,
                        const std::string& kind) {
    SemaphoreGuard guard(sem_);
    const std::string payload = body.dump();
    for (int attempt = 0;; ++attempt) {
      httplib::Client cli(origin_);
      const auto timeout = std::chrono::milliseconds(static_cast<int>(cfg_.timeout_s * 1000));
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      httplib::Headers headers{{"X-Fcmir-Kind", kind}};
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      auto res = cli.Post(path_prefix_ + path, headers, payload, "application/json");

      if (res && res->status < 400) {
        archive(kind, res->body);
        return res->body;
      }
      const bool transient = !res || res->status >= 500;
      if (res) archive(kind, res->body);
      if (!transient)
        throw EndpointError("endpoint rejected " + path + " with status " +
                            std::to_string(res->status));
      if (attempt >= cfg_.max_retries)
        throw EndpointError("endpoint unreachable after " + std::to_string(attempt + 1) +
                            " attempts: " + path);
      retries_.fetch_add(1);
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << attempt));
    }
  }

  // Raw bodies land on disk before any parsing so nothing is lost to a
  // malformed reply.
  void archive(const std::string& kind, const std::string& raw) {
    if (responses_dir_.empty()) return;
    const int n = seq_.fetch_add(1);
    char name[64];
    std::snprintf(name, sizeof(name), "%04d_%s.json", n, kind.c_str());
    std::ofstream out(responses_dir_ / name, std::ios::binary);
    out << raw;
  }

  EndpointConfig cfg_;
  std::string origin_, path_prefix_;
  std::filesystem::path responses_dir_;
  Semaphore sem_;
  std::atomic<int> seq_{0};
  std::atomic<int> retries_{0};
};

// --- high-level operations ---------------------------------------------------

/// Cap to max_images by even subsampling (first and last always kept),
/// downscale to the transfer width, and encode as PNG.
inline std::vector<std::string> encode_images_for_upload(const std::vector<Image>& images,
                                                         int target_width, int max_images) {
  std::vector<const Image*> picked;
  const std::size_t n = images.size();
  if (n <= static_cast<std::size_t>(max_images)) {
    for (const auto& img : images) picked.push_back(&img);
  } else {
    for (int i = 0; i < max_images; ++i) {
      const auto idx = static_cast<std::size_t>(
          std::lround(static_cast<double>(i) * static_cast<double>(n - 1) / (max_images - 1)));
      picked.push_back(&images[idx]);
    }
  }
  std::vector<std::string> out;
  for (const Image* img : picked) {
    if (img->width > target_width) {
      const int h = std::max(
          1, static_cast<int>(std::lround(static_cast<double>(img->height) * target_width /
                                          img->width)));
      out.push_back(encode_png(area_resize(*img, target_width, h)));
    } else {
      out.push_back(encode_png(*img));
    }
  }
  return out;
}

inline IntentSummary summarize_intent(const std::vector<Image>& images, LlmClient& client,
                                      const PromptTemplate& tpl) {
  if (tpl.kind != PromptKind::summarize) throw StageError("summarize_intent: wrong template kind");
  if (images.empty()) throw StageError("summarize_intent: at least one image required");
  const auto pngs =
      encode_images_for_upload(images, client.config().image_width, tpl.max_images);
  const std::map<std::string, std::string> slots{{"frame_count", std::to_string(pngs.size())}};
  return parse_intent_response(client.chat(render_prompt(tpl, slots, pngs), "summarize"));
}

inline SuggestionSet generate_suggestions(const IntentSummary& summary,
                                          const std::vector<Image>& images, SuggestionKind kind,
                                          LlmClient& client, const PromptTemplate& tpl) {
  const PromptKind want = kind == SuggestionKind::operation ? PromptKind::suggest_operation
                                                            : PromptKind::suggest_search;
  if (tpl.kind != want) throw StageError("generate_suggestions: template kind mismatch");
  if (images.empty()) throw StageError("generate_suggestions: at least one image required");
  const auto pngs =
      encode_images_for_upload(images, client.config().image_width, tpl.max_images);
  const std::map<std::string, std::string> slots{{"operation", summary.operation},
                                                 {"intent", summary.intent}};
  const char* label = kind == SuggestionKind::operation ? "suggest_operation" : "suggest_search";
  return parse_suggestions(client.chat(render_prompt(tpl, slots, pngs), label), kind);
}

inline ScoreCard judge_score(const std::string& prediction, const std::string& reference,
                             Rubric rubric, LlmClient& client, const PromptTemplate& tpl) {
  const PromptKind want =
      rubric == Rubric::summary ? PromptKind::judge_summary : PromptKind::judge_suggestion;
  if (tpl.kind != want) throw StageError("judge_score: template kind mismatch");
  const std::map<std::string, std::string> slots{{"prediction", prediction},
                                                 {"reference", reference}};
  const char* label = rubric == Rubric::summary ? "judge_summary" : "judge_suggestion";
  return parse_scorecard(client.chat(render_prompt(tpl, slots, {}), label), rubric);
}

/// Embeddings served by the configured endpoint.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(LlmClient& client) : client_(client) {}
  std::string identity() const override { return "endpoint:" + client_.config().model; }
  int dimensionality() const override { return dim_; }
  std::vector<double> embed(const std::string& text) override {
    auto v = client_.embed(text);
    dim_ = static_cast<int>(v.size());
    return v;
  }

 private:
  LlmClient& client_;
  int dim_ = 0;
};

// --- templates ----------------------------------------------------------------

inline PromptTemplate default_template(PromptKind kind) {
  PromptTemplate tpl;
  tpl.kind = kind;
  switch (kind) {
    case PromptKind::summarize:
      tpl.text =
          "You are given {{frame_count}} screenshots taken in order from one phone "
          "screen-recording session. Work out what the user did and what they were trying to "
          "achieve. Reply with a single JSON object and nothing else, shaped like "
          "{\"Operation\": \"...\", \"Intent\": \"...\"}. Operation is a concise description of "
          "the action sequence, ideally 20 to 50 characters; Intent states the inferred goal.";
      break;
    case PromptKind::suggest_operation:
      tpl.text =
          "A user's recent phone activity was summarized as:\n"
          "Operation: {{operation}}\nIntent: {{intent}}\n"
          "The screenshots are attached in order. Suggest the most helpful next in-app actions "
          "the user is likely to take. Reply with a single JSON object shaped like "
          "{\"Suggestions\": [\"...\"]} containing 1 to 3 concrete, executable actions.";
      break;
    case PromptKind::suggest_search:
      tpl.text =
          "A user's recent phone activity was summarized as:\n"
          "Operation: {{operation}}\nIntent: {{intent}}\n"
          "The screenshots are attached in order. Suggest search queries that would help the "
          "user continue. Reply with a single JSON object shaped like "
          "{\"Suggestions\": [\"...\"]} containing 1 to 3 query strings.";
      break;
    case PromptKind::judge_summary:
      tpl.text =
          "Grade a predicted screen-trajectory summary against a reference. Score each "
          "criterion 0 (wrong or absent), 1 (partially right), or 2 (fully right):\n"
          "- Action Information Completeness: every performed action is mentioned.\n"
          "- Action Sequence Accuracy: actions appear in the order they happened.\n"
          "- Object Detail Accuracy: app names, items, and fields are named correctly.\n"
          "- Output Format Standardization: the summary follows the requested format.\n"
          "- Generated Intent Reasonableness: the inferred goal plausibly explains the actions.\n"
          "Prediction: {{prediction}}\nReference: {{reference}}\n"
          "Reply with a single JSON object whose keys are exactly the five criterion names "
          "and whose values are the integer scores.";
      break;
    case PromptKind::judge_suggestion:
      tpl.text =
          "Grade a suggestion produced for a user mid-trajectory against the reference "
          "description of their situation. Score each criterion 0, 1, or 2:\n"
          "- Relevance: the suggestion fits what the user is doing.\n"
          "- Usefulness: acting on it would actually help.\n"
          "- Clarity: it is unambiguous.\n"
          "- Executability: the user could do it right away.\n"
          "- Novelty/Surprise: it adds something the user had not already done.\n"
          "Prediction: {{prediction}}\nReference: {{reference}}\n"
          "Reply with a single JSON object whose keys are exactly the five criterion names "
          "and whose values are the integer scores.";
      break;
  }
  return tpl;
}

inline PromptTemplate load_template(const std::filesystem::path& path, PromptKind kind,
                                    int max_images = 8) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read template: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PromptTemplate tpl;
  tpl.kind = kind;
  tpl.text = std::move(text);
  tpl.max_images = max_images;
  return tpl;
}

}  // namespace fcmir
