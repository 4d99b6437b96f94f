#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fcmir/imgproc.hpp"
#include "fcmir/ingest.hpp"
#include "fcmir/llm.hpp"
#include "fcmir/stitch.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

/// Flat [section] key=value configuration. Lookups consult the environment
/// first: key "sampling.fps" is overridden by FCMIR_SAMPLING_FPS. Secrets are
/// refused in files; FCMIR_API_KEY is the only way to pass one.
class Config {
 public:
  Config() = default;

  static Config from_string(const std::string& text, const std::string& origin = "<memory>") {
    Config cfg;
    std::string section;
    std::size_t lineno = 0;
    std::istringstream stream(text);
    for (std::string line; std::getline(stream, line);) {
      ++lineno;
      const std::string stripped = strip_comment(line);
      const std::string t = trim(stripped);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string value = unquote(trim(t.substr(eq + 1)));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      if (key == "endpoint.api_key" || key.ends_with(".api_key") || key == "api_key")
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": api keys must come from the FCMIR_API_KEY environment variable");
      cfg.kv_[key] = value;
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_string(text, path.string());
  }

  bool has(const std::string& key) const {
    return overrides_.count(key) > 0 || env_value(key).has_value() || kv_.count(key) > 0;
  }

  /// Explicit override (e.g. a CLI flag); wins over environment and file.
  void set_override(const std::string& key, const std::string& value) {
    if (key.ends_with("api_key"))
      throw ConfigError("api keys must come from the FCMIR_API_KEY environment variable");
    overrides_[key] = value;
  }

  std::string get_string(const std::string& key, const std::string& fallback = "") const {
    if (const auto ov = overrides_.find(key); ov != overrides_.end()) return ov->second;
    if (auto env = env_value(key)) return *env;
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  int get_int(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    try {
      std::size_t pos = 0;
      const int n = std::stoi(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected an integer, got \"" + v + "\"");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got \"" + v + "\"");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected a boolean, got \"" + v + "\"");
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  static std::optional<std::string> env_value(const std::string& key) {
    std::string name = "FCMIR_";
    for (char c : key)
      name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
    return std::nullopt;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
  }

  static std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
  }

  std::map<std::string, std::string> kv_;
  std::map<std::string, std::string> overrides_;
};

// --- typed builders -----------------------------------------------------------

inline SamplingParams sampling_params_from(const Config& cfg) {
  SamplingParams p;
  p.interval_s = cfg.get_double("sampling.interval_s", p.interval_s);
  p.fps = cfg.get_double("sampling.fps", p.fps);
  p.blur_threshold = cfg.get_double("sampling.blur_threshold", p.blur_threshold);
  p.phash_threshold = cfg.get_int("sampling.phash_threshold", p.phash_threshold);
  p.ssim_threshold = cfg.get_double("sampling.ssim_threshold", p.ssim_threshold);
  p.l1_threshold = cfg.get_double("sampling.l1_threshold", p.l1_threshold);
  p.histogram_reject = cfg.get_double("sampling.histogram_reject", p.histogram_reject);
  if (cfg.has("sampling.comparator"))
    p.comparator = comparator_from_string(cfg.get_string("sampling.comparator"));
  if (cfg.has("sampling.compare_against")) {
    const std::string v = cfg.get_string("sampling.compare_against");
    if (v == "last_sampled") {
      p.compare_against = CompareAgainst::last_sampled;
    } else if (v == "last_retained") {
      p.compare_against = CompareAgainst::last_retained;
    } else {
      throw ConfigError("sampling.compare_against: unknown value " + v);
    }
  }
  p.validate();
  return p;
}

inline SsimParams ssim_params_from(const Config& cfg) {
  SsimParams p;
  p.window = cfg.get_int("ssim.window", p.window);
  p.overlap_frac = cfg.get_double("ssim.overlap_frac", p.overlap_frac);
  p.downsample_width = cfg.get_int("ssim.downsample_width", p.downsample_width);
  p.validate();
  return p;
}

inline StitchParams stitch_params_from(const Config& cfg) {
  StitchParams p;
  p.ratio_threshold = cfg.get_double("stitch.ratio_threshold", p.ratio_threshold);
  p.knn_k = cfg.get_int("stitch.knn_k", p.knn_k);
  p.min_matches = cfg.get_int("stitch.min_matches", p.min_matches);
  p.max_features = cfg.get_int("stitch.max_features", p.max_features);
  p.fast_threshold = cfg.get_double("stitch.fast_threshold", p.fast_threshold);
  p.strip_height = cfg.get_int("stitch.strip_height", p.strip_height);
  p.bar_hamming_max = cfg.get_int("stitch.bar_hamming_max", p.bar_hamming_max);
  p.max_bar_frac = cfg.get_double("stitch.max_bar_frac", p.max_bar_frac);
  p.max_x_drift = cfg.get_double("stitch.max_x_drift", p.max_x_drift);
  p.validate();
  return p;
}

inline IngestParams ingest_params_from(const Config& cfg) {
  IngestParams p;
  p.fps = cfg.get_double("sampling.fps", p.fps);
  p.decoder_cmd = cfg.get_string("ingest.decoder_cmd", p.decoder_cmd);
  return p;
}

inline EndpointConfig endpoint_config_from(const Config& cfg) {
  EndpointConfig p;
  p.base_url = cfg.get_string("endpoint.base_url", p.base_url);
  p.model = cfg.get_string("endpoint.model", p.model);
  p.max_images = cfg.get_int("endpoint.max_images", p.max_images);
  p.image_width = cfg.get_int("endpoint.image_width", p.image_width);
  p.timeout_s = cfg.get_double("endpoint.timeout_s", p.timeout_s);
  p.max_retries = cfg.get_int("endpoint.max_retries", p.max_retries);
  p.max_in_flight = cfg.get_int("endpoint.max_in_flight", p.max_in_flight);
  p.backoff_ms = cfg.get_int("endpoint.backoff_ms", p.backoff_ms);
  p = endpoint_from_env(p);
  p.validate();
  return p;
}

inline RewardWeights reward_weights_from(const Config& cfg) {
  RewardWeights w;
  w.w_sim = cfg.get_double("reward.w_sim", w.w_sim);
  w.w_fmt = cfg.get_double("reward.w_fmt", w.w_fmt);
  w.sim_sbert_weight = cfg.get_double("reward.sim_sbert_weight", w.sim_sbert_weight);
  w.sim_rouge_weight = cfg.get_double("reward.sim_rouge_weight", w.sim_rouge_weight);
  w.validate();
  return w;
}

inline std::vector<std::string> load_location_keywords(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read location keyword lexicon: " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace fcmir
