#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fcmir/fcmir.hpp"

namespace fs = std::filesystem;
using namespace fcmir;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitEndpoint = 4;

int code_for_current_exception() {
  try {
    throw;
  } catch (const EndpointError&) {
    return kExitEndpoint;
  } catch (const ConfigError&) {
    return kExitConfig;
  } catch (const StageError&) {
    return kExitStage;
  } catch (const std::exception&) {
    return kExitStage;
  }
}

struct CommonOpts {
  std::vector<std::string> sources;
  std::string out_dir;
  std::string config_file;
  bool video = false;
  int jobs = 1;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_override_flag(CLI::App* cmd, CommonOpts& o, const std::string& flag,
                       const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&o, key](const std::string& v) { o.overrides.emplace_back(key, v); }, help);
}

void add_param_flags(CLI::App* cmd, CommonOpts& o) {
  add_override_flag(cmd, o, "--interval-s", "sampling.interval_s", "Sampling interval in seconds");
  add_override_flag(cmd, o, "--fps", "sampling.fps", "Source frame rate");
  add_override_flag(cmd, o, "--blur-threshold", "sampling.blur_threshold",
                    "Laplacian variance below this is blurry");
  add_override_flag(cmd, o, "--phash-threshold", "sampling.phash_threshold",
                    "Max Hamming distance still counted similar");
  add_override_flag(cmd, o, "--ssim-threshold", "sampling.ssim_threshold",
                    "Min window SSIM still counted similar");
  add_override_flag(cmd, o, "--l1-threshold", "sampling.l1_threshold",
                    "Max mean absolute difference still counted similar");
  add_override_flag(cmd, o, "--comparator", "sampling.comparator",
                    "phash_ssim, l1, or phash_l1");
  add_override_flag(cmd, o, "--compare-against", "sampling.compare_against",
                    "last_sampled or last_retained");
  add_override_flag(cmd, o, "--histogram-reject", "sampling.histogram_reject",
                    "Histogram prescreen distance");
  add_override_flag(cmd, o, "--ratio-threshold", "stitch.ratio_threshold", "Match ratio test");
  add_override_flag(cmd, o, "--min-matches", "stitch.min_matches", "Min surviving matches");
  add_override_flag(cmd, o, "--max-features", "stitch.max_features", "Corner budget per image");
  add_override_flag(cmd, o, "--fast-threshold", "stitch.fast_threshold", "Corner threshold");
  add_override_flag(cmd, o, "--strip-height", "stitch.strip_height", "Bar detection strip rows");
  add_override_flag(cmd, o, "--bar-hamming-max", "stitch.bar_hamming_max",
                    "Max strip hash distance for a shared bar");
  add_override_flag(cmd, o, "--max-bar-frac", "stitch.max_bar_frac",
                    "Cap on detected bar height as a fraction");
  add_override_flag(cmd, o, "--max-x-drift", "stitch.max_x_drift",
                    "Max horizontal drift for a vertical stitch");
  add_override_flag(cmd, o, "--resize-width", "pipeline.resize_width",
                    "Resize frames to this width on ingest (0 keeps)");
  add_override_flag(cmd, o, "--decoder-cmd", "ingest.decoder_cmd",
                    "Video decoder command template");
  add_override_flag(cmd, o, "--base-url", "endpoint.base_url", "Chat-completions endpoint");
  add_override_flag(cmd, o, "--model", "endpoint.model", "Model name sent to the endpoint");
  add_override_flag(cmd, o, "--max-images", "endpoint.max_images", "Images per request cap");
  add_override_flag(cmd, o, "--image-width", "endpoint.image_width", "Upload resize width");
  add_override_flag(cmd, o, "--templates-dir", "templates.dir", "Prompt template directory");
}

void add_common(CLI::App* cmd, CommonOpts& o, bool multi_source = true) {
  if (multi_source)
    cmd->add_option("--source", o.sources, "Frame directory (or video with --video)")
        ->required()
        ->expected(-1);
  else
    cmd->add_option("--source", o.sources, "Frame directory (or video with --video)")
        ->required()
        ->expected(1);
  cmd->add_option("--out", o.out_dir, "Output directory")->required();
  cmd->add_option("--config", o.config_file, "Config file");
  cmd->add_flag("--video", o.video, "Treat sources as video files");
  cmd->add_option("--jobs", o.jobs, "Parallel sources")->check(CLI::Range(1, 256));
  add_param_flags(cmd, o);
}

Config build_config(const CommonOpts& o) {
  Config cfg = o.config_file.empty() ? Config{} : Config::load(o.config_file);
  for (const auto& [k, v] : o.overrides) cfg.set_override(k, v);
  return cfg;
}

std::string unique_source_id(const fs::path& source, std::set<std::string>& used) {
  std::string base = source.filename().string();
  if (base.empty()) base = source.parent_path().filename().string();
  if (base.empty()) base = "source";
  std::string id = base;
  for (int k = 2; used.count(id) > 0; ++k) id = base + "_" + std::to_string(k);
  used.insert(id);
  return id;
}

int run_pipelines(const CommonOpts& o, const StageSet& stages) {
  const Config cfg = build_config(o);
  std::set<std::string> used;
  std::vector<PipelineInput> inputs;
  for (const auto& s : o.sources) {
    PipelineInput in;
    in.source = s;
    in.kind = o.video ? SourceKind::video_file : SourceKind::frame_dir;
    in.source_id = unique_source_id(in.source, used);
    inputs.push_back(std::move(in));
  }
  const bool nested = inputs.size() > 1;
  std::vector<std::exception_ptr> errors(inputs.size());

  auto worker = [&](std::size_t i) {
    try {
      const fs::path out = nested ? fs::path(o.out_dir) / inputs[i].source_id : fs::path(o.out_dir);
      const PipelineManifest m = run_pipeline(inputs[i], cfg, stages, out);
      std::fprintf(stdout, "%s: %zu sampled, %zu retained, %.1f%% frame compression -> %s\n",
                   m.source_id.c_str(), m.sampled_indices.size(), m.retained.size(),
                   m.frame_compression_pct, (out / "manifest.json").c_str());
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  if (o.jobs <= 1 || inputs.size() <= 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) worker(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t n_workers = std::min<std::size_t>(o.jobs, inputs.size());
    for (std::size_t w = 0; w < n_workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < inputs.size(); i = next.fetch_add(1)) worker(i);
      });
    for (auto& t : pool) t.join();
  }

  int code = kExitOk;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "%s: error: %s\n", inputs[i].source_id.c_str(), e.what());
      if (code == kExitOk) code = code_for_current_exception();
    }
  }
  return code;
}

// --- synth ----------------------------------------------------------------

struct SynthOpts {
  std::string out_dir;
  std::string kind = "trajectory";
  int count = 1;
  std::uint64_t seed = 1;
  int width = 384;
  int viewport_h = 800;
  int h_top = 48;
  int h_bot = 96;
  int frames = 6;
  int screens = 4;
  int dups = 6;
  int blurs = 2;
  double texture = 1.0;
};

nlohmann::json truth_to_json(const synth::SyntheticTruth& t, std::size_t frame_count,
                             const std::string& kind, std::uint64_t seed) {
  nlohmann::json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["frame_count"] = frame_count;
  j["viewport"] = {{"width", t.viewport_w}, {"height", t.viewport_h}};
  j["h_top"] = t.h_top;
  j["h_bot"] = t.h_bot;
  j["page"] = {{"width", t.page.width}, {"height", t.page.height}};
  j["scroll_offsets"] = t.scroll_offsets;
  j["distinct_screens"] = t.distinct_screens;
  j["screen_of_frame"] = t.screen_of_frame;
  j["blur_indices"] = std::vector<std::size_t>(t.blur_indices.begin(), t.blur_indices.end());
  nlohmann::json dups = nlohmann::json::object();
  for (const auto& [inserted, anchor] : t.duplicate_map)
    dups[std::to_string(inserted)] = anchor;
  j["duplicate_map"] = dups;
  return j;
}

int run_synth(const SynthOpts& s) {
  for (int k = 0; k < s.count; ++k) {
    const std::uint64_t seed = s.seed + static_cast<std::uint64_t>(k);
    std::vector<Frame> frames;
    synth::SyntheticTruth truth;
    if (s.kind == "trajectory") {
      synth::TrajectorySpec spec;
      spec.width = s.width;
      spec.viewport_h = s.viewport_h;
      spec.h_top = s.h_top;
      spec.h_bot = s.h_bot;
      spec.n_screens = s.screens;
      spec.dup_count = s.dups;
      spec.blur_count = s.blurs;
      spec.texture_density = s.texture;
      spec.seed = seed;
      std::tie(frames, truth) = synth::make_trajectory(spec);
    } else if (s.kind == "scroll") {
      synth::ScrollSpec spec;
      spec.width = s.width;
      spec.viewport_h = s.viewport_h;
      spec.h_top = s.h_top;
      spec.h_bot = s.h_bot;
      spec.n_frames = s.frames;
      spec.texture_density = s.texture;
      spec.seed = seed;
      std::tie(frames, truth) = synth::make_scroll_sequence(spec);
    } else {
      throw ConfigError("synth kind must be trajectory or scroll");
    }

    char name[32];
    std::snprintf(name, sizeof(name), "seq_%03d", k);
    const fs::path dir = s.count > 1 ? fs::path(s.out_dir) / name : fs::path(s.out_dir);
    fs::create_directories(dir / "frames");  // keeps page.png out of the frame glob
    for (const Frame& f : frames) {
      char fname[32];
      std::snprintf(fname, sizeof(fname), "frame_%06zu.png", f.index);
      save_png(f.image, dir / "frames" / fname);
    }
    save_png(truth.page, dir / "page.png");
    std::ofstream out(dir / "truth.json", std::ios::binary);
    out << truth_to_json(truth, frames.size(), s.kind, seed).dump(2) << "\n";
    std::fprintf(stdout, "%s: %zu frames, %zu distinct screens\n", dir.c_str(), frames.size(),
                 truth.distinct_screens);
  }
  return kExitOk;
}

// --- eval -------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;  // lowercased; empty if none detected
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based file line of each data row
  std::string path;
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Table read_table(const std::string& path, const std::vector<std::string>& known_columns) {
  Table t;
  t.path = path;
  const auto rows = load_csv(path);
  if (rows.empty()) throw StageError(path + ":1: empty input");
  bool has_header = false;
  for (const auto& cell : rows.front())
    for (const auto& k : known_columns)
      if (lower(cell) == k) has_header = true;
  std::size_t start = 0;
  if (has_header) {
    for (const auto& cell : rows.front()) t.header.push_back(lower(cell));
    start = 1;
  }
  for (std::size_t i = start; i < rows.size(); ++i) {
    t.rows.push_back(rows[i]);
    t.lines.push_back(i + 1);
  }
  if (t.rows.empty()) throw StageError(path + ":1: no data rows");
  return t;
}

std::size_t column_index(const Table& t, const std::string& name, std::size_t positional) {
  if (!t.header.empty()) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
      if (t.header[i] == name) return i;
    throw StageError(t.path + ":1: missing column \"" + name + "\"");
  }
  return positional;
}

std::string cell_at(const Table& t, std::size_t row, std::size_t col) {
  if (col >= t.rows[row].size())
    throw StageError(t.path + ":" + std::to_string(t.lines[row]) + ": expected at least " +
                     std::to_string(col + 1) + " columns");
  return t.rows[row][col];
}

double num_at(const Table& t, std::size_t row, std::size_t col) {
  const std::string v = cell_at(t, row, col);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw StageError(t.path + ":" + std::to_string(t.lines[row]) + ": not a number: \"" + v +
                     "\"");
  }
}

int int_at(const Table& t, std::size_t row, std::size_t col) {
  const double d = num_at(t, row, col);
  const int n = static_cast<int>(d);
  if (static_cast<double>(n) != d)
    throw StageError(t.path + ":" + std::to_string(t.lines[row]) + ": not an integer");
  return n;
}

std::vector<std::pair<std::string, std::string>> load_pairs(const std::string& path,
                                                            const char* left_name,
                                                            const char* right_name) {
  const Table t = read_table(path, {left_name, right_name});
  const std::size_t lc = column_index(t, left_name, 0);
  const std::size_t rc = column_index(t, right_name, 1);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    pairs.emplace_back(cell_at(t, i, lc), cell_at(t, i, rc));
  return pairs;
}

void write_report(const nlohmann::json& report, const fs::path& out_dir, const std::string& stem) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / (stem + ".json"), std::ios::binary);
    if (!out) throw StageError("cannot write report in " + out_dir.string());
    out << report.dump(2) << "\n";
  }
  if (report.contains("rows"))
    save_csv(out_dir / (stem + ".csv"), report_rows_to_csv(report));
  std::fprintf(stdout, "wrote %s\n", (out_dir / (stem + ".json")).c_str());
}

struct EvalOpts {
  std::string input;
  std::string out_dir;
  std::string config_file;
  std::string embeddings = "hashing";  // hashing | endpoint | none
  std::string lexicon_file;
  std::string rubric = "summary";
  std::string x_col = "x", y_col = "y";
};

Config eval_config(const EvalOpts& e) {
  return e.config_file.empty() ? Config{} : Config::load(e.config_file);
}

int run_eval_rouge(const EvalOpts& e) {
  const auto pairs = load_pairs(e.input, "prediction", "reference");
  std::optional<LlmClient> client;
  std::unique_ptr<EmbeddingProvider> provider;
  if (e.embeddings == "hashing") {
    provider = std::make_unique<HashingEmbeddingProvider>();
  } else if (e.embeddings == "endpoint") {
    client.emplace(endpoint_config_from(eval_config(e)), fs::path(e.out_dir) / "responses");
    provider = std::make_unique<HttpEmbeddingProvider>(*client);
  } else if (e.embeddings != "none") {
    throw ConfigError("--embeddings must be hashing, endpoint, or none");
  }
  write_report(rouge_report(pairs, provider.get()), e.out_dir, "rouge");
  return kExitOk;
}

int run_eval_reward(const EvalOpts& e) {
  const auto pairs = load_pairs(e.input, "prediction", "label");
  std::vector<std::string> lexicon;
  if (!e.lexicon_file.empty()) lexicon = load_location_keywords(e.lexicon_file);
  std::optional<LlmClient> client;
  std::unique_ptr<EmbeddingProvider> provider;
  if (e.embeddings == "endpoint") {
    client.emplace(endpoint_config_from(eval_config(e)), fs::path(e.out_dir) / "responses");
    provider = std::make_unique<HttpEmbeddingProvider>(*client);
  } else {
    provider = std::make_unique<HashingEmbeddingProvider>();
  }
  write_report(reward_report(pairs, *provider, {}, lexicon), e.out_dir, "reward");
  return kExitOk;
}

int run_eval_agreement(const EvalOpts& e) {
  const Table t = read_table(e.input, {"metric", "rater_a", "rater_b"});
  const bool has_metric = !t.header.empty() &&
                          std::find(t.header.begin(), t.header.end(), "metric") != t.header.end();
  const std::size_t mc = has_metric ? column_index(t, "metric", 0) : 0;
  const std::size_t ac = column_index(t, "rater_a", has_metric ? 1 : 0);
  const std::size_t bc = column_index(t, "rater_b", has_metric ? 2 : 1);
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_metric;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string metric = has_metric ? cell_at(t, i, mc) : "all";
    by_metric[metric].first.push_back(int_at(t, i, ac));
    by_metric[metric].second.push_back(int_at(t, i, bc));
  }
  write_report(agreement_report(by_metric), e.out_dir, "agreement");
  return kExitOk;
}

int run_eval_regress(const EvalOpts& e) {
  const Table t = read_table(e.input, {lower(e.x_col), lower(e.y_col)});
  const std::size_t xc = column_index(t, lower(e.x_col), 0);
  const std::size_t yc = column_index(t, lower(e.y_col), 1);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    xs.push_back(num_at(t, i, xc));
    ys.push_back(num_at(t, i, yc));
  }
  write_report(regression_report(xs, ys), e.out_dir, "regression");
  return kExitOk;
}

int run_eval_judge(const EvalOpts& e) {
  if (e.rubric != "summary" && e.rubric != "suggestion")
    throw ConfigError("--rubric must be summary or suggestion");
  const auto pairs = load_pairs(e.input, "prediction", "reference");
  const Rubric rubric = e.rubric == "suggestion" ? Rubric::suggestion : Rubric::summary;
  const Config cfg = eval_config(e);
  LlmClient client(endpoint_config_from(cfg), fs::path(e.out_dir) / "responses");
  const PromptKind kind =
      rubric == Rubric::summary ? PromptKind::judge_summary : PromptKind::judge_suggestion;
  PromptTemplate tpl = default_template(kind);
  const std::string tdir = cfg.get_string("templates.dir", "");
  const char* fname = rubric == Rubric::summary ? "judge_summary.txt" : "judge_suggestion.txt";
  if (!tdir.empty() && fs::exists(fs::path(tdir) / fname))
    tpl = load_template(fs::path(tdir) / fname, kind, tpl.max_images);

  std::vector<ScoreCard> cards;
  for (const auto& [pred, ref] : pairs)
    cards.push_back(judge_score(pred, ref, rubric, client, tpl));

  nlohmann::json report = scorecard_report(cards);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& card : cards) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [metric, score] : card.scores) row[metric] = score;
    row["total"] = card.total();
    rows.push_back(std::move(row));
  }
  report["rows"] = rows;
  write_report(report, e.out_dir, "judge");
  return kExitOk;
}

// --- ablate -------------------------------------------------------------------

struct AblateOpts {
  std::vector<std::string> sources;
  std::string out_dir;
  std::string config_file;
  int count = 10;
  std::uint64_t seed = 1;
  bool with_endpoint = false;
  std::string reference =
      "Scrolled through four app screens and reviewed the listed content in order.";
};

int run_ablate(const AblateOpts& a) {
  Config cfg = a.config_file.empty() ? Config{} : Config::load(a.config_file);
  std::vector<std::vector<Frame>> corpus;
  if (!a.sources.empty()) {
    const IngestParams ip = ingest_params_from(cfg);
    for (const auto& s : a.sources) corpus.push_back(load_frames(s, SourceKind::frame_dir, ip));
  } else {
    for (int k = 0; k < a.count; ++k) {
      synth::TrajectorySpec spec;
      spec.seed = a.seed + static_cast<std::uint64_t>(k);
      corpus.push_back(synth::make_trajectory(spec).first);
    }
  }

  const SamplingParams base = sampling_params_from(cfg);
  const SsimParams sp = ssim_params_from(cfg);
  std::vector<AblationRow> rows;
  if (a.with_endpoint) {
    LlmClient client(endpoint_config_from(cfg), fs::path(a.out_dir) / "responses");
    PromptTemplate sum_tpl = default_template(PromptKind::summarize);
    sum_tpl.max_images = client.config().max_images;
    const PromptTemplate judge_tpl = default_template(PromptKind::judge_summary);
    rows = run_ablation(corpus, base, sp, &client, &sum_tpl, &judge_tpl, a.reference);
  } else {
    rows = run_ablation(corpus, base, sp);
  }

  fs::create_directories(fs::path(a.out_dir) / "reports");
  const fs::path dir = fs::path(a.out_dir) / "reports";
  {
    std::ofstream out(dir / "ablation.json", std::ios::binary);
    out << ablation_report_json(rows).dump(2) << "\n";
  }
  save_csv(dir / "ablation.csv", ablation_report_rows(rows));
  for (const auto& r : rows)
    std::fprintf(stdout, "%-11s frame compression %.1f%%, pixel compression %.1f%%\n",
                 r.comparator.c_str(), r.frame_compression_pct, r.pixel_compression_pct);
  std::fprintf(stdout, "wrote %s\n", (dir / "ablation.json").c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-sequence compression and intent mining toolkit"};
  app.require_subcommand(1);

  CommonOpts sample_o, stitch_o, summarize_o, suggest_o, pipeline_o;
  bool summarize_stitch = false, suggest_stitch = false;
  std::vector<std::string> stage_names{"sample", "stitch", "summarize", "suggest"};

  auto* sample_cmd = app.add_subcommand("sample", "Select keyframes from a frame sequence");
  add_common(sample_cmd, sample_o);
  auto* stitch_cmd = app.add_subcommand("stitch", "Select keyframes and stitch scroll batches");
  add_common(stitch_cmd, stitch_o);
  auto* summarize_cmd = app.add_subcommand("summarize", "Keyframes plus an intent summary");
  add_common(summarize_cmd, summarize_o);
  summarize_cmd->add_flag("--stitch", summarize_stitch, "Also stitch before summarizing");
  auto* suggest_cmd = app.add_subcommand("suggest", "Full chain through suggestion generation");
  add_common(suggest_cmd, suggest_o);
  suggest_cmd->add_flag("--stitch", suggest_stitch, "Also stitch before summarizing");
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run an explicit stage set");
  add_common(pipeline_cmd, pipeline_o);
  pipeline_cmd->add_option("--stages", stage_names, "Stages to run")->expected(-1);

  SynthOpts synth_o;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
  synth_cmd->add_option("--out", synth_o.out_dir, "Output directory")->required();
  synth_cmd->add_option("--kind", synth_o.kind, "trajectory or scroll");
  synth_cmd->add_option("--count", synth_o.count, "Sequences to generate")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_o.seed, "Base seed");
  synth_cmd->add_option("--width", synth_o.width, "Viewport width");
  synth_cmd->add_option("--viewport-h", synth_o.viewport_h, "Viewport height");
  synth_cmd->add_option("--h-top", synth_o.h_top, "Status bar height");
  synth_cmd->add_option("--h-bot", synth_o.h_bot, "Nav bar height");
  synth_cmd->add_option("--frames", synth_o.frames, "Frames per scroll sequence");
  synth_cmd->add_option("--screens", synth_o.screens, "Distinct screens per trajectory");
  synth_cmd->add_option("--dups", synth_o.dups, "Duplicates to inject");
  synth_cmd->add_option("--blurs", synth_o.blurs, "Blurred frames to inject");
  synth_cmd->add_option("--texture-density", synth_o.texture, "0 disables page texture");

  EvalOpts eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "Metric reports from CSV inputs");
  eval_cmd->require_subcommand(1);
  auto add_eval_common = [&](CLI::App* c, const char* input_help) {
    c->add_option("--input", eval_o.input, input_help)->required();
    c->add_option("--out", eval_o.out_dir, "Report directory")->required();
    c->add_option("--config", eval_o.config_file, "Config file");
  };
  auto* ev_rouge = eval_cmd->add_subcommand("rouge", "ROUGE-1/2/L and embedding cosine");
  add_eval_common(ev_rouge, "CSV with prediction,reference columns");
  ev_rouge->add_option("--embeddings", eval_o.embeddings, "hashing, endpoint, or none");
  auto* ev_reward = eval_cmd->add_subcommand("reward", "Similarity/format reward");
  add_eval_common(ev_reward, "CSV with prediction,label columns");
  ev_reward->add_option("--embeddings", eval_o.embeddings, "hashing or endpoint");
  ev_reward->add_option("--lexicon", eval_o.lexicon_file, "Location keyword file");
  auto* ev_agree = eval_cmd->add_subcommand("agreement", "Rater accuracy and kappa");
  add_eval_common(ev_agree, "CSV with [metric,]rater_a,rater_b columns");
  auto* ev_regress = eval_cmd->add_subcommand("regress", "OLS slope, intercept, p-value");
  add_eval_common(ev_regress, "CSV with x,y columns");
  ev_regress->add_option("--x-col", eval_o.x_col, "X column name");
  ev_regress->add_option("--y-col", eval_o.y_col, "Y column name");
  auto* ev_judge = eval_cmd->add_subcommand("judge", "Rubric scoring via the endpoint");
  add_eval_common(ev_judge, "CSV with prediction,reference columns");
  ev_judge->add_option("--rubric", eval_o.rubric, "summary or suggestion");

  AblateOpts ablate_o;
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare comparators on a corpus");
  ablate_cmd->add_option("--source", ablate_o.sources, "Frame directories (default: synth corpus)")
      ->expected(-1);
  ablate_cmd->add_option("--out", ablate_o.out_dir, "Output directory")->required();
  ablate_cmd->add_option("--config", ablate_o.config_file, "Config file");
  ablate_cmd->add_option("--count", ablate_o.count, "Synth sequences when no --source");
  ablate_cmd->add_option("--seed", ablate_o.seed, "Synth base seed");
  ablate_cmd->add_flag("--with-endpoint", ablate_o.with_endpoint,
                       "Add judge-based downstream columns");
  ablate_cmd->add_option("--reference", ablate_o.reference, "Reference text for the judge");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sample_cmd) return run_pipelines(sample_o, parse_stages({"sample"}));
    if (*stitch_cmd) return run_pipelines(stitch_o, parse_stages({"sample", "stitch"}));
    if (*summarize_cmd) {
      std::vector<std::string> st{"sample", "summarize"};
      if (summarize_stitch) st.push_back("stitch");
      return run_pipelines(summarize_o, parse_stages(st));
    }
    if (*suggest_cmd) {
      std::vector<std::string> st{"sample", "summarize", "suggest"};
      if (suggest_stitch) st.push_back("stitch");
      return run_pipelines(suggest_o, parse_stages(st));
    }
    if (*pipeline_cmd) return run_pipelines(pipeline_o, parse_stages(stage_names));
    if (*synth_cmd) return run_synth(synth_o);
    if (*ablate_cmd) return run_ablate(ablate_o);
    if (*eval_cmd) {
      if (*ev_rouge) return run_eval_rouge(eval_o);
      if (*ev_reward) return run_eval_reward(eval_o);
      if (*ev_agree) return run_eval_agreement(eval_o);
      if (*ev_regress) return run_eval_regress(eval_o);
      if (*ev_judge) return run_eval_judge(eval_o);
    }
    std::fprintf(stderr, "error: no subcommand\n");
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return code_for_current_exception();
  }
}
