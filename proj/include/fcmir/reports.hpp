#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fcmir/evalkit.hpp"

namespace fcmir {

/// Text-pair scoring: ROUGE-1/2/L F1 plus embedding cosine per row, with
/// corpus means. Pairs are (prediction, reference).
inline nlohmann::json rouge_report(const std::vector<std::pair<std::string, std::string>>& pairs,
                                   EmbeddingProvider* provider = nullptr) {
  if (pairs.empty()) throw StageError("rouge_report: no pairs");
  nlohmann::json rows = nlohmann::json::array();
  double m1 = 0, m2 = 0, ml = 0, mc = 0;
  for (const auto& [pred, ref] : pairs) {
    const double r1 = rouge_n(pred, ref, 1).f1;
    const double r2 = rouge_n(pred, ref, 2).f1;
    const double rl = rouge_l(pred, ref).f1;
    nlohmann::json row{{"rouge1_f1", r1}, {"rouge2_f1", r2}, {"rougeL_f1", rl}};
    if (provider) {
      const double c = embedding_similarity(pred, ref, *provider);
      row["cosine"] = c;
      mc += c;
    }
    m1 += r1;
    m2 += r2;
    ml += rl;
    rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(pairs.size());
  nlohmann::json j{{"report", "rouge"}, {"count", pairs.size()}, {"rows", rows}};
  j["mean"] = {{"rouge1_f1", m1 / n}, {"rouge2_f1", m2 / n}, {"rougeL_f1", ml / n}};
  if (provider) {
    j["mean"]["cosine"] = mc / n;
    j["embedding"] = provider->identity();
  }
  return j;
}

inline nlohmann::json reward_report(const std::vector<std::pair<std::string, std::string>>& pairs,
                                    EmbeddingProvider& provider, const RewardWeights& w = {},
                                    const std::vector<std::string>& location_keywords = {}) {
  if (pairs.empty()) throw StageError("reward_report: no pairs");
  nlohmann::json rows = nlohmann::json::array();
  double sum = 0, lo = 1e300, hi = -1e300;
  for (const auto& [pred, label] : pairs) {
    const RewardBreakdown b = total_reward(pred, label, provider, w, location_keywords);
    rows.push_back({{"similarity", b.similarity}, {"format", b.format}, {"total", b.total}});
    sum += b.total;
    lo = std::min(lo, b.total);
    hi = std::max(hi, b.total);
  }
  return nlohmann::json{{"report", "reward"},
                        {"count", pairs.size()},
                        {"rows", rows},
                        {"mean_total", sum / static_cast<double>(pairs.size())},
                        {"min_total", lo},
                        {"max_total", hi},
                        {"embedding", provider.identity()}};
}

/// Rater agreement per metric name plus a pooled overall row. Input maps a
/// metric label to its two aligned rating vectors.
inline nlohmann::json agreement_report(
    const std::map<std::string, std::pair<std::vector<int>, std::vector<int>>>& by_metric) {
  if (by_metric.empty()) throw StageError("agreement_report: no data");
  nlohmann::json rows = nlohmann::json::array();
  std::vector<int> all_a, all_b;
  for (const auto& [name, ab] : by_metric) {
    const AgreementStats s = agreement(ab.first, ab.second);
    nlohmann::json row{{"metric", name}, {"n", ab.first.size()}, {"accuracy", s.accuracy}};
    row["kappa"] = s.kappa ? nlohmann::json(*s.kappa) : nlohmann::json(nullptr);
    rows.push_back(std::move(row));
    all_a.insert(all_a.end(), ab.first.begin(), ab.first.end());
    all_b.insert(all_b.end(), ab.second.begin(), ab.second.end());
  }
  const AgreementStats overall = agreement(all_a, all_b);
  nlohmann::json j{{"report", "agreement"}, {"rows", rows}};
  j["overall"] = {{"n", all_a.size()}, {"accuracy", overall.accuracy}};
  j["overall"]["kappa"] = overall.kappa ? nlohmann::json(*overall.kappa) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json regression_report(const std::vector<double>& xs,
                                        const std::vector<double>& ys) {
  const RegressionFit fit = ols_fit(xs, ys);
  return nlohmann::json{{"report", "regression"}, {"n", fit.n},        {"slope", fit.slope},
                        {"intercept", fit.intercept},                  {"p_value", fit.p_value}};
}

inline nlohmann::json scorecard_report(const std::vector<ScoreCard>& cards) {
  const ScoreAggregate agg = aggregate_scorecards(cards);
  nlohmann::json metrics = nlohmann::json::array();
  for (std::size_t k = 0; k < agg.metrics.size(); ++k)
    metrics.push_back({{"metric", agg.metrics[k]},
                       {"sum", agg.sums[k]},
                       {"normalized", agg.normalized[k]}});
  return nlohmann::json{{"report", "judge"},
                        {"rubric", to_string(agg.rubric)},
                        {"count", agg.count},
                        {"metrics", metrics}};
}

/// Flatten a report's "rows" array into CSV-ready cells with a header row.
inline std::vector<std::vector<std::string>> report_rows_to_csv(const nlohmann::json& report) {
  if (!report.contains("rows") || !report["rows"].is_array() || report["rows"].empty())
    throw StageError("report_rows_to_csv: report has no rows");
  std::vector<std::string> header;
  for (auto it = report["rows"].front().begin(); it != report["rows"].front().end(); ++it)
    header.push_back(it.key());
  std::vector<std::vector<std::string>> out{header};
  for (const auto& row : report["rows"]) {
    std::vector<std::string> cells;
    for (const auto& key : header) {
      const auto& v = row.at(key);
      if (v.is_null()) cells.emplace_back("");
      else if (v.is_string()) cells.push_back(v.get<std::string>());
      else cells.push_back(v.dump());
    }
    out.push_back(std::move(cells));
  }
  return out;
}

}  // namespace fcmir
