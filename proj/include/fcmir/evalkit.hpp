#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fcmir/util.hpp"

namespace fcmir {

// --- tokenization -----------------------------------------------------------

namespace detail {

inline std::vector<char32_t> decode_utf8(const std::string& s) {
  std::vector<char32_t> cps;
  for (std::size_t i = 0; i < s.size();) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = b0;
    if (b0 >= 0xF0) {
      len = 4;
      cp = b0 & 0x07u;
    } else if (b0 >= 0xE0) {
      len = 3;
      cp = b0 & 0x0Fu;
    } else if (b0 >= 0xC0) {
      len = 2;
      cp = b0 & 0x1Fu;
    }
    if (i + static_cast<std::size_t>(len) > s.size()) len = 1;
    for (int k = 1; k < len; ++k) {
      const auto bk = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((bk & 0xC0u) != 0x80u) {  // malformed: treat lead byte as a separator
        len = 1;
        cp = 0xFFFD;
        break;
      }
      cp = (cp << 6) | (bk & 0x3Fu);
    }
    cps.push_back(len == 1 && b0 >= 0x80 ? 0xFFFD : cp);
    i += static_cast<std::size_t>(len);
  }
  return cps;
}

inline bool is_cjk(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x3040 && c <= 0x30FF);
}

inline bool is_cjk_punct(char32_t c) {
  return (c >= 0x3000 && c <= 0x303F) || (c >= 0xFF00 && c <= 0xFF0F) ||
         (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF40) ||
         (c >= 0xFF5B && c <= 0xFF65);
}

inline void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

}  // namespace detail

/// CJK codepoints become single-character tokens; everything else forms runs
/// split on whitespace and punctuation, lowercased (ASCII).
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string run;
  auto flush = [&] {
    if (!run.empty()) tokens.push_back(std::move(run));
    run.clear();
  };
  for (char32_t c : detail::decode_utf8(text)) {
    if (detail::is_cjk(c)) {
      flush();
      std::string t;
      detail::append_utf8(t, c);
      tokens.push_back(std::move(t));
    } else if ((c >= U'a' && c <= U'z') || (c >= U'0' && c <= U'9')) {
      run.push_back(static_cast<char>(c));
    } else if (c >= U'A' && c <= U'Z') {
      run.push_back(static_cast<char>(c - U'A' + U'a'));
    } else if (c >= 0x80 && c != 0xFFFD && !detail::is_cjk_punct(c)) {
      detail::append_utf8(run, c);  // accented letters and the like stay in-word
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

/// Unicode codepoint count (what "characters" means for mixed CJK text).
inline std::size_t codepoint_count(const std::string& text) {
  return detail::decode_utf8(text).size();
}

// --- ROUGE ------------------------------------------------------------------

struct RougeScores {
  double precision = 0, recall = 0, f1 = 0;
};

namespace detail {

inline RougeScores rouge_from_counts(double overlap, double pred_total, double ref_total) {
  RougeScores r;
  r.precision = pred_total > 0 ? overlap / pred_total : 0.0;
  r.recall = ref_total > 0 ? overlap / ref_total : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& toks,
                                                            std::size_t n) {
  std::map<std::vector<std::string>, int> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                    toks.begin() + static_cast<std::ptrdiff_t>(i + n))]++;
  return counts;
}

}  // namespace detail

/// Clipped n-gram overlap F1.
inline RougeScores rouge_n(const std::vector<std::string>& pred, const std::vector<std::string>& ref,
                           std::size_t n) {
  if (n < 1) throw ConfigError("rouge_n: n must be >= 1");
  if (ref.size() < n) throw StageError("rouge_n: reference too short");
  const auto pc = detail::ngram_counts(pred, n);
  const auto rc = detail::ngram_counts(ref, n);
  double overlap = 0;
  for (const auto& [gram, count] : pc) {
    const auto it = rc.find(gram);
    if (it != rc.end()) overlap += std::min(count, it->second);
  }
  const double pred_total = pred.size() >= n ? static_cast<double>(pred.size() - n + 1) : 0.0;
  const double ref_total = static_cast<double>(ref.size() - n + 1);
  return detail::rouge_from_counts(overlap, pred_total, ref_total);
}

inline RougeScores rouge_n(const std::string& pred, const std::string& ref, std::size_t n) {
  return rouge_n(tokenize(pred), tokenize(ref), n);
}

/// Longest-common-subsequence F1.
inline RougeScores rouge_l(const std::vector<std::string>& pred,
                           const std::vector<std::string>& ref) {
  if (ref.empty()) throw StageError("rouge_l: empty reference");
  const std::size_t np = pred.size(), nr = ref.size();
  std::vector<std::size_t> prev(nr + 1, 0), cur(nr + 1, 0);
  for (std::size_t i = 1; i <= np; ++i) {
    for (std::size_t j = 1; j <= nr; ++j)
      cur[j] = pred[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[nr]);
  return detail::rouge_from_counts(lcs, static_cast<double>(np), static_cast<double>(nr));
}

inline RougeScores rouge_l(const std::string& pred, const std::string& ref) {
  return rouge_l(tokenize(pred), tokenize(ref));
}

// --- embeddings -------------------------------------------------------------

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string identity() const = 0;
  virtual int dimensionality() const = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

/// Deterministic offline stand-in: token hashing projected into a fixed
/// dimension with signed buckets. Same text, same vector, any platform.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(int dim = 128, std::uint64_t seed = 7) : dim_(dim), seed_(seed) {
    if (dim < 2) throw ConfigError("embedding dimension must be >= 2");
  }
  std::string identity() const override { return "hashing-" + std::to_string(dim_); }
  int dimensionality() const override { return dim_; }
  std::vector<double> embed(const std::string& text) override {
    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    const auto toks = tokenize(text);
    auto bump = [&](const std::string& feature, double weight) {
      const std::uint64_t h = fnv1a64(feature, seed_);
      const auto idx = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_));
      v[idx] += (h >> 63) ? weight : -weight;
    };
    for (const auto& t : toks) bump("u:" + t, 1.0);
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) bump("b:" + toks[i] + "\x1f" + toks[i + 1], 0.5);
    return v;
  }

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Test double with pinned vectors; unknown text behaves like an outage.
class FixtureEmbeddingProvider final : public EmbeddingProvider {
 public:
  FixtureEmbeddingProvider(int dim, std::map<std::string, std::vector<double>> fixtures)
      : dim_(dim), fixtures_(std::move(fixtures)) {}
  std::string identity() const override { return "fixture"; }
  int dimensionality() const override { return dim_; }
  std::vector<double> embed(const std::string& text) override {
    const auto it = fixtures_.find(text);
    if (it == fixtures_.end()) throw EndpointError("embedding fixture missing for input");
    return it->second;
  }

 private:
  int dim_;
  std::map<std::string, std::vector<double>> fixtures_;
};

inline double embedding_similarity(const std::string& pred, const std::string& ref,
                                   EmbeddingProvider& provider) {
  const auto a = provider.embed(pred);
  const auto b = provider.embed(ref);
  if (a.size() != b.size()) throw StageError("embedding_similarity: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw StageError("embedding_similarity: zero-norm embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// --- reward -----------------------------------------------------------------

struct RewardWeights {
  double w_sim = 0.8;
  double w_fmt = 0.2;
  double sim_sbert_weight = 0.7;
  double sim_rouge_weight = 0.3;

  void validate() const {
    if (w_sim < 0 || w_fmt < 0) throw ConfigError("reward weights must be >= 0");
  }
};

struct RewardBreakdown {
  double similarity = 0;
  double format = 0;
  double total = 0;
};

/// Four equally weighted components: length band, intra-sentence delimiter
/// count, digit presence, location-keyword presence. Empty predictions score
/// a flat zero.
inline double format_reward(const std::string& pred,
                            const std::vector<std::string>& location_keywords = {}) {
  if (pred.empty()) return 0.0;

  const std::size_t len = codepoint_count(pred);
  double length_score = 0.0;
  if (len >= 20 && len <= 50) {
    length_score = 1.0;
  } else if ((len >= 10 && len < 20) || (len > 50 && len <= 70)) {
    length_score = 0.5;
  } else if (len > 100) {
    length_score = -0.5;
  }  // 1-9 and 71-100 both score 0

  std::size_t delimiters = 0;
  bool digit = false;
  for (char32_t c : detail::decode_utf8(pred)) {
    if (c == U',' || c == U';' || c == U':' || c == 0xFF0C || c == 0x3001 || c == 0xFF1B ||
        c == 0xFF1A)
      ++delimiters;
    if ((c >= U'0' && c <= U'9') || (c >= 0xFF10 && c <= 0xFF19)) digit = true;
  }
  const double delim_score = delimiters <= 2 ? 1.0 : (delimiters <= 4 ? 0.5 : 0.0);

  bool location = false;
  for (const auto& kw : location_keywords)
    if (!kw.empty() && pred.find(kw) != std::string::npos) {
      location = true;
      break;
    }

  return (length_score + delim_score + (digit ? 1.0 : 0.0) + (location ? 1.0 : 0.0)) / 4.0;
}

/// Weighted blend of similarity and format, clipped into [-1, 1].
inline double combine_reward(double similarity, double format, const RewardWeights& w = {}) {
  return std::clamp(w.w_sim * similarity + w.w_fmt * format, -1.0, 1.0);
}

inline RewardBreakdown total_reward(const std::string& pred, const std::string& label,
                                    EmbeddingProvider& provider, const RewardWeights& w = {},
                                    const std::vector<std::string>& location_keywords = {}) {
  if (label.empty()) throw StageError("total_reward: empty label");
  w.validate();
  const auto pt = tokenize(pred), lt = tokenize(label);
  auto safe_rouge_n = [&](std::size_t n) {
    return lt.size() >= n ? rouge_n(pt, lt, n).f1 : 0.0;  // short labels score no n-gram credit
  };
  const double rouge_avg = (safe_rouge_n(1) + safe_rouge_n(2) + (lt.empty() ? 0.0 : rouge_l(pt, lt).f1)) / 3.0;
  RewardBreakdown out;
  out.similarity = w.sim_sbert_weight * embedding_similarity(pred, label, provider) +
                   w.sim_rouge_weight * rouge_avg;
  out.format = format_reward(pred, location_keywords);
  out.total = combine_reward(out.similarity, out.format, w);
  return out;
}

// --- agreement --------------------------------------------------------------

struct AgreementStats {
  double accuracy = 0;
  std::optional<double> kappa;  // empty when chance agreement is total
};

inline AgreementStats agreement(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty()) throw StageError("agreement: empty input");
  if (a.size() != b.size()) throw StageError("agreement: length mismatch");
  std::array<double, 3> ca{}, cb{};
  double matches = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] > 2 || b[i] < 0 || b[i] > 2)
      throw StageError("agreement: ratings must be in {0,1,2}");
    ca[static_cast<std::size_t>(a[i])] += 1;
    cb[static_cast<std::size_t>(b[i])] += 1;
    matches += a[i] == b[i];
  }
  const double n = static_cast<double>(a.size());
  AgreementStats s;
  s.accuracy = matches / n;
  double pe = 0;
  for (int k = 0; k < 3; ++k) pe += (ca[static_cast<std::size_t>(k)] / n) * (cb[static_cast<std::size_t>(k)] / n);
  if (pe != 1.0) s.kappa = (s.accuracy - pe) / (1.0 - pe);
  return s;
}

// --- regression -------------------------------------------------------------

struct RegressionFit {
  double slope = 0, intercept = 0;
  double p_value = 1;
  std::size_t n = 0;
};

namespace detail {

// Continued-fraction evaluation of the regularized incomplete beta function
// (modified Lentz), accurate to ~1e-14 for the t-test arguments used here.
inline double inc_beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr int max_iter = 300;
  double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double result = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double dm = m;
    double num = dm * (b - dm) * x / ((a + 2 * dm - 1) * (a + 2 * dm));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    result *= d * c;
    num = -(a + dm) * (a + b + dm) * x / ((a + 2 * dm) * (a + 2 * dm + 1));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    result *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return result;
}

inline double reg_inc_beta(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double lnfront = a * std::log(x) + b * std::log1p(-x) -
                         (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  if (x < (a + 1) / (a + b + 2))
    return std::exp(lnfront) * inc_beta_cf(a, b, x) / a;
  return 1.0 - std::exp(a * std::log(x) + b * std::log1p(-x) -
                        (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b))) *
                   inc_beta_cf(b, a, 1 - x) / b;
}

}  // namespace detail

/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
  if (dof <= 0) throw ConfigError("student_t_two_sided_p: dof must be > 0");
  return detail::reg_inc_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

/// Least squares y = slope*x + intercept with the usual t-test on the slope.
/// A numerically exact fit collapses the test: p = 1 for a flat line, else 0.
inline RegressionFit ols_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw StageError("ols_fit: length mismatch");
  const std::size_t n = xs.size();
  if (n < 3) throw StageError("ols_fit: need at least 3 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0) throw StageError("ols_fit: degenerate x");

  RegressionFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ys[i] - (fit.slope * xs[i] + fit.intercept);
    ssr += r * r;
  }
  const double dof = static_cast<double>(n - 2);
  if (ssr <= 1e-24 * std::max(1.0, syy)) {
    fit.p_value = fit.slope == 0 ? 1.0 : 0.0;
    return fit;
  }
  const double se = std::sqrt(ssr / dof / sxx);
  fit.p_value = student_t_two_sided_p(fit.slope / se, dof);
  return fit;
}

// --- score cards ------------------------------------------------------------

enum class Rubric { summary, suggestion };

inline const std::array<std::string, 5>& metric_names(Rubric r) {
  static const std::array<std::string, 5> summary{
      "Action Information Completeness", "Action Sequence Accuracy", "Object Detail Accuracy",
      "Output Format Standardization", "Generated Intent Reasonableness"};
  static const std::array<std::string, 5> suggestion{"Relevance", "Usefulness", "Clarity",
                                                     "Executability", "Novelty/Surprise"};
  return r == Rubric::summary ? summary : suggestion;
}

inline const char* to_string(Rubric r) { return r == Rubric::summary ? "summary" : "suggestion"; }

struct ScoreCard {
  Rubric rubric = Rubric::summary;
  std::map<std::string, int> scores;

  void validate() const {
    const auto& names = metric_names(rubric);
    if (scores.size() != names.size()) throw StageError("score card: incomplete rubric");
    for (const auto& name : names) {
      const auto it = scores.find(name);
      if (it == scores.end()) throw StageError("score card: missing metric " + name);
      if (it->second < 0 || it->second > 2) throw StageError("score card: score out of range");
    }
  }

  int total() const {
    int t = 0;
    for (const auto& [_, v] : scores) t += v;
    return t;
  }
};

struct ScoreAggregate {
  Rubric rubric = Rubric::summary;
  std::size_t count = 0;
  std::vector<std::string> metrics;
  std::vector<int> sums;
  std::vector<double> normalized;  // mean of score/2
};

inline ScoreAggregate aggregate_scorecards(const std::vector<ScoreCard>& cards) {
  if (cards.empty()) throw StageError("aggregate_scorecards: empty input");
  ScoreAggregate agg;
  agg.rubric = cards.front().rubric;
  agg.count = cards.size();
  for (const auto& name : metric_names(agg.rubric)) {
    agg.metrics.push_back(name);
    agg.sums.push_back(0);
  }
  for (const auto& card : cards) {
    if (card.rubric != agg.rubric) throw StageError("aggregate_scorecards: mixed rubrics");
    card.validate();
    for (std::size_t k = 0; k < agg.metrics.size(); ++k)
      agg.sums[k] += card.scores.at(agg.metrics[k]);
  }
  for (std::size_t k = 0; k < agg.metrics.size(); ++k)
    agg.normalized.push_back(static_cast<double>(agg.sums[k]) /
                             (2.0 * static_cast<double>(agg.count)));
  return agg;
}

}  // namespace fcmir
