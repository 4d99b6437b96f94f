#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "fcmir/evalkit.hpp"

namespace testutil {

inline std::filesystem::path fresh_dir(const std::string& label) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() / "fcmir_tests" /
                   (label + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// splitmix64: tiny deterministic generator so expectations never depend on
// library distribution internals.
struct Splitmix {
  std::uint64_t state;
  explicit Splitmix(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  double gaussian() {
    double u1 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
};

// Deliberately naive ROUGE reimplementation: O(n*m) scan counting instead of
// hash maps, full-table LCS instead of rolling rows.
struct NaiveRouge {
  double precision = 0, recall = 0, f1 = 0;
};

inline NaiveRouge naive_from_counts(double overlap, double pred_total, double ref_total) {
  NaiveRouge r;
  r.precision = pred_total > 0 ? overlap / pred_total : 0.0;
  r.recall = ref_total > 0 ? overlap / ref_total : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline NaiveRouge naive_rouge_n(const std::vector<std::string>& pred,
                                const std::vector<std::string>& ref, std::size_t n) {
  auto grams = [n](const std::vector<std::string>& toks) {
    std::vector<std::vector<std::string>> out;
    if (toks.size() >= n)
      for (std::size_t i = 0; i + n <= toks.size(); ++i)
        out.emplace_back(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n));
    return out;
  };
  const auto pg = grams(pred), rg = grams(ref);
  std::vector<bool> used(rg.size(), false);
  double overlap = 0;
  for (const auto& g : pg)
    for (std::size_t j = 0; j < rg.size(); ++j)
      if (!used[j] && rg[j] == g) {
        used[j] = true;
        overlap += 1;
        break;
      }
  return naive_from_counts(overlap, static_cast<double>(pg.size()), static_cast<double>(rg.size()));
}

inline NaiveRouge naive_rouge_l(const std::vector<std::string>& pred,
                                const std::vector<std::string>& ref) {
  const std::size_t n = pred.size(), m = ref.size();
  std::vector<std::vector<std::size_t>> dp(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      dp[i][j] = pred[i - 1] == ref[j - 1] ? dp[i - 1][j - 1] + 1
                                           : std::max(dp[i - 1][j], dp[i][j - 1]);
  return naive_from_counts(static_cast<double>(dp[n][m]), static_cast<double>(n),
                           static_cast<double>(m));
}

// Mixed CJK/Latin text for the metric property suites.
inline std::string random_text(Splitmix& rng, int max_tokens) {
  static const std::vector<std::string> vocab{
      "open",  "app",   "search", "tap",   "scroll", "buy",  "2024", "page",
      "\xe6\x89\x93",  // CJK
      "\xe5\xbc\x80",  // CJK
      "\xe6\x90\x9c",  // CJK
      "\xe7\xb4\xa2",  // CJK
  };
  std::string out;
  const int n = rng.below(max_tokens + 1);
  for (int i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += vocab[static_cast<std::size_t>(rng.below(static_cast<int>(vocab.size())))];
  }
  return out;
}

}  // namespace testutil
