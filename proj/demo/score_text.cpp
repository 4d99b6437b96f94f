// Scores a predicted intent against a reference with the text metrics and
// fits the quality-vs-utility regression on a toy table.

#include <cstdio>
#include <vector>

#include "fcmir/evalkit.hpp"

int main() {
  using namespace fcmir;

  const std::string prediction =
      "Searched the transit app for routes to the central station, then compared departure times.";
  const std::string reference =
      "The user looked up connections to the central station in the transit app and compared "
      "when the trains leave.";

  std::printf("ROUGE-1 F1: %.4f\n", rouge_n(prediction, reference, 1).f1);
  std::printf("ROUGE-2 F1: %.4f\n", rouge_n(prediction, reference, 2).f1);
  std::printf("ROUGE-L F1: %.4f\n", rouge_l(prediction, reference).f1);

  HashingEmbeddingProvider provider;
  std::printf("embedding cosine: %.4f\n", embedding_similarity(prediction, reference, provider));

  const RewardBreakdown reward = total_reward(prediction, reference, provider);
  std::printf("reward: similarity %.4f, format %.2f, total %.4f\n", reward.similarity,
              reward.format, reward.total);

  const std::vector<double> quality{1.0, 1.2, 1.5, 1.7, 2.0};
  std::vector<double> utility;
  for (double q : quality) utility.push_back(0.5 * q + 3.4);
  const RegressionFit fit = ols_fit(quality, utility);
  std::printf("fit: utility = %.3f * quality + %.3f (p = %.3g)\n", fit.slope, fit.intercept,
              fit.p_value);
  return 0;
}
