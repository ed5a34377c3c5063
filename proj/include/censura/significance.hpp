#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace censura {

enum class Alternative {
  two_sided,
  less,     ///< a tends to be smaller than b
  greater,  ///< a tends to be larger than b
};

std::string_view to_string(Alternative a) noexcept;
Alternative alternative_from_string(std::string_view s);

struct MannWhitneyResult {
  double u = 0.0;  ///< U statistic of the first sample
  double p_value = 1.0;
  bool exact = false;
};

/// Mann-Whitney-Wilcoxon rank-sum test with midranks. The exact null
/// distribution is used when n_a + n_b <= 16 and there are no ties; otherwise
/// the normal approximation with tie and continuity corrections.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alternative = Alternative::two_sided);

enum class Verdict { censored_better, observed_better, inconclusive };

std::string_view to_string(Verdict v) noexcept;

struct AblationResult {
  double delta = 0.0;  ///< mean(observed) - mean(censored)
  double p_value = 1.0;
  Verdict verdict = Verdict::inconclusive;
};

/// Delta NLL between the observed-only and the censored-aware arm. With
/// one_sided set, the test runs in the direction of the sign of delta.
AblationResult ablation_delta_nll(std::span<const double> observed_scores, std::span<const double> censored_scores,
                                  bool one_sided = false, double alpha = 0.05);

struct ModelScores {
  std::string name;
  std::vector<double> scores;
};

struct RankedModel {
  std::string name;
  double mean = 0.0;
  double p_value = 1.0;  ///< one-sided test of best against this model; 1 for the best itself
  bool starred = false;
};

/// Ranks by mean score. The best model is starred, as is every model that
/// the one-sided test cannot call worse than the best at level alpha.
std::vector<RankedModel> compare_models(std::span<const ModelScores> models, bool lower_is_better = true,
                                        double alpha = 0.05);

}  // namespace censura
