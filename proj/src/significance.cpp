#include "censura/significance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "censura/numerics.hpp"

namespace censura {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// counts[u] = number of arrangements of m and n items with rank-sum statistic u.
std::vector<double> u_distribution(std::size_t m, std::size_t n) {
  // Rows over n, rebuilt for every m, following f(m,n,u) = f(m-1,n,u-n) + f(m,n-1,u).
  std::vector<std::vector<double>> prev(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = {1.0};
  for (std::size_t i = 1; i <= m; ++i) {
    std::vector<std::vector<double>> cur(n + 1);
    cur[0] = {1.0};
    for (std::size_t j = 1; j <= n; ++j) {
      std::vector<double> row(i * j + 1, 0.0);
      for (std::size_t u = 0; u < prev[j].size(); ++u) row[u + j] += prev[j][u];
      for (std::size_t u = 0; u < cur[j - 1].size(); ++u) row[u] += cur[j - 1][u];
      cur[j] = std::move(row);
    }
    prev = std::move(cur);
  }
  return prev[n];
}

}  // namespace

std::string_view to_string(Alternative a) noexcept {
  switch (a) {
    case Alternative::two_sided: return "two_sided";
    case Alternative::less: return "less";
    case Alternative::greater: return "greater";
  }
  return "unknown";
}

Alternative alternative_from_string(std::string_view s) {
  if (s == "two_sided" || s == "two-sided") return Alternative::two_sided;
  if (s == "less") return Alternative::less;
  if (s == "greater") return Alternative::greater;
  throw std::invalid_argument("unknown alternative: " + std::string(s));
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b, Alternative alternative) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mann_whitney_u: both samples must be non-empty");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t n = na + nb;

  std::vector<std::pair<double, std::size_t>> pooled;
  pooled.reserve(n);
  for (std::size_t i = 0; i < na; ++i) pooled.emplace_back(a[i], i);
  for (std::size_t i = 0; i < nb; ++i) pooled.emplace_back(b[i], na + i);
  std::sort(pooled.begin(), pooled.end());

  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    const auto t = static_cast<double>(j - i);
    if (j - i > 1) {
      ties = true;
      tie_term += t * t * t - t;
    }
    for (std::size_t k = i; k < j; ++k)
      if (pooled[k].second < na) rank_sum_a += midrank;
    i = j;
  }

  MannWhitneyResult r;
  r.u = rank_sum_a - static_cast<double>(na * (na + 1)) / 2.0;
  const double mu = static_cast<double>(na * nb) / 2.0;

  if (n <= 16 && !ties) {
    r.exact = true;
    const std::vector<double> counts = u_distribution(na, nb);
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto u = static_cast<std::size_t>(std::llround(r.u));
    double below = 0.0;  // P(U <= u)
    double above = 0.0;  // P(U >= u)
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (k <= u) below += counts[k];
      if (k >= u) above += counts[k];
    }
    below /= total;
    above /= total;
    switch (alternative) {
      case Alternative::less: r.p_value = below; break;
      case Alternative::greater: r.p_value = above; break;
      case Alternative::two_sided: r.p_value = std::min(1.0, 2.0 * std::min(below, above)); break;
    }
    return r;
  }

  const auto dn = static_cast<double>(n);
  const double variance =
      static_cast<double>(na * nb) / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (!(variance > 0.0)) {
    r.p_value = 1.0;
    return r;
  }
  const double sigma = std::sqrt(variance);
  switch (alternative) {
    case Alternative::less: r.p_value = std_normal_cdf((r.u - mu + 0.5) / sigma); break;
    case Alternative::greater: r.p_value = std_normal_cdf(-(r.u - mu - 0.5) / sigma); break;
    case Alternative::two_sided: {
      const double z = (std::abs(r.u - mu) - 0.5) / sigma;
      r.p_value = std::min(1.0, 2.0 * std_normal_cdf(-z));
      break;
    }
  }
  return r;
}

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::censored_better: return "censored_better";
    case Verdict::observed_better: return "observed_better";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

AblationResult ablation_delta_nll(std::span<const double> observed_scores, std::span<const double> censored_scores,
                                  bool one_sided, double alpha) {
  if (observed_scores.size() < 2 || censored_scores.size() < 2)
    throw std::invalid_argument("ablation_delta_nll needs at least 2 repeats per arm");
  AblationResult r;
  r.delta = mean_of(observed_scores) - mean_of(censored_scores);
  Alternative alt = Alternative::two_sided;
  if (one_sided) alt = r.delta >= 0.0 ? Alternative::greater : Alternative::less;
  r.p_value = mann_whitney_u(observed_scores, censored_scores, alt).p_value;
  if (r.p_value < alpha && r.delta > 0.0) r.verdict = Verdict::censored_better;
  else if (r.p_value < alpha && r.delta < 0.0) r.verdict = Verdict::observed_better;
  return r;
}

std::vector<RankedModel> compare_models(std::span<const ModelScores> models, bool lower_is_better, double alpha) {
  if (models.empty()) throw std::invalid_argument("compare_models: no models");
  std::vector<RankedModel> ranked;
  for (const auto& m : models) {
    if (m.scores.empty()) throw std::invalid_argument("compare_models: model " + m.name + " has no scores");
    ranked.push_back({m.name, mean_of(m.scores), 1.0, false});
  }
  std::vector<std::size_t> order(models.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return lower_is_better ? ranked[x].mean < ranked[y].mean : ranked[x].mean > ranked[y].mean;
  });

  const auto& best = models[order.front()].scores;
  std::vector<RankedModel> out;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    RankedModel r = ranked[order[rank]];
    if (rank == 0) {
      r.starred = true;
    } else {
      const Alternative alt = lower_is_better ? Alternative::less : Alternative::greater;
      r.p_value = mann_whitney_u(best, models[order[rank]].scores, alt).p_value;
      r.starred = !(r.p_value < alpha);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace censura
