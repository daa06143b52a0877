#include "hypad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hypad {

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: one label per score required");
  for (double s : scores) {
    if (std::isnan(s)) throw UndefinedMetricError("auroc: NaN score");
  }
  const auto ranks = midranks(scores);
  double positives = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      positives += 1.0;
      rank_sum += ranks[i];
    }
  }
  const double negatives = static_cast<double>(labels.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) throw UndefinedMetricError("auroc: both classes must be present");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

namespace {

// Two-sided p from the exact null distribution of the rank sum of `n` values
// drawn without replacement from `ranks`. Ranks are midranks, so doubled
// ranks are integers.
double exact_p(const std::vector<double>& ranks, std::size_t n, double rank_sum) {
  std::vector<long> doubled(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) doubled[i] = std::lround(2.0 * ranks[i]);
  const long total = std::accumulate(doubled.begin(), doubled.end(), 0L);
  // count[k][s]: number of k-subsets with doubled rank sum s
  std::vector<std::vector<long double>> count(n + 1, std::vector<long double>(total + 1, 0.0L));
  count[0][0] = 1.0L;
  for (long r : doubled) {
    for (std::size_t k = n; k >= 1; --k) {
      for (long s = total; s >= r; --s) count[k][s] += count[k - 1][s - r];
    }
  }
  const long double all = std::accumulate(count[n].begin(), count[n].end(), 0.0L);
  const double mean2 = static_cast<double>(n) * static_cast<double>(ranks.size() + 1);
  const double observed = std::abs(2.0 * rank_sum - mean2);
  long double extreme = 0.0L;
  for (long s = 0; s <= total; ++s) {
    if (count[n][s] != 0.0L && std::abs(static_cast<double>(s) - mean2) >= observed - 1e-9) extreme += count[n][s];
  }
  return std::min(1.0, static_cast<double>(extreme / all));
}

}  // namespace

MannWhitney mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mann_whitney_u: both samples must be nonempty");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = midranks(pooled);
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  const double rank_sum = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0);

  MannWhitney out;
  out.u = rank_sum - n * (n + 1.0) / 2.0;
  if (a.size() * b.size() <= kExactLimit) {
    out.exact = true;
    out.p_value = exact_p(ranks, a.size(), rank_sum);
    return out;
  }

  const double total = n + m;
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double variance = n * m / 12.0 * ((total + 1.0) - ties / (total * (total - 1.0)));
  if (variance <= 0.0) return out;
  const double z = std::max(0.0, std::abs(out.u - n * m / 2.0) - 0.5) / std::sqrt(variance);
  out.p_value = std::erfc(z / std::sqrt(2.0));
  return out;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  Summary s;
  s.count = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  // keep min <= mean <= max under rounding
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

}  // namespace hypad
