// Rank statistics: AUROC with midranks and the Mann-Whitney U test.

#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace hypad {

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Midranks (1-based) of `values`; tied values share the mean of their ranks.
std::vector<double> midranks(std::span<const double> values);

/// Area under the ROC curve for scores where a higher score means label 1.
/// Throws UndefinedMetricError unless both labels are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct MannWhitney {
  double u = 0.0;        // statistic of the first sample
  double p_value = 1.0;  // two-sided
  bool exact = false;
};

/// Exact permutation distribution when n * m <= kExactLimit, otherwise the
/// normal approximation with tie and continuity corrections.
inline constexpr std::size_t kExactLimit = 400;
MannWhitney mann_whitney_u(std::span<const double> a, std::span<const double> b);

struct Summary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

Summary summarize(std::span<const double> values);

}  // namespace hypad
