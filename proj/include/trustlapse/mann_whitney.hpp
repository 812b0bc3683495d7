#pragma once

#include <cstddef>
#include <span>

namespace trustlapse {

struct MannWhitneyResult {
  // Pairs (a_i, b_j) with b_j > a_i, ties counted one half. u_stat / (n*m)
  // is therefore the AUROC of b (positives) against a (negatives).
  double u_stat = 0.0;
  // Tie-corrected normal approximation with +/-0.5 continuity correction;
  // positive when b tends to exceed a.
  double z = 0.0;
  double p_value = 1.0;  // two-sided
  bool exact = false;    // p from the exact permutation distribution

  friend bool operator==(const MannWhitneyResult&, const MannWhitneyResult&) = default;
};

// Exact p-values are used when the smaller sample has at most this many
// values (and the pooled size is at most kExactMaxTotal); otherwise the
// normal tail of z.
inline constexpr std::size_t kExactMaxSmall = 8;
inline constexpr std::size_t kExactMaxTotal = 200;

MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b);

// |z| at which the two-sided normal tail equals alpha.
double two_sided_critical_z(double alpha);

}  // namespace trustlapse
