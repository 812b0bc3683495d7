#include "trustlapse/mann_whitney.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "trustlapse/error.hpp"

namespace trustlapse {

namespace {

// Two-sided exact p under random assignment of the pooled (doubled, tied)
// ranks: 2 * min(lower tail, upper tail) of the rank sum of `subset`.
double exact_p(const std::vector<long>& doubled_ranks, std::size_t subset, long observed) {
  const long max_sum = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0L);
  // counts[j][s]: subsets of size j with doubled rank sum s
  std::vector<std::vector<double>> counts(subset + 1,
                                          std::vector<double>(static_cast<std::size_t>(max_sum) + 1));
  counts[0][0] = 1.0;
  std::size_t seen = 0;
  for (long r : doubled_ranks) {
    ++seen;
    for (std::size_t j = std::min(subset, seen); j >= 1; --j) {
      auto& dst = counts[j];
      const auto& src = counts[j - 1];
      for (long s = max_sum; s >= r; --s) dst[static_cast<std::size_t>(s)] += src[static_cast<std::size_t>(s - r)];
    }
  }
  const auto& dist = counts[subset];
  double total = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  for (long s = 0; s <= max_sum; ++s) {
    const double c = dist[static_cast<std::size_t>(s)];
    total += c;
    if (s <= observed) lower += c;
    if (s >= observed) upper += c;
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

}  // namespace

MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n == 0 || m == 0) fail(ErrorCode::EmptyWindow, "Mann-Whitney needs two non-empty samples");

  struct Obs {
    double value;
    bool from_b;
  };
  std::vector<Obs> pooled;
  pooled.reserve(n + m);
  for (double x : a) pooled.push_back({x, false});
  for (double x : b) pooled.push_back({x, true});
  for (const auto& o : pooled) {
    if (!std::isfinite(o.value)) fail(ErrorCode::NonFiniteInput, "Mann-Whitney input not finite");
  }
  std::sort(pooled.begin(), pooled.end(),
            [](const Obs& x, const Obs& y) { return x.value < y.value; });

  const std::size_t total = n + m;
  std::vector<long> doubled(total);
  long rank_sum_b2 = 0;  // doubled
  double tie_term = 0.0;
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j < total && pooled[j].value == pooled[i].value) ++j;
    const long mid2 = static_cast<long>(i + 1 + j);  // 2 * midrank of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      doubled[k] = mid2;
      if (pooled[k].from_b) rank_sum_b2 += mid2;
    }
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }

  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  const double dN = static_cast<double>(total);
  MannWhitneyResult r;
  r.u_stat = static_cast<double>(rank_sum_b2) / 2.0 - dm * (dm + 1.0) / 2.0;

  const double var = dn * dm / 12.0 * ((dN + 1.0) - tie_term / (dN * (dN - 1.0)));
  if (!(var > 0.0)) {
    r.z = 0.0;
    r.p_value = 1.0;
    return r;
  }
  const double diff = r.u_stat - dn * dm / 2.0;
  const double correction = diff > 0.0 ? -0.5 : (diff < 0.0 ? 0.5 : 0.0);
  r.z = (diff + correction) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(std::fabs(r.z) / std::sqrt(2.0)));

  if (std::min(n, m) <= kExactMaxSmall && total <= kExactMaxTotal) {
    // W_a + W_b is fixed, so either sample's tails give the same two-sided p.
    const long all2 = std::accumulate(doubled.begin(), doubled.end(), 0L);
    r.p_value = m <= n ? exact_p(doubled, m, rank_sum_b2) : exact_p(doubled, n, all2 - rank_sum_b2);
    r.exact = true;
  }
  return r;
}

double two_sided_critical_z(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidConfig, "alpha must be in (0, 1)");
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace trustlapse
