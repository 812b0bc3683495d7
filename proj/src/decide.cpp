#include <algorithm>
#include <cmath>
#include <numeric>

#include "trustlapse/error.hpp"
#include "trustlapse/sequential.hpp"

namespace trustlapse {

namespace {

constexpr std::size_t kMaxLloydIterations = 100;

// Globally optimal 2-means split of sorted values: index k such that
// [0, k) and [k, n) minimise the within-cluster sum of squares. Only splits
// between distinct values are eligible; ties resolve to the lowest k.
std::size_t optimal_split(const std::vector<double>& sorted) {
  const std::size_t n = sorted.size();
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  std::vector<double> sum(n + 1, 0.0);
  std::vector<double> sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sorted[i] - mean;
    sum[i + 1] = sum[i] + x;
    sq[i + 1] = sq[i] + x * x;
  }
  std::size_t best_k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < n; ++k) {
    if (!(sorted[k - 1] < sorted[k])) continue;
    const double nl = static_cast<double>(k);
    const double nr = static_cast<double>(n - k);
    const double left = sq[k] - sum[k] * sum[k] / nl;
    const double right = (sq[n] - sq[k]) - (sum[n] - sum[k]) * (sum[n] - sum[k]) / nr;
    const double cost = left + right;
    if (cost < best) {
      best = cost;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace

Decision decide(std::span<const double> scores) {
  Decision d;
  if (scores.empty()) return d;
  for (double x : scores) {
    if (!std::isfinite(x)) fail(ErrorCode::NonFiniteInput, "decision scores must be finite");
  }
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  if (*lo_it == *hi_it) {
    d.actions.assign(scores.size(), Action::Trust);
    d.threshold = *lo_it;
    d.degenerate = true;
    return d;
  }

  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = optimal_split(sorted);
  double c0 = std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
              static_cast<double>(k);
  double c1 = std::accumulate(sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(), 0.0) /
              static_cast<double>(sorted.size() - k);

  // Lloyd refinement; from the optimal split this settles immediately.
  std::vector<bool> flag(scores.size());
  for (std::size_t it = 0; it < kMaxLloydIterations; ++it) {
    d.iterations = it + 1;
    bool changed = false;
    double s0 = 0.0, s1 = 0.0;
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool f = std::fabs(scores[i] - c1) < std::fabs(scores[i] - c0);
      if (it == 0 || f != flag[i]) changed = true;
      flag[i] = f;
      if (f) {
        s1 += scores[i];
        ++n1;
      } else {
        s0 += scores[i];
        ++n0;
      }
    }
    if (!changed || n0 == 0 || n1 == 0) break;
    c0 = s0 / static_cast<double>(n0);
    c1 = s1 / static_cast<double>(n1);
  }

  d.threshold = 0.5 * (c0 + c1);
  d.actions.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) d.actions[i] = flag[i] ? Action::Flag : Action::Trust;
  return d;
}

Decision decide(std::span<const SequentialScore> history) {
  std::vector<double> values;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].action == Action::Warmup) continue;
    values.push_back(history[i].s_mis);
    where.push_back(i);
  }
  Decision inner = decide(values);
  Decision out;
  out.threshold = inner.threshold;
  out.degenerate = inner.degenerate;
  out.iterations = inner.iterations;
  out.actions.assign(history.size(), Action::Trust);
  for (std::size_t j = 0; j < where.size(); ++j) out.actions[where[j]] = inner.actions[j];
  return out;
}

}  // namespace trustlapse
