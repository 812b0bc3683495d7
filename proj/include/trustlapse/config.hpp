#pragma once

#include <cstddef>
#include <cstdint>

namespace trustlapse {

struct MonitorConfig {
  std::size_t w_a = 25;        // reference window size
  std::size_t w_b = 25;        // sliding window size
  double alpha = 0.05;         // significance level of the windowed test
  double coreset_frac = 0.02;  // fraction sampled from every class
  double epsilon = 1e-6;       // covariance ridge, relative to trace(cov)/d
  std::uint64_t seed = 0;

  friend bool operator==(const MonitorConfig&, const MonitorConfig&) = default;
};

// Throws InvalidConfig when any invariant is violated.
void validate(const MonitorConfig& cfg);

}  // namespace trustlapse
