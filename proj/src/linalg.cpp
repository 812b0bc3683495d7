#include "trustlapse/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "trustlapse/kernels.hpp"

namespace trustlapse {

SquareMatrix SquareMatrix::identity(std::size_t n, double scale) {
  SquareMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = scale;
  return m;
}

std::optional<SquareMatrix> cholesky(const SquareMatrix& a) {
  const std::size_t n = a.size();
  const auto& k = kernels::ops();
  SquareMatrix l(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = l.row(i).data();
    for (std::size_t j = 0; j <= i; ++j) {
      const double s = a(i, j) - k.dot(li, l.row(j).data(), j);
      if (i == j) {
        if (!(s > 0.0) || !std::isfinite(s)) return std::nullopt;
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

void forward_substitute(const SquareMatrix& lower, std::span<double> b) {
  const auto& k = kernels::ops();
  for (std::size_t i = 0; i < lower.size(); ++i) {
    b[i] = (b[i] - k.dot(lower.row(i).data(), b.data(), i)) / lower(i, i);
  }
}

void back_substitute_transposed(const SquareMatrix& lower, std::span<double> y) {
  const std::size_t n = lower.size();
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= lower(j, ii) * y[j];
    y[ii] = s / lower(ii, ii);
  }
}

std::vector<double> cholesky_solve(const SquareMatrix& lower, std::span<const double> b) {
  std::vector<double> x(b.begin(), b.end());
  forward_substitute(lower, x);
  back_substitute_transposed(lower, x);
  return x;
}

double quadratic_form(const SquareMatrix& lower, std::span<const double> diff,
                      std::span<double> scratch) {
  std::copy(diff.begin(), diff.end(), scratch.begin());
  forward_substitute(lower, scratch.first(diff.size()));
  return kernels::dot(scratch.first(diff.size()), scratch.first(diff.size()));
}

}  // namespace trustlapse
