#include "trustlapse/kernels.hpp"

namespace trustlapse::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void dot_rows(const double* rows, std::size_t stride, std::size_t count, const double* q,
              std::size_t n, double* out) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot(rows + r * stride, q, n);
}

}  // namespace trustlapse::kernels::scalar
