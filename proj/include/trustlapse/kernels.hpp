#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense double-precision inner loops. Each kernel has a scalar reference
// implementation and an AVX2+FMA variant; the variant is chosen once at
// startup from CPUID (override with TRUSTLAPSE_SIMD=scalar).
namespace trustlapse::kernels {

enum class Backend { Scalar, Avx2 };

struct Ops {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[r] = dot(rows + r*stride, q, n) for r in [0, count)
  void (*dot_rows)(const double* rows, std::size_t stride, std::size_t count,
                   const double* q, std::size_t n, double* out);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void dot_rows(const double* rows, std::size_t stride, std::size_t count, const double* q,
              std::size_t n, double* out);
}  // namespace scalar

#if defined(TRUSTLAPSE_HAVE_AVX2)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void dot_rows(const double* rows, std::size_t stride, std::size_t count, const double* q,
              std::size_t n, double* out);
}  // namespace avx2
#endif

bool backend_supported(Backend backend) noexcept;
Backend active_backend() noexcept;
// Returns false (and changes nothing) if the CPU lacks the backend.
bool set_backend(Backend backend) noexcept;
const Ops& ops() noexcept;
std::string_view backend_name(Backend backend) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return ops().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  ops().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace trustlapse::kernels
