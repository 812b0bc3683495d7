#include <atomic>
#include <cstdlib>
#include <string_view>

#include "trustlapse/kernels.hpp"

namespace trustlapse::kernels {

namespace {

constexpr Ops kScalarOps{&scalar::dot, &scalar::axpy, &scalar::dot_rows};
#if defined(TRUSTLAPSE_HAVE_AVX2)
constexpr Ops kAvx2Ops{&avx2::dot, &avx2::axpy, &avx2::dot_rows};
#endif

bool cpu_has_avx2() noexcept {
#if defined(TRUSTLAPSE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("TRUSTLAPSE_SIMD"); env != nullptr) {
    if (std::string_view(env) == "scalar") return Backend::Scalar;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

bool backend_supported(Backend backend) noexcept {
  return backend == Backend::Scalar || cpu_has_avx2();
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

bool set_backend(Backend backend) noexcept {
  if (!backend_supported(backend)) return false;
  current().store(backend, std::memory_order_relaxed);
  return true;
}

const Ops& ops() noexcept {
#if defined(TRUSTLAPSE_HAVE_AVX2)
  if (active_backend() == Backend::Avx2) return kAvx2Ops;
#endif
  return kScalarOps;
}

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

}  // namespace trustlapse::kernels
