#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace trustlapse {

/// Row-major dense square matrix.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  static SquareMatrix identity(std::size_t n, double scale = 1.0);

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * n_, n_};
  }
  [[nodiscard]] std::span<double> row(std::size_t i) { return {data_.data() + i * n_, n_}; }
  [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// Lower-triangular L with L L^T = a, or nullopt if a is not numerically
// positive definite. Only the lower triangle of `a` is read.
std::optional<SquareMatrix> cholesky(const SquareMatrix& a);

// Solves L y = b in place (b becomes y).
void forward_substitute(const SquareMatrix& lower, std::span<double> b);

// Solves L^T x = y in place.
void back_substitute_transposed(const SquareMatrix& lower, std::span<double> y);

// Solves (L L^T) x = b.
std::vector<double> cholesky_solve(const SquareMatrix& lower, std::span<const double> b);

// diff^T (L L^T)^{-1} diff = |L^{-1} diff|^2. `scratch` must hold n doubles.
double quadratic_form(const SquareMatrix& lower, std::span<const double> diff,
                      std::span<double> scratch);

}  // namespace trustlapse
