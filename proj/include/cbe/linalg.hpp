#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cbe {

/// Dense row-major matrix of doubles. Vectors are 1xN matrices.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double l2_norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

/// dot / sqrt(|a|^2 |b|^2): exactly 1.0 for bitwise-identical nonzero inputs.
/// Returns 0 when either side has zero norm.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double denom = std::sqrt(squared_norm(a) * squared_norm(b));
  if (denom == 0.0) return 0.0;
  return dot(a, b) / denom;
}

inline std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

/// Rounds every entry to the nearest 32-bit float.
inline void round_to_float(std::span<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace cbe
