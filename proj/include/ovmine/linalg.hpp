// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ovmine/error.hpp"

namespace ovmine {

using Vector = std::vector<double>;

inline void check_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DataError(std::string("dimension mismatch in ") + what + ": " +
                    std::to_string(a) + " vs " + std::to_string(b));
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double squared_norm(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a) acc += v * v;
  return acc;
}

inline double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

// Cosine similarity clamped to [-1, 1]. A zero vector has cosine 0 with
// everything. The denominator is sqrt(|a|^2 |b|^2) so that cosine(u, u) is
// exactly 1 for any non-zero u.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a.size(), b.size(), "cosine");
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = dot(a, b) / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

// Unit-length copy; the zero vector is returned unchanged.
inline Vector normalized(std::span<const double> a) {
  Vector out(a.begin(), a.end());
  const double n = norm(a);
  if (n == 0.0) return out;
  for (double& v : out) v /= n;
  return out;
}

// Numerically stable softmax.
inline Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

// Index of the largest element; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DataError("matrix data length does not match " + std::to_string(rows_) + "x" +
                      std::to_string(cols_));
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  // y = M x
  Vector apply(std::span<const double> x) const {
    check_same_dim(cols_, x.size(), "matrix-vector product");
    Vector y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      double acc = 0.0;
      const double* m = data_.data() + r * cols_;
      for (std::size_t c = 0; c < cols_; ++c) acc += m[c] * x[c];
      y[r] = acc;
    }
    return y;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

}  // namespace ovmine
