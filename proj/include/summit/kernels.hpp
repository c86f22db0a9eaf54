#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include "summit/tensor.hpp"

namespace summit {

/// Additive offset applied to attention scores whose key is missing.
inline constexpr double kMaskOffset = -1e9;

namespace kernels {

// All matrix kernels accumulate into `out` (out += ...). Shapes are taken
// from the arguments; callers validate.

// out[r x c] += a[r x k] * b[k x c]
template <typename T>
void matmul_acc(const T* a, const T* b, T* out, std::size_t r, std::size_t k,
                std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    T* o = out + i * c;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += av * bp[j];
    }
  }
}

// out[r x c] += a[r x k] * b[c x k]^T
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* out, std::size_t r, std::size_t k,
                   std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    const T* ai = a + i * k;
    T* o = out + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      const T* bj = b + j * k;
      T s{0};
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      o[j] += s;
    }
  }
}

// out[k x c] += a[r x k]^T * b[r x c]
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* out, std::size_t r, std::size_t k,
                   std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      T* o = out + p * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += av * bi[j];
    }
  }
}

// Numerically stabilised softmax of one row, in place.
template <typename T>
void softmax_row(T* x, std::size_t n) {
  T mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  T sum{0};
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = std::exp(x[j] - mx);
    sum += x[j];
  }
  const T inv = T{1} / sum;
  for (std::size_t j = 0; j < n; ++j) x[j] *= inv;
}

template <typename T>
T gelu(T x) {
  return T{0.5} * x * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
}

// d/dx [x * Phi(x)] = Phi(x) + x * phi(x)
template <typename T>
T gelu_grad(T x) {
  const T cdf = T{0.5} * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T{-0.5} * x * x) / std::sqrt(T{2} * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace kernels

inline void require_finite_input(bool finite, const char* op) {
  if (!finite) throw NumericError(std::string(op) + ": non-finite input");
}

/// Row-wise softmax of a rank-2 tensor.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& m) {
  if (m.rank() != 2) throw ShapeError("softmax_rows expects a rank-2 tensor, got " + shape_string(m.shape()));
  require_finite_input(m.all_finite(), "softmax_rows");
  Tensor<T> out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) kernels::softmax_row(out.row(r), out.cols());
  return out;
}

/// Elementwise exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  require_finite_input(x.all_finite(), "gelu");
  Tensor<T> out = x;
  for (auto& v : out.values()) v = kernels::gelu(v);
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  auto out = Tensor<T>::matrix(a.rows(), b.cols());
  kernels::matmul_acc(a.values().data(), b.values().data(), out.values().data(), a.rows(), a.cols(), b.cols());
  return out;
}

}  // namespace summit
