#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "mtsf/mat.hpp"

// OpenMP kernels for the hot inner loops. Every parallel loop writes disjoint
// output rows and keeps reductions serial inside the row, so results are
// bit-identical for any thread count. The serial counterparts used as test
// oracles live in reference.hpp.
namespace mtsf::kern {

inline constexpr int64_t kParallelCutoff = 1 << 15;  // flops below this run serial

// C = A * B            (MxK) * (KxN)
template <typename T>
void matmul(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k || c.rows() != m || c.cols() != n)
    throw std::invalid_argument("matmul: shape mismatch");
  const int64_t work = static_cast<int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    const T* ai = a.row(i);
    T* ci = c.row(i);
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    for (int p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b.row(p);
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C = A * B^T          (MxK) * (NxK)
template <typename T>
void matmul_nt(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  const int m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k || c.rows() != m || c.cols() != n)
    throw std::invalid_argument("matmul_nt: shape mismatch");
  const int64_t work = static_cast<int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    const T* ai = a.row(i);
    T* ci = c.row(i);
    for (int j = 0; j < n; ++j) {
      const T* bj = b.row(j);
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

// C = A^T * B          (KxM) * (KxN); accumulate=true adds into C
template <typename T>
void matmul_tn(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate = false) {
  const int k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k || c.rows() != m || c.cols() != n)
    throw std::invalid_argument("matmul_tn: shape mismatch");
  const int64_t work = static_cast<int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    T* ci = c.row(i);
    if (!accumulate)
      for (int j = 0; j < n; ++j) ci[j] = T(0);
    for (int p = 0; p < k; ++p) {
      const T av = a(p, i);
      const T* bp = b.row(p);
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// row-wise softmax with max-shift; in place
template <typename T>
void softmax_rows(Mat<T>& x) {
  const int m = x.rows(), n = x.cols();
  const int64_t work = static_cast<int64_t>(m) * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    T* xi = x.row(i);
    T mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    T sum = T(0);
    for (int j = 0; j < n; ++j) {
      xi[j] = std::exp(xi[j] - mx);
      sum += xi[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < n; ++j) xi[j] *= inv;
  }
}

// y += x
template <typename T>
void add_inplace(Mat<T>& y, const Mat<T>& x) {
  if (!y.same_shape(x)) throw std::invalid_argument("add_inplace: shape mismatch");
  const int64_t n = static_cast<int64_t>(y.size());
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) y.data()[i] += x.data()[i];
}

// y = x * s
template <typename T>
void scale(Mat<T>& y, T s) {
  const int64_t n = static_cast<int64_t>(y.size());
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) y.data()[i] *= s;
}

// adds row vector b (1 x N) to every row of y (M x N)
template <typename T>
void add_row_bias(Mat<T>& y, const Mat<T>& b) {
  if (b.cols() != y.cols()) throw std::invalid_argument("add_row_bias: width mismatch");
  const int m = y.rows(), n = y.cols();
  const int64_t work = static_cast<int64_t>(m) * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    T* yi = y.row(i);
    const T* bb = b.row(0);
    for (int j = 0; j < n; ++j) yi[j] += bb[j];
  }
}

// out[j] = sum_i x(i, j); accumulates into out (1 x N)
template <typename T>
void colsum_accum(Mat<T>& out, const Mat<T>& x) {
  if (out.cols() != x.cols()) throw std::invalid_argument("colsum_accum: width mismatch");
  T* o = out.row(0);
  for (int i = 0; i < x.rows(); ++i) {
    const T* xi = x.row(i);
    for (int j = 0; j < x.cols(); ++j) o[j] += xi[j];
  }
}

}  // namespace mtsf::kern
