#pragma once

#include <cmath>

#include "mtsf/mat.hpp"

// Serial reference kernels. Naive triple loops, no OpenMP, no blocking;
// kept as the independent oracle the kernel tests and the attention oracle
// check against, and as the baseline side of the kernel benchmark.
namespace mtsf::ref {

template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      T acc = T(0);
      for (int p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  return c;
}

template <typename T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) {
      T acc = T(0);
      for (int p = 0; p < a.cols(); ++p) acc += a(i, p) * b(j, p);
      c(i, j) = acc;
    }
  return c;
}

template <typename T>
Mat<T> matmul_tn(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c(a.cols(), b.cols());
  for (int i = 0; i < a.cols(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      T acc = T(0);
      for (int p = 0; p < a.rows(); ++p) acc += a(p, i) * b(p, j);
      c(i, j) = acc;
    }
  return c;
}

template <typename T>
Mat<T> softmax_rows(const Mat<T>& x) {
  Mat<T> y(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    T mx = x(i, 0);
    for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    T sum = T(0);
    for (int j = 0; j < x.cols(); ++j) {
      y(i, j) = std::exp(x(i, j) - mx);
      sum += y(i, j);
    }
    for (int j = 0; j < x.cols(); ++j) y(i, j) /= sum;
  }
  return y;
}

// softmax(Q K^T / sqrt(d_k)) V, all serial
template <typename T>
Mat<T> attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, Mat<T>* weights_out = nullptr) {
  Mat<T> s = matmul_nt(q, k);
  const T inv = T(1) / std::sqrt(static_cast<T>(q.cols()));
  for (int i = 0; i < s.rows(); ++i)
    for (int j = 0; j < s.cols(); ++j) s(i, j) *= inv;
  Mat<T> w = softmax_rows(s);
  if (weights_out) *weights_out = w;
  return matmul(w, v);
}

}  // namespace mtsf::ref
