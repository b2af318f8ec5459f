#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace mtsf {

// Dense row-major matrix. The one container every kernel and layer works on;
// 1-D data is a 1xN or Nx1 matrix, higher-rank tensors carry explicit shape
// ints next to a flat Mat.
template <typename T>
class Mat {
 public:
  Mat() : rows_(0), cols_(0) {}
  Mat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, T(0)) {}
  Mat(int rows, int cols, T fill)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  T& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  T* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const T* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> out(rows_, cols_);
    for (size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  Mat transposed() const {
    Mat out(cols_, rows_);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

 private:
  int rows_, cols_;
  std::vector<T> data_;
};

}  // namespace mtsf
