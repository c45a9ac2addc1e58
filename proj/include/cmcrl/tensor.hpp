#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "cmcrl/common.hpp"

namespace cmcrl {

/// Dense row-major tensor of rank <= 4. Value semantics, contiguous storage.
template <class T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims, T fill = T(0))
      : dims_(std::move(dims)), data_(count(dims_), fill) {}

  Tensor(std::initializer_list<std::size_t> dims, T fill = T(0))
      : Tensor(std::vector<std::size_t>(dims), fill) {}

  static std::size_t count(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i0) { return data_[i0]; }
  T& at(std::size_t i0, std::size_t i1) { return data_[i0 * dims_[1] + i1]; }
  T& at(std::size_t i0, std::size_t i1, std::size_t i2) {
    return data_[(i0 * dims_[1] + i1) * dims_[2] + i2];
  }
  T& at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) {
    return data_[((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3];
  }
  const T& at(std::size_t i0) const { return data_[i0]; }
  const T& at(std::size_t i0, std::size_t i1) const { return data_[i0 * dims_[1] + i1]; }
  const T& at(std::size_t i0, std::size_t i1, std::size_t i2) const {
    return data_[(i0 * dims_[1] + i1) * dims_[2] + i2];
  }
  const T& at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) const {
    return data_[((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  bool operator==(const Tensor& o) const { return dims_ == o.dims_ && data_ == o.data_; }

private:
  std::vector<std::size_t> dims_;
  std::vector<T> data_;
};

/// L2 norm of a contiguous range.
template <class T>
double l2_norm(const T* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  return std::sqrt(s);
}

/// In-place unit normalization. Leaves an all-zero vector untouched.
template <class T>
void l2_normalize(T* v, std::size_t n) {
  const double nrm = l2_norm(v, n);
  if (nrm == 0.0) return;
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(v[i] / nrm);
}

template <class T>
double dot(const T* a, const T* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

}  // namespace cmcrl
