#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "lqt/error.hpp"

namespace lqt {

// Dense row-major array of real values. Rank is dynamic but in practice
// everything in this project is rank 1 (per-channel vectors) or rank 2 (T x C
// sequences). Scalar type is float for training/benchmark runs and double for
// verification runs.
template <class S>
class Array {
 public:
  Array() = default;

  explicit Array(std::vector<std::size_t> shape, S fill = S(0))
      : shape_(std::move(shape)),
        data_(numel_of(shape_), fill) {}

  static Array from(std::vector<std::size_t> shape, std::vector<S> values) {
    Array a;
    a.shape_ = std::move(shape);
    a.data_ = std::move(values);
    if (numel_of(a.shape_) != a.data_.size()) {
      throw ShapeError("Array::from: shape does not match value count");
    }
    return a;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t dim(std::size_t i) const { return shape_[i]; }
  // Rank-2 helpers; rows()==1 for rank-1 arrays so row-wise code can stay generic.
  std::size_t rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const {
    return shape_.size() >= 2 ? shape_[1] : (shape_.empty() ? 0 : shape_[0]);
  }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& values() { return data_; }
  const std::vector<S>& values() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  S operator[](std::size_t i) const { return data_[i]; }
  S& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  S operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool same_shape(const Array& o) const { return shape_ == o.shape_; }
  bool is_scalar() const { return data_.size() == 1; }

  template <class T>
  Array<T> cast() const {
    Array<T> out;
    out = Array<T>::from(shape_, std::vector<T>(data_.begin(), data_.end()));
    return out;
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<S> data_;
};

template <class S>
inline bool all_finite(const Array<S>& a) {
  for (const S v : a.values()) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

// Engine contract: finite inputs must yield finite outputs; a NaN/Inf result is
// surfaced to the caller instead of propagating silently.
template <class S>
inline void ensure_finite(const Array<S>& a, const char* op_name) {
  if (!all_finite(a)) {
    throw NumericalError(std::string("non-finite values produced by op '") + op_name + "'");
  }
}

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace lqt
