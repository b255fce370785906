#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "resseg/error.hpp"

namespace resseg {

/// NCHW extents. All tensors in the engine are rank 4.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;
template <typename Scalar>
using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

/// Dense row-major NCHW array. Plain value type; autodiff lives in `Var`.
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(shape.count(), fill) {
    check_extents(shape);
  }
  Tensor(Shape shape, std::vector<Scalar> values) : shape_(shape), data_(std::move(values)) {
    check_extents(shape);
    if (data_.size() != shape.count()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape.str());
    }
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor ones(Shape s) { return Tensor(s, Scalar(1)); }
  static Tensor scalar(Scalar v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return data_; }
  std::span<const Scalar> span() const { return data_; }
  const std::vector<Scalar>& values() const { return data_; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Scalar& operator()(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  Scalar operator()(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  /// Flat view for coefficient-wise Eigen expressions.
  ArrayMap<Scalar> array() { return ArrayMap<Scalar>(data_.data(), static_cast<Eigen::Index>(size())); }
  ConstArrayMap<Scalar> array() const {
    return ConstArrayMap<Scalar>(data_.data(), static_cast<Eigen::Index>(size()));
  }

  /// (C x H*W) matrix view of sample `n`.
  MatrixMap<Scalar> sample_matrix(int n) {
    return MatrixMap<Scalar>(data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane(),
                             shape_.c, static_cast<Eigen::Index>(shape_.plane()));
  }
  ConstMatrixMap<Scalar> sample_matrix(int n) const {
    return ConstMatrixMap<Scalar>(
        data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane(), shape_.c,
        static_cast<Eigen::Index>(shape_.plane()));
  }

  Scalar* plane_ptr(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const Scalar* plane_ptr(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  Scalar sum() const { return array().sum(); }

  bool all_finite() const {
    for (Scalar v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
    return Tensor<Other>(shape_, std::move(out));
  }

  Tensor reshaped(Shape s) const {
    if (s.count() != shape_.count()) {
      throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    }
    Tensor t = *this;
    t.shape_ = s;
    return t;
  }

 private:
  static void check_extents(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ShapeError("negative extent in shape " + s.str());
    }
  }

  Shape shape_{};
  std::vector<Scalar> data_;
};

/// Copy sample `n` out of a batch as a (1,C,H,W) tensor.
template <typename Scalar>
Tensor<Scalar> slice_sample(const Tensor<Scalar>& t, int n) {
  const Shape& s = t.shape();
  Tensor<Scalar> out(Shape{1, s.c, s.h, s.w});
  const std::size_t stride = static_cast<std::size_t>(s.c) * s.plane();
  std::copy_n(t.data() + n * stride, stride, out.data());
  return out;
}

/// Concatenate same-shaped (1,C,H,W) tensors along N.
template <typename Scalar>
Tensor<Scalar> stack_samples(std::span<const Tensor<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("stack_samples: empty input");
  const Shape first = parts.front().shape();
  Tensor<Scalar> out(Shape{static_cast<int>(parts.size()) * first.n, first.c, first.h, first.w});
  Scalar* dst = out.data();
  for (const auto& p : parts) {
    if (p.shape() != first) {
      throw ShapeError("stack_samples: shape " + p.shape().str() + " differs from " + first.str());
    }
    dst = std::copy(p.data(), p.data() + p.size(), dst);
  }
  return out;
}

}  // namespace resseg
