#pragma once

#include <array>
#include <string>

#include "resseg/tensor.hpp"

namespace resseg {

/// A symmetry of the square, applied to the H/W axes of every plane as
/// optional transpose followed by optional row and column reversal.
struct DihedralTransform {
  bool transpose = false;
  bool flip_rows = false;
  bool flip_cols = false;

  DihedralTransform inverse() const {
    return transpose ? DihedralTransform{true, flip_cols, flip_rows} : *this;
  }
  std::string name() const;
  friend bool operator==(const DihedralTransform&, const DihedralTransform&) = default;
};

/// identity, flip_v, flip_h, rot180, transpose, rot90, rot270, antitranspose.
const std::array<DihedralTransform, 8>& dihedral_group();

template <typename Scalar>
Tensor<Scalar> apply_dihedral(const Tensor<Scalar>& t, const DihedralTransform& d) {
  const Shape s = t.shape();
  const int oh = d.transpose ? s.w : s.h;
  const int ow = d.transpose ? s.h : s.w;
  Tensor<Scalar> out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const Scalar* src = t.plane_ptr(n, c);
      Scalar* dst = out.plane_ptr(n, c);
      for (int y = 0; y < oh; ++y) {
        const int ty = d.flip_rows ? oh - 1 - y : y;
        for (int x = 0; x < ow; ++x) {
          const int tx = d.flip_cols ? ow - 1 - x : x;
          const int sy = d.transpose ? tx : ty;
          const int sx = d.transpose ? ty : tx;
          dst[static_cast<std::size_t>(y) * ow + x] = src[static_cast<std::size_t>(sy) * s.w + sx];
        }
      }
    }
  return out;
}

}  // namespace resseg
