#include "resseg/dihedral.hpp"

namespace resseg {

const std::array<DihedralTransform, 8>& dihedral_group() {
  static const std::array<DihedralTransform, 8> group{{
      {false, false, false},
      {false, true, false},
      {false, false, true},
      {false, true, true},
      {true, false, false},
      {true, true, false},
      {true, false, true},
      {true, true, true},
  }};
  return group;
}

std::string DihedralTransform::name() const {
  static const char* names[8] = {"identity",  "flip_v", "flip_h",  "rot180",
                                 "transpose", "rot90",  "rot270", "antitranspose"};
  return names[(transpose ? 4 : 0) + (flip_rows ? 1 : 0) + (flip_cols ? 2 : 0)];
}

}  // namespace resseg
