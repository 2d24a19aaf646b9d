#pragma once

#include <cstdint>
#include <vector>

#include "c3vg/geometry.hpp"

namespace c3vg {

// Uncompressed row-major run lengths, alternating 0-runs and 1-runs and
// always starting with a (possibly zero) 0-run.
struct MaskRle {
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> counts;

  friend bool operator==(const MaskRle&, const MaskRle&) = default;
};

MaskRle rle_encode(const BinaryMask& mask);
// Throws ShapeMismatch when the runs do not sum to height * width.
BinaryMask rle_decode(const MaskRle& rle);

}  // namespace c3vg
