#include "c3vg/rle.hpp"

#include <numeric>

#include "c3vg/errors.hpp"

namespace c3vg {

MaskRle rle_encode(const BinaryMask& mask) {
  MaskRle rle{mask.height(), mask.width(), {}};
  std::uint8_t current = 0;
  std::int64_t run = 0;
  for (auto v : mask.cells()) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit != current) {
      rle.counts.push_back(run);
      current = bit;
      run = 0;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask rle_decode(const MaskRle& rle) {
  const std::int64_t total = static_cast<std::int64_t>(rle.height) * rle.width;
  const auto sum = std::accumulate(rle.counts.begin(), rle.counts.end(), std::int64_t{0});
  if (rle.height < 0 || rle.width < 0 || sum != total) {
    throw ShapeMismatch("run lengths sum to " + std::to_string(sum) + ", expected " + std::to_string(total));
  }
  std::vector<std::uint8_t> cells;
  cells.reserve(static_cast<std::size_t>(total));
  std::uint8_t bit = 0;
  for (auto n : rle.counts) {
    if (n < 0) throw ShapeMismatch("negative run length");
    cells.insert(cells.end(), static_cast<std::size_t>(n), bit);
    bit ^= 1;
  }
  return BinaryMask(rle.height, rle.width, std::move(cells));
}

}  // namespace c3vg
