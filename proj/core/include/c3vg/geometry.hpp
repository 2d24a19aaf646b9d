#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace c3vg {

// Predicted w/h are floored to this before any overlap computation.
inline constexpr double kMinBoxExtent = 1e-4;

// Normalized center-format box; every field is a fraction of the image extent.
struct Box {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  // w and h floored at kMinBoxExtent.
  Box clamped() const;

  static Box from_corners(double x1, double y1, double x2, double y2);

  friend bool operator==(const Box&, const Box&) = default;
};

// Integer grid corners; the covered cells are [x1, x2) x [y1, y2).
struct DiscreteBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  int area() const { return (x2 - x1) * (y2 - y1); }
  bool empty() const { return x2 <= x1 || y2 <= y1; }
  bool contains(int x, int y) const { return x >= x1 && x < x2 && y >= y1 && y < y2; }

  friend bool operator==(const DiscreteBox&, const DiscreteBox&) = default;
};

// Row-major H x W grid of {0,1}.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0);
  BinaryMask(int height, int width, std::vector<std::uint8_t> cells);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return cells_.size(); }

  std::uint8_t at(int y, int x) const { return cells_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, bool on) { cells_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0; }

  std::span<const std::uint8_t> cells() const { return cells_; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> cells_;
};

// Row-major H x W grid of probabilities in [0,1].
class ProbMask {
 public:
  ProbMask() = default;
  ProbMask(int height, int width, double fill = 0.0);
  ProbMask(int height, int width, std::vector<double> values);

  int height() const { return height_; }
  int width() const { return width_; }
  double at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, double v) { values_[static_cast<std::size_t>(y) * width_ + x] = v; }
  std::span<const double> values() const { return values_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// floor of the top-left corner and ceil of the bottom-right corner after
// scaling by the grid, clamped into the grid. Never fails.
DiscreteBox box_to_discrete(const Box& box, int grid_w, int grid_h);

// Continuous-coordinate IoU; 0 for disjoint boxes or zero-area inputs.
double box_iou(const Box& a, const Box& b);

// IoU minus the fraction of the enclosing box not covered by the union.
double box_giou(const Box& a, const Box& b);

// Tightest normalized box covering every foreground cell. Throws EmptyMask.
Box mask_min_bbox(const BinaryMask& mask);

BinaryMask box_to_mask(const DiscreteBox& box, int grid_w, int grid_h);

// cell = 1 iff p > t (strict).
BinaryMask threshold_mask(const ProbMask& probs, double t);

}  // namespace c3vg
