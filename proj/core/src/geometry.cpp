#include "c3vg/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "c3vg/errors.hpp"

namespace c3vg {

Box Box::clamped() const {
  return Box{cx, cy, std::max(w, kMinBoxExtent), std::max(h, kMinBoxExtent)};
}

Box Box::from_corners(double x1, double y1, double x2, double y2) {
  return Box{0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
}

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width), cells_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> cells)
    : height_(height), width_(width), cells_(std::move(cells)) {
  if (cells_.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeMismatch("mask cell count does not match its dimensions");
  }
  for (auto& c : cells_) c = c ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

ProbMask::ProbMask(int height, int width, double fill)
    : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width, fill) {}

ProbMask::ProbMask(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeMismatch("probability count does not match its dimensions");
  }
}

DiscreteBox box_to_discrete(const Box& box, int grid_w, int grid_h) {
  // Corners within rounding noise of a cell edge snap to that edge.
  constexpr double kSnap = 1e-9;
  auto lo = [](double v, int n) { return std::clamp(static_cast<int>(std::floor(v * n + kSnap)), 0, n); };
  auto hi = [](double v, int n) { return std::clamp(static_cast<int>(std::ceil(v * n - kSnap)), 0, n); };
  DiscreteBox d{lo(box.x1(), grid_w), lo(box.y1(), grid_h), hi(box.x2(), grid_w), hi(box.y2(), grid_h)};
  d.x2 = std::max(d.x2, d.x1);
  d.y2 = std::max(d.y2, d.y1);
  return d;
}

namespace {

struct Overlap {
  double inter = 0.0;
  double uni = 0.0;
  double hull = 0.0;
};

Overlap overlap(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double ih = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  Overlap o;
  o.inter = iw * ih;
  o.uni = a.area() + b.area() - o.inter;
  o.hull = cw * ch;
  return o;
}

}  // namespace

double box_iou(const Box& a, const Box& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) return 0.0;
  const Overlap o = overlap(a, b);
  return o.uni > 0.0 ? o.inter / o.uni : 0.0;
}

double box_giou(const Box& a, const Box& b) {
  const Overlap o = overlap(a, b);
  if (o.hull <= 0.0) return 0.0;
  const double iou = o.uni > 0.0 ? o.inter / o.uni : 0.0;
  return iou - (o.hull - o.uni) / o.hull;
}

Box mask_min_bbox(const BinaryMask& mask) {
  int x_min = mask.width(), y_min = mask.height(), x_max = -1, y_max = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (x_max < 0) throw EmptyMask();
  const double w = mask.width(), h = mask.height();
  return Box::from_corners(x_min / w, y_min / h, (x_max + 1) / w, (y_max + 1) / h);
}

BinaryMask box_to_mask(const DiscreteBox& box, int grid_w, int grid_h) {
  BinaryMask mask(grid_h, grid_w);
  const int x1 = std::clamp(box.x1, 0, grid_w), x2 = std::clamp(box.x2, 0, grid_w);
  const int y1 = std::clamp(box.y1, 0, grid_h), y2 = std::clamp(box.y2, 0, grid_h);
  for (int y = y1; y < y2; ++y) {
    for (int x = x1; x < x2; ++x) mask.set(y, x, true);
  }
  return mask;
}

BinaryMask threshold_mask(const ProbMask& probs, double t) {
  std::vector<std::uint8_t> cells(probs.values().size());
  std::transform(probs.values().begin(), probs.values().end(), cells.begin(),
                 [t](double p) { return static_cast<std::uint8_t>(p > t ? 1 : 0); });
  return BinaryMask(probs.height(), probs.width(), std::move(cells));
}

}  // namespace c3vg
