#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "c3vg/geometry.hpp"

namespace c3vg {

struct MetricReport {
  double prec_at_05 = 0.0;
  double acc_ris = 0.0;
  double miou = 0.0;
  double oiou = 0.0;
  double consistency_rate = 0.0;
  std::size_t n_samples = 0;

  // {"prec_at_0.5": r, "acc_ris": r, "miou": r, "oiou": r, "consistency_rate": r, "n": int}
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

struct MaskOverlap {
  std::size_t intersection = 0;
  std::size_t union_ = 0;
};

// Throws ShapeMismatch on different dimensions.
MaskOverlap mask_overlap(const BinaryMask& a, const BinaryMask& b);
// Empty-vs-empty is 1.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

// All of the following throw EmptyEvaluation on empty input and
// ShapeMismatch on unpaired lists.
double rec_accuracy(std::span<const Box> preds, std::span<const Box> golds);
double ris_miou(std::span<const BinaryMask> preds, std::span<const BinaryMask> golds);
double ris_oiou(std::span<const BinaryMask> preds, std::span<const BinaryMask> golds);
double ris_accuracy(std::span<const BinaryMask> preds, std::span<const BinaryMask> golds);

// Fraction of samples whose mask has at least 90% of its pixels inside the
// box's discrete region. Empty masks are left out of the denominator; 0 when
// no sample remains.
double consistency_rate(std::span<const Box> boxes, std::span<const BinaryMask> masks);
bool is_consistent(const Box& box, const BinaryMask& mask);

// Sums and counts only, so partial accumulators merge associatively.
class MetricAccumulator {
 public:
  void add(const Box& pred_box, const Box& gold_box, const BinaryMask& pred_mask, const BinaryMask& gold_mask);
  void merge(const MetricAccumulator& other);
  std::size_t count() const { return n_; }
  // Throws EmptyEvaluation when nothing was added.
  MetricReport report() const;

 private:
  std::size_t n_ = 0;
  std::size_t box_hits_ = 0;
  std::size_t mask_hits_ = 0;
  double iou_sum_ = 0.0;
  std::size_t inter_sum_ = 0;
  std::size_t union_sum_ = 0;
  std::size_t consistent_ = 0;
  std::size_t nonempty_ = 0;
};

MetricReport compute_metrics(std::span<const Box> pred_boxes, std::span<const Box> gold_boxes,
                             std::span<const BinaryMask> pred_masks, std::span<const BinaryMask> gold_masks);

}  // namespace c3vg
