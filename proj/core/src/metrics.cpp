#include "c3vg/metrics.hpp"

#include "c3vg/errors.hpp"
#include "json.hpp"

namespace c3vg {

namespace {

constexpr double kHitThreshold = 0.5;
constexpr double kConsistentFraction = 0.9;

template <typename A, typename B>
void check_pairs(std::span<A> a, std::span<B> b) {
  if (a.empty()) throw EmptyEvaluation();
  if (a.size() != b.size()) throw ShapeMismatch("prediction and ground-truth lists differ in length");
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["prec_at_0.5"] = prec_at_05;
  j["acc_ris"] = acc_ris;
  j["miou"] = miou;
  j["oiou"] = oiou;
  j["consistency_rate"] = consistency_rate;
  j["n"] = n_samples;
  return j.dump();
}

MetricReport MetricReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricReport r;
  r.prec_at_05 = j.at("prec_at_0.5").get<double>();
  r.acc_ris = j.at("acc_ris").get<double>();
  r.miou = j.at("miou").get<double>();
  r.oiou = j.at("oiou").get<double>();
  r.consistency_rate = j.at("consistency_rate").get<double>();
  r.n_samples = j.at("n").get<std::size_t>();
  return r;
}

MaskOverlap mask_overlap(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw ShapeMismatch("masks differ in size");
  MaskOverlap o;
  const auto ca = a.cells(), cb = b.cells();
  for (std::size_t i = 0; i < ca.size(); ++i) {
    o.intersection += ca[i] & cb[i];
    o.union_ += ca[i] | cb[i];
  }
  return o;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  const auto o = mask_overlap(a, b);
  return o.union_ == 0 ? 1.0 : static_cast<double>(o.intersection) / static_cast<double>(o.union_);
}

double rec_accuracy(std::span<const Box> preds, std::span<const Box> golds) {
  check_pairs(preds, golds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += box_iou(preds[i], golds[i]) > kHitThreshold;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double ris_miou(std::span<const BinaryMask> preds, std::span<const BinaryMask> golds) {
  check_pairs(preds, golds);
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += mask_iou(preds[i], golds[i]);
  return sum / static_cast<double>(preds.size());
}

double ris_oiou(std::span<const BinaryMask> preds, std::span<const BinaryMask> golds) {
  check_pairs(preds, golds);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto o = mask_overlap(preds[i], golds[i]);
    inter += o.intersection;
    uni += o.union_;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double ris_accuracy(std::span<const BinaryMask> preds, std::span<const BinaryMask> golds) {
  check_pairs(preds, golds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += mask_iou(preds[i], golds[i]) > kHitThreshold;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

bool is_consistent(const Box& box, const BinaryMask& mask) {
  const auto region = box_to_discrete(box, mask.width(), mask.height());
  std::size_t total = 0, inside = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      ++total;
      inside += region.contains(x, y);
    }
  }
  return total > 0 && static_cast<double>(inside) >= kConsistentFraction * static_cast<double>(total);
}

double consistency_rate(std::span<const Box> boxes, std::span<const BinaryMask> masks) {
  check_pairs(boxes, masks);
  std::size_t counted = 0, consistent = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (masks[i].empty()) continue;
    ++counted;
    consistent += is_consistent(boxes[i], masks[i]);
  }
  return counted == 0 ? 0.0 : static_cast<double>(consistent) / static_cast<double>(counted);
}

void MetricAccumulator::add(const Box& pred_box, const Box& gold_box, const BinaryMask& pred_mask,
                            const BinaryMask& gold_mask) {
  ++n_;
  box_hits_ += box_iou(pred_box, gold_box) > kHitThreshold;
  const auto o = mask_overlap(pred_mask, gold_mask);
  const double iou = o.union_ == 0 ? 1.0 : static_cast<double>(o.intersection) / static_cast<double>(o.union_);
  iou_sum_ += iou;
  mask_hits_ += iou > kHitThreshold;
  inter_sum_ += o.intersection;
  union_sum_ += o.union_;
  if (!pred_mask.empty()) {
    ++nonempty_;
    consistent_ += is_consistent(pred_box, pred_mask);
  }
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  n_ += other.n_;
  box_hits_ += other.box_hits_;
  mask_hits_ += other.mask_hits_;
  iou_sum_ += other.iou_sum_;
  inter_sum_ += other.inter_sum_;
  union_sum_ += other.union_sum_;
  consistent_ += other.consistent_;
  nonempty_ += other.nonempty_;
}

MetricReport MetricAccumulator::report() const {
  if (n_ == 0) throw EmptyEvaluation();
  const double n = static_cast<double>(n_);
  MetricReport r;
  r.n_samples = n_;
  r.prec_at_05 = static_cast<double>(box_hits_) / n;
  r.acc_ris = static_cast<double>(mask_hits_) / n;
  r.miou = iou_sum_ / n;
  r.oiou = union_sum_ == 0 ? 1.0 : static_cast<double>(inter_sum_) / static_cast<double>(union_sum_);
  r.consistency_rate = nonempty_ == 0 ? 0.0 : static_cast<double>(consistent_) / static_cast<double>(nonempty_);
  return r;
}

MetricReport compute_metrics(std::span<const Box> pred_boxes, std::span<const Box> gold_boxes,
                             std::span<const BinaryMask> pred_masks, std::span<const BinaryMask> gold_masks) {
  check_pairs(pred_boxes, gold_boxes);
  check_pairs(pred_masks, gold_masks);
  if (pred_boxes.size() != pred_masks.size()) throw ShapeMismatch("box and mask lists differ in length");
  MetricAccumulator acc;
  for (std::size_t i = 0; i < pred_boxes.size(); ++i) acc.add(pred_boxes[i], gold_boxes[i], pred_masks[i], gold_masks[i]);
  return acc.report();
}

}  // namespace c3vg
