#include "c3vg/losses.hpp"

#include "c3vg/errors.hpp"
#include "c3vg/geometry.hpp"

namespace c3vg {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
  for (double v : {sigma_l1, sigma_giou, sigma_dice, sigma_bce, lambda_1, lambda_2, lambda_rec, lambda_bcc, lambda_c,
                   w_1}) {
    if (v < 0.0) throw BadConfig("loss weights must be non-negative");
  }
  if (!(t > 0.0 && t < 1.0)) throw BadConfig("mask threshold t must lie in (0, 1)");
}

double LossReport::recompute_total(const LossWeights& weights) const {
  return compose_total(rec_coarse, ris_coarse, rec_fine, ris_fine, b2m, m2b, weights);
}

namespace {

struct Corners {
  torch::Tensor x1, y1, x2, y2, area;
};

Corners corners(const torch::Tensor& boxes) {
  auto w = boxes.select(1, 2).clamp_min(kMinBoxExtent);
  auto h = boxes.select(1, 3).clamp_min(kMinBoxExtent);
  auto cx = boxes.select(1, 0), cy = boxes.select(1, 1);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h, w * h};
}

struct Overlap {
  torch::Tensor inter, uni, hull;
};

Overlap overlap(const torch::Tensor& a, const torch::Tensor& b) {
  const auto ca = corners(a), cb = corners(b);
  auto iw = (torch::min(ca.x2, cb.x2) - torch::max(ca.x1, cb.x1)).clamp_min(0.0);
  auto ih = (torch::min(ca.y2, cb.y2) - torch::max(ca.y1, cb.y1)).clamp_min(0.0);
  auto cw = torch::max(ca.x2, cb.x2) - torch::min(ca.x1, cb.x1);
  auto ch = torch::max(ca.y2, cb.y2) - torch::min(ca.y1, cb.y1);
  Overlap o;
  o.inter = iw * ih;
  o.uni = ca.area + cb.area - o.inter;
  o.hull = cw * ch;
  return o;
}

}  // namespace

torch::Tensor box_iou(const torch::Tensor& a, const torch::Tensor& b) {
  const auto o = overlap(a, b);
  return o.inter / o.uni;
}

torch::Tensor box_giou(const torch::Tensor& a, const torch::Tensor& b) {
  const auto o = overlap(a, b);
  return o.inter / o.uni - (o.hull - o.uni) / o.hull;
}

torch::Tensor rec_loss(const torch::Tensor& pred, const torch::Tensor& gold, const LossWeights& weights) {
  auto l1 = (pred - gold).abs().mean();
  auto giou = (1.0 - box_giou(pred, gold)).mean();
  return weights.sigma_l1 * l1 + weights.sigma_giou * giou;
}

torch::Tensor ris_loss(const torch::Tensor& logits, const torch::Tensor& gold, const LossWeights& weights) {
  if (logits.sizes() != gold.sizes() || logits.dim() != 3) {
    throw ShapeMismatch("mask logits and gold masks must both be [B, H, W] of equal size");
  }
  auto target = gold.to(logits.dtype());
  auto probs = torch::sigmoid(logits).flatten(1);
  auto g = target.flatten(1);
  auto dice = 1.0 - (2.0 * (probs * g).sum(1) + 1.0) / (probs.sum(1) + g.sum(1) + 1.0);
  auto bce = F::binary_cross_entropy_with_logits(logits, target);
  return weights.sigma_dice * dice.mean() + weights.sigma_bce * bce;
}

torch::Tensor box_region_masks(const torch::Tensor& boxes, std::int64_t height, std::int64_t width,
                               torch::TensorOptions options) {
  auto cpu = boxes.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  auto acc = cpu.accessor<double, 2>();
  auto masks = torch::zeros({cpu.size(0), height, width}, options.requires_grad(false));
  for (std::int64_t b = 0; b < cpu.size(0); ++b) {
    const auto d = box_to_discrete(Box{acc[b][0], acc[b][1], acc[b][2], acc[b][3]}, static_cast<int>(width),
                                   static_cast<int>(height));
    if (!d.empty()) masks[b].slice(0, d.y1, d.y2).slice(1, d.x1, d.x2).fill_(1.0);
  }
  return masks;
}

torch::Tensor loss_m2b(const torch::Tensor& logits, const torch::Tensor& boxes, const LossWeights&) {
  constexpr double kEps = 1e-6;
  auto soft = torch::sigmoid(logits);
  auto region = box_region_masks(boxes, logits.size(1), logits.size(2), logits.options());
  auto inside = (soft * region).flatten(1).sum(1);
  auto mass = soft.flatten(1).sum(1);
  auto value = 1.0 - inside / mass.clamp_min(kEps);
  return torch::where(mass < kEps, torch::zeros_like(value), value).mean();
}

torch::Tensor loss_b2m(const torch::Tensor& logits, const torch::Tensor& boxes, const LossWeights& weights) {
  auto hard = (torch::sigmoid(logits.detach()) > weights.t).to(torch::kCPU, torch::kUInt8).contiguous();
  const auto batch = hard.size(0);
  const int height = static_cast<int>(hard.size(1)), width = static_cast<int>(hard.size(2));
  auto targets = torch::zeros({batch, 4}, boxes.options().requires_grad(false));
  auto valid = torch::zeros({batch}, boxes.options().requires_grad(false));
  for (std::int64_t b = 0; b < batch; ++b) {
    const auto* data = hard[b].data_ptr<std::uint8_t>();
    BinaryMask mask(height, width, std::vector<std::uint8_t>(data, data + static_cast<std::size_t>(height) * width));
    if (mask.empty()) continue;
    const Box bbox = mask_min_bbox(mask);
    targets[b] = torch::tensor({bbox.cx, bbox.cy, bbox.w, bbox.h}, targets.options());
    valid[b] = 1.0;
  }
  auto value = (1.0 - box_iou(boxes, targets)) * valid;
  return value.mean();
}

torch::Tensor loss_bcc(const torch::Tensor& logits, const torch::Tensor& boxes, const LossWeights& weights) {
  return weights.lambda_1 * loss_b2m(logits, boxes, weights) + weights.lambda_2 * loss_m2b(logits, boxes, weights);
}

LossReport LossTerms::report() const {
  auto v = [](const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; };
  return LossReport{v(rec_coarse), v(ris_coarse), v(rec_fine), v(ris_fine), v(m2b), v(b2m), v(total)};
}

LossTerms total_loss(const StagePrediction& coarse, const StagePrediction& fine, const torch::Tensor& gold_boxes,
                     const torch::Tensor& gold_masks, const LossWeights& weights, bool bcc_on_coarse) {
  LossTerms terms;
  terms.rec_coarse = rec_loss(coarse.box, gold_boxes, weights);
  terms.ris_coarse = ris_loss(coarse.mask_logits, gold_masks, weights);
  terms.rec_fine = rec_loss(fine.box, gold_boxes, weights);
  terms.ris_fine = ris_loss(fine.mask_logits, gold_masks, weights);
  terms.m2b = loss_m2b(fine.mask_logits, fine.box, weights);
  terms.b2m = loss_b2m(fine.mask_logits, fine.box, weights);
  if (bcc_on_coarse) {
    terms.m2b = terms.m2b + loss_m2b(coarse.mask_logits, coarse.box, weights);
    terms.b2m = terms.b2m + loss_b2m(coarse.mask_logits, coarse.box, weights);
  }
  terms.total = compose_total(terms.rec_coarse, terms.ris_coarse, terms.rec_fine, terms.ris_fine, terms.b2m, terms.m2b,
                              weights);
  return terms;
}

}  // namespace c3vg
