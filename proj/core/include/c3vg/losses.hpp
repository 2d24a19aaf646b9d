#pragma once

#include <torch/torch.h>

#include "c3vg/rsp_head.hpp"

namespace c3vg {

struct LossWeights {
  double sigma_l1 = 0.5;
  double sigma_giou = 0.2;
  double sigma_dice = 1.0;
  double sigma_bce = 1.0;
  double lambda_1 = 1.0;    // b2m
  double lambda_2 = 3.0;    // m2b
  double lambda_rec = 0.5;
  double lambda_bcc = 0.1;
  double lambda_c = 0.3;
  double t = 0.5;           // mask threshold
  double w_1 = 0.1;         // in-box weight of W_b

  // Throws BadConfig on negative weights or t outside (0, 1).
  void validate() const;
};

// Scalars of one evaluation of the objective.
struct LossReport {
  double rec_coarse = 0.0;
  double ris_coarse = 0.0;
  double rec_fine = 0.0;
  double ris_fine = 0.0;
  double m2b = 0.0;
  double b2m = 0.0;
  double total = 0.0;

  // Recomputes the total from the parts with the same composition the
  // training objective uses.
  double recompute_total(const LossWeights& weights) const;
};

// L_total = lc (lrec Lrec^c + Lris^c) + (lrec Lrec^f + Lris^f) + lbcc (l1 Lb2m + l2 Lm2b).
template <typename T>
T compose_total(const T& rec_coarse, const T& ris_coarse, const T& rec_fine, const T& ris_fine, const T& b2m,
                const T& m2b, const LossWeights& w) {
  return w.lambda_c * (w.lambda_rec * rec_coarse + ris_coarse) + (w.lambda_rec * rec_fine + ris_fine) +
         w.lambda_bcc * (w.lambda_1 * b2m + w.lambda_2 * m2b);
}

// Differentiable IoU and GIoU of [B, 4] cxcywh boxes (extents floored at
// kMinBoxExtent). Both return [B].
torch::Tensor box_iou(const torch::Tensor& a, const torch::Tensor& b);
torch::Tensor box_giou(const torch::Tensor& a, const torch::Tensor& b);

// sigma_l1 * mean |pred - gold| + sigma_giou * mean (1 - GIoU).
torch::Tensor rec_loss(const torch::Tensor& pred, const torch::Tensor& gold, const LossWeights& weights);

// sigma_dice * Dice(sigmoid(logits), gold; eps = 1) + sigma_bce * mean BCE.
// logits and gold are [B, H, W]; throws ShapeMismatch otherwise.
torch::Tensor ris_loss(const torch::Tensor& logits, const torch::Tensor& gold, const LossWeights& weights);

// [B, H, W] indicator of each (detached) box's discrete cell region.
torch::Tensor box_region_masks(const torch::Tensor& boxes, std::int64_t height, std::int64_t width,
                               torch::TensorOptions options);

// 1 - sum(S * M_b) / sum(S) with S = sigmoid(logits) and M_b from the detached
// box; 0 for samples whose soft mass is below 1e-6. Batch mean.
torch::Tensor loss_m2b(const torch::Tensor& logits, const torch::Tensor& boxes, const LossWeights& weights);

// 1 - IoU(min bbox of the detached thresholded mask, box); 0 for samples with
// an empty thresholded mask. Gradient reaches only the boxes. Batch mean.
torch::Tensor loss_b2m(const torch::Tensor& logits, const torch::Tensor& boxes, const LossWeights& weights);

// lambda_1 * b2m + lambda_2 * m2b.
torch::Tensor loss_bcc(const torch::Tensor& logits, const torch::Tensor& boxes, const LossWeights& weights);

struct LossTerms {
  torch::Tensor rec_coarse, ris_coarse, rec_fine, ris_fine, m2b, b2m, total;
  LossReport report() const;
};

// Full objective. The consistency pair is computed on the fine stage, and
// additionally on the coarse stage when bcc_on_coarse is set.
LossTerms total_loss(const StagePrediction& coarse, const StagePrediction& fine, const torch::Tensor& gold_boxes,
                     const torch::Tensor& gold_masks, const LossWeights& weights, bool bcc_on_coarse = false);

}  // namespace c3vg
