#pragma once

#include <torch/torch.h>

#include "c3vg/encoder.hpp"
#include "c3vg/geometry.hpp"
#include "c3vg/layers.hpp"
#include "c3vg/rsp_head.hpp"

namespace c3vg {

struct MimOptions {
  double box_weight = 0.1;         // w_1
  bool invert_box_weight = false;  // true: w_1 outside the box instead of inside
  std::int64_t roi_size = 7;
  bool use_self_attention = true;  // ablation switch for the MSA in seg_interaction
};

struct SpatialPriors {
  torch::Tensor box_weight;   // W_b, [B, 1, h, w], values in {w_1, 1}
  torch::Tensor mask_weight;  // W_s, [B, 1, h, w], values in [0, 1]
};

struct FusedFeatures {
  torch::Tensor constrained;  // F_u,  [B, 3D, h, w]
  torch::Tensor fused;        // F_u', [B, D, h, w]
};

struct MimOutput {
  SpatialPriors priors;
  FusedFeatures features;
  torch::Tensor box_feature;       // F_b^c, [B, 1, D]
  torch::Tensor object_feature;    // F_box, [B, 1, D]
  torch::Tensor seg_feature;       // F_seg, [B, D, h, w]
};

// Weight map over a grid_h x grid_w grid: cells of the discretized box get
// w_1 and the rest 1 (swapped when invert is set). Returns [grid_h, grid_w].
torch::Tensor build_box_weight(const Box& box, std::int64_t grid_w, std::int64_t grid_h, double w1,
                               bool invert = false, torch::TensorOptions options = torch::kFloat64);

// Batched form over detached [B, 4] boxes -> [B, 1, grid_h, grid_w].
torch::Tensor build_box_weight(const torch::Tensor& boxes, std::int64_t grid_w, std::int64_t grid_h, double w1,
                               bool invert = false);

// sigmoid of detached coarse logits, resized bilinearly to the grid when needed.
torch::Tensor build_mask_weight(const torch::Tensor& coarse_logits, std::int64_t grid_h, std::int64_t grid_w);

// Bilinear RoI align over normalized cxcywh boxes: [B, C, H, W] x [B, 4] ->
// [B, C, out, out]. Boxes narrower than one cell are widened to one cell.
torch::Tensor roi_align(const torch::Tensor& features, const torch::Tensor& boxes, std::int64_t out_size);

class MaskGuidedInteractionImpl : public torch::nn::Module {
 public:
  MaskGuidedInteractionImpl(std::int64_t dim, std::int64_t heads, MimOptions options = {});

  // F_s = W_s * F_img; F_u = [F_s, W_b * F_s, F_img]; F_u' = MLP(F_u).
  FusedFeatures fuse_constrained_features(const torch::Tensor& image_grid, const torch::Tensor& box_weight,
                                          const torch::Tensor& mask_weight);
  // RoI pool + coordinate embedding, then MLP to D.
  torch::Tensor roi_box_feature(const torch::Tensor& boxes, const torch::Tensor& image_grid);
  torch::Tensor box_interaction(const torch::Tensor& box_feature, const torch::Tensor& text,
                                const torch::Tensor& pad_mask, const torch::Tensor& fused);
  torch::Tensor seg_interaction(const torch::Tensor& fused, const torch::Tensor& text, const torch::Tensor& pad_mask);

  // Coarse predictions enter detached.
  MimOutput forward(const ProjectedTokens& tokens, const StagePrediction& coarse);

  MimOptions& options() { return options_; }
  const MimOptions& options() const { return options_; }

  Mlp reduce{nullptr};
  torch::nn::Linear coord_embed{nullptr};
  Mlp roi_mlp{nullptr};
  CrossAttention box_text_attn{nullptr}, box_image_attn{nullptr}, seg_text_attn{nullptr};
  SelfAttention seg_self_attn{nullptr};

 private:
  MimOptions options_;
};
TORCH_MODULE(MaskGuidedInteraction);

}  // namespace c3vg
