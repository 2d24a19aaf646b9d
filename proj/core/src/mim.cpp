#include "c3vg/mim.hpp"

#include <algorithm>

namespace c3vg {

namespace F = torch::nn::functional;

torch::Tensor build_box_weight(const Box& box, std::int64_t grid_w, std::int64_t grid_h, double w1, bool invert,
                               torch::TensorOptions options) {
  const auto d = box_to_discrete(box, static_cast<int>(grid_w), static_cast<int>(grid_h));
  const double inside = invert ? 1.0 : w1;
  const double outside = invert ? w1 : 1.0;
  auto weight = torch::full({grid_h, grid_w}, outside, options);
  if (!d.empty()) weight.slice(0, d.y1, d.y2).slice(1, d.x1, d.x2).fill_(inside);
  return weight;
}

torch::Tensor build_box_weight(const torch::Tensor& boxes, std::int64_t grid_w, std::int64_t grid_h, double w1,
                               bool invert) {
  auto cpu = boxes.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  auto acc = cpu.accessor<double, 2>();
  std::vector<torch::Tensor> maps;
  maps.reserve(static_cast<std::size_t>(cpu.size(0)));
  for (std::int64_t b = 0; b < cpu.size(0); ++b) {
    const Box box{acc[b][0], acc[b][1], acc[b][2], acc[b][3]};
    maps.push_back(build_box_weight(box, grid_w, grid_h, w1, invert, boxes.options().requires_grad(false)));
  }
  return torch::stack(maps).unsqueeze(1);
}

torch::Tensor build_mask_weight(const torch::Tensor& coarse_logits, std::int64_t grid_h, std::int64_t grid_w) {
  auto logits = coarse_logits.detach();
  if (logits.size(1) != grid_h || logits.size(2) != grid_w) logits = upsample_mask(logits, grid_h, grid_w);
  return torch::sigmoid(logits).unsqueeze(1);
}

torch::Tensor roi_align(const torch::Tensor& features, const torch::Tensor& boxes, std::int64_t out_size) {
  const auto batch = features.size(0);
  const double h = static_cast<double>(features.size(2));
  const double w = static_cast<double>(features.size(3));
  auto b = boxes.detach().to(features.dtype());
  auto cx = b.select(1, 0), cy = b.select(1, 1);
  auto bw = b.select(1, 2).clamp_min(1.0 / w);
  auto bh = b.select(1, 3).clamp_min(1.0 / h);

  // Bin centres in [0, 1], then mapped to grid_sample's [-1, 1].
  auto steps = (torch::arange(out_size, features.options().requires_grad(false)) + 0.5) / static_cast<double>(out_size);
  auto xs = (cx - 0.5 * bw).unsqueeze(1) + bw.unsqueeze(1) * steps.unsqueeze(0);  // [B, P]
  auto ys = (cy - 0.5 * bh).unsqueeze(1) + bh.unsqueeze(1) * steps.unsqueeze(0);
  auto gx = (2.0 * xs - 1.0).view({batch, 1, out_size}).expand({batch, out_size, out_size});
  auto gy = (2.0 * ys - 1.0).view({batch, out_size, 1}).expand({batch, out_size, out_size});
  auto grid = torch::stack({gx, gy}, -1);
  return F::grid_sample(features, grid,
                        F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(false));
}

MaskGuidedInteractionImpl::MaskGuidedInteractionImpl(std::int64_t dim, std::int64_t heads, MimOptions options)
    : options_(options) {
  const auto pooled = dim * options.roi_size * options.roi_size;
  reduce = register_module("reduce", Mlp(3 * dim, dim, dim, 2));
  coord_embed = register_module("coord_embed", torch::nn::Linear(4, pooled));
  roi_mlp = register_module("roi_mlp", Mlp(pooled, dim, dim, 2));
  box_text_attn = register_module("box_text_attn", CrossAttention(dim, heads));
  box_image_attn = register_module("box_image_attn", CrossAttention(dim, heads));
  seg_text_attn = register_module("seg_text_attn", CrossAttention(dim, heads));
  seg_self_attn = register_module("seg_self_attn", SelfAttention(dim, heads));
}

FusedFeatures MaskGuidedInteractionImpl::fuse_constrained_features(const torch::Tensor& image_grid,
                                                                   const torch::Tensor& box_weight,
                                                                   const torch::Tensor& mask_weight) {
  auto masked = mask_weight * image_grid;
  FusedFeatures out;
  out.constrained = torch::cat({masked, box_weight * masked, image_grid}, 1);
  auto reduced = reduce(out.constrained.permute({0, 2, 3, 1}));
  out.fused = reduced.permute({0, 3, 1, 2}).contiguous();
  return out;
}

torch::Tensor MaskGuidedInteractionImpl::roi_box_feature(const torch::Tensor& boxes, const torch::Tensor& image_grid) {
  auto pooled = roi_align(image_grid, boxes, options_.roi_size).flatten(1);
  auto coords = coord_embed(boxes.detach().to(image_grid.dtype()));
  return roi_mlp(pooled + coords).unsqueeze(1);
}

torch::Tensor MaskGuidedInteractionImpl::box_interaction(const torch::Tensor& box_feature, const torch::Tensor& text,
                                                         const torch::Tensor& pad_mask, const torch::Tensor& fused) {
  auto attended = box_text_attn(box_feature, text, pad_mask);
  return box_image_attn(attended, grid_to_tokens(fused));
}

torch::Tensor MaskGuidedInteractionImpl::seg_interaction(const torch::Tensor& fused, const torch::Tensor& text,
                                                         const torch::Tensor& pad_mask) {
  auto tokens = seg_text_attn(grid_to_tokens(fused), text, pad_mask);
  if (options_.use_self_attention) tokens = seg_self_attn(tokens);
  return tokens_to_grid(tokens, fused.size(2), fused.size(3));
}

MimOutput MaskGuidedInteractionImpl::forward(const ProjectedTokens& tokens, const StagePrediction& coarse) {
  const auto gh = tokens.grid_h, gw = tokens.grid_w;
  auto image_grid = tokens.image_grid();
  auto coarse_box = coarse.box.detach();

  MimOutput out;
  out.priors.box_weight =
      build_box_weight(coarse_box, gw, gh, options_.box_weight, options_.invert_box_weight).to(image_grid.dtype());
  out.priors.mask_weight = build_mask_weight(coarse.grid_logits, gh, gw);
  out.features = fuse_constrained_features(image_grid, out.priors.box_weight, out.priors.mask_weight);
  out.box_feature = roi_box_feature(coarse_box, image_grid);
  out.object_feature = box_interaction(out.box_feature, tokens.text_tokens, tokens.text_pad_mask, out.features.fused);
  out.seg_feature = seg_interaction(out.features.fused, tokens.text_tokens, tokens.text_pad_mask);
  return out;
}

}  // namespace c3vg
