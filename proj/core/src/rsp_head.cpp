#include "c3vg/rsp_head.hpp"

#include <cmath>

namespace c3vg {

namespace F = torch::nn::functional;

QueryDecoderImpl::QueryDecoderImpl(std::int64_t dim, std::int64_t heads, std::int64_t max_text_len,
                                   std::int64_t max_grid) {
  query_init = register_parameter("query_init", torch::randn({1, 1, dim}) * 0.02);
  text_pos = register_parameter("text_pos", torch::randn({1, max_text_len, dim}) * 0.02);
  image_row_pos = register_parameter("image_row_pos", sincos_table(max_grid, dim, false));
  image_col_pos = register_parameter("image_col_pos", sincos_table(max_grid, dim, true));
  text_attn = register_module("text_attn", CrossAttention(dim, heads));
  fuse = register_module("fuse", Mlp(2 * dim, dim, dim, 2));
  image_attn = register_module("image_attn", CrossAttention(dim, heads));
}

torch::Tensor QueryDecoderImpl::image_position(std::int64_t h, std::int64_t w) const {
  return grid_position_embedding(image_row_pos, image_col_pos, h, w);
}

torch::Tensor QueryDecoderImpl::forward(const ProjectedTokens& tokens) {
  const auto& obj = tokens.object_token;
  const auto n_txt = tokens.text_tokens.size(1);
  auto text_ctx = tokens.text_tokens + text_pos.slice(1, 0, n_txt);
  auto attended = text_attn(obj + query_init, text_ctx, tokens.text_pad_mask);
  auto fused = fuse(torch::cat({obj, attended}, -1));
  auto image_ctx = tokens.image_tokens + image_position(tokens.grid_h, tokens.grid_w);
  return image_attn(fused, image_ctx);
}

BoxHeadImpl::BoxHeadImpl(std::int64_t dim) { mlp = register_module("mlp", Mlp(dim, dim, 4, 3)); }

torch::Tensor BoxHeadImpl::forward(const torch::Tensor& feature) {
  auto x = feature.dim() == 3 ? feature.squeeze(1) : feature;
  return torch::sigmoid(mlp(x));
}

PixelDecoderImpl::PixelDecoderImpl(std::int64_t dim) {
  sentence_proj = register_module("sentence_proj", torch::nn::Conv1d(torch::nn::Conv1dOptions(dim, dim, 1).padding(0)));
  bias = register_parameter("bias", torch::zeros({1}));
}

torch::Tensor PixelDecoderImpl::sentence_feature(const torch::Tensor& text, const torch::Tensor& pad_mask) {
  auto sentence = masked_mean(text, pad_mask).unsqueeze(-1);  // [B, D, 1]
  return sentence_proj(sentence).squeeze(-1);
}

torch::Tensor PixelDecoderImpl::forward(const torch::Tensor& pixels, const torch::Tensor& text,
                                        const torch::Tensor& pad_mask) {
  const auto dim = pixels.size(1);
  auto s = sentence_feature(text, pad_mask);  // [B, D]
  auto logits = torch::einsum("bdhw,bd->bhw", {pixels, s}) / std::sqrt(static_cast<double>(dim));
  return logits + bias;
}

torch::Tensor upsample_mask(const torch::Tensor& logits, std::int64_t height, std::int64_t width) {
  if (logits.size(1) == height && logits.size(2) == width) return logits;
  auto out = F::interpolate(logits.unsqueeze(1), F::InterpolateFuncOptions()
                                                     .size(std::vector<std::int64_t>{height, width})
                                                     .mode(torch::kBilinear)
                                                     .align_corners(false));
  return out.squeeze(1);
}

RoughPerceptionHeadImpl::RoughPerceptionHeadImpl(std::int64_t dim, std::int64_t heads, std::int64_t max_text_len,
                                                 std::int64_t max_grid) {
  query_decoder = register_module("query_decoder", QueryDecoder(dim, heads, max_text_len, max_grid));
  box_head = register_module("box_head", BoxHead(dim));
  pixel_decoder = register_module("pixel_decoder", PixelDecoder(dim));
}

RoughPerception RoughPerceptionHeadImpl::forward(const ProjectedTokens& tokens, std::int64_t image_h,
                                                 std::int64_t image_w) {
  RoughPerception out;
  out.object_feature = query_decoder(tokens);
  out.prediction.stage = Stage::kCoarse;
  out.prediction.box = box_head(out.object_feature);
  out.prediction.grid_logits = pixel_decoder(tokens.image_grid(), tokens.text_tokens, tokens.text_pad_mask);
  out.prediction.mask_logits = upsample_mask(out.prediction.grid_logits, image_h, image_w);
  return out;
}

}  // namespace c3vg
