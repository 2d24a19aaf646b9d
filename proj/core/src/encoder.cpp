#include "c3vg/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "c3vg/errors.hpp"

namespace c3vg {

torch::Tensor ProjectedTokens::image_grid() const { return tokens_to_grid(image_tokens, grid_h, grid_w); }

torch::Tensor sincos_table(std::int64_t n, std::int64_t dim, bool upper) {
  const auto half = dim / 2;
  const auto quarter = half / 2;
  auto table = torch::zeros({n, dim});
  auto pos = torch::arange(n, torch::kFloat32).unsqueeze(1);
  auto freq = torch::exp(torch::arange(quarter, torch::kFloat32) * (-std::log(100.0) / std::max<std::int64_t>(quarter, 1)));
  auto angle = pos * freq.unsqueeze(0);
  const auto off = upper ? half : 0;
  table.slice(1, off, off + quarter) = torch::sin(angle);
  table.slice(1, off + quarter, off + 2 * quarter) = torch::cos(angle);
  return table;
}

torch::Tensor grid_position_embedding(const torch::Tensor& row_table, const torch::Tensor& col_table, std::int64_t h,
                                      std::int64_t w) {
  auto rows = row_table.slice(0, 0, h).unsqueeze(1);  // [h, 1, D]
  auto cols = col_table.slice(0, 0, w).unsqueeze(0);  // [1, w, D]
  return (rows + cols).reshape({1, h * w, row_table.size(1)});
}

MultiModalEncoderImpl::MultiModalEncoderImpl(const EncoderConfig& config) : config_(config) {
  if (config.width % config.heads != 0) throw BadConfig("encoder width must be divisible by heads");
  if (config.vocab_size < 2) throw BadConfig("vocabulary must contain at least the reserved tokens");
  const std::int64_t c = config.width;
  patch_embed = register_module(
      "patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, c, config.patch_size).stride(config.patch_size)));
  word_embed = register_module("word_embed", torch::nn::Embedding(config.vocab_size, c));
  object_token = register_parameter("object_token", torch::randn({1, 1, c}) * 0.02);
  text_pos = register_parameter("text_pos", torch::randn({1, config.max_text_len, c}) * 0.02);
  image_row_pos = register_parameter("image_row_pos", sincos_table(config.max_grid, c, false));
  image_col_pos = register_parameter("image_col_pos", sincos_table(config.max_grid, c, true));
  for (int i = 0; i < config.depth; ++i) {
    blocks.push_back(register_module("block" + std::to_string(i), EncoderBlock(c, config.heads)));
  }
}

torch::Tensor MultiModalEncoderImpl::embed_image(const torch::Tensor& images) {
  const auto p = config_.patch_size;
  if (images.dim() != 4 || images.size(1) != 3) throw BadImageShape("expected a [B, 3, H, W] image batch");
  const auto h = images.size(2), w = images.size(3);
  if (h % p != 0 || w % p != 0 || h == 0 || w == 0) {
    throw BadImageShape("image " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by patch size " +
                        std::to_string(p));
  }
  if (h / p > config_.max_grid || w / p > config_.max_grid) throw BadImageShape("image exceeds the position table");
  auto tokens = grid_to_tokens(patch_embed(images));
  return tokens + grid_position_embedding(image_row_pos, image_col_pos, h / p, w / p);
}

torch::Tensor MultiModalEncoderImpl::embed_text(const torch::Tensor& text_ids) {
  const auto n = text_ids.size(1);
  if (n > config_.max_text_len) throw BadConfig("text longer than max_text_len");
  return word_embed(text_ids) + text_pos.slice(1, 0, n);
}

TokenBundle MultiModalEncoderImpl::forward(const torch::Tensor& images, const torch::Tensor& text_ids,
                                           const torch::Tensor& text_pad_mask) {
  auto image = embed_image(images);
  auto text = embed_text(text_ids);
  const auto batch = images.size(0);
  const auto n_img = image.size(1), n_txt = text.size(1);

  auto seq = torch::cat({object_token.expand({batch, 1, object_token.size(2)}), image, text}, 1);
  auto pad = torch::cat({torch::zeros({batch, 1 + n_img}, text_pad_mask.options()), text_pad_mask}, 1);
  for (auto& block : blocks) seq = block(seq, pad);

  TokenBundle out;
  out.object_token = seq.slice(1, 0, 1);
  out.image_tokens = seq.slice(1, 1, 1 + n_img);
  out.text_tokens = seq.slice(1, 1 + n_img, 1 + n_img + n_txt);
  out.text_pad_mask = text_pad_mask;
  out.grid_h = images.size(2) / config_.patch_size;
  out.grid_w = images.size(3) / config_.patch_size;
  return out;
}

TokenProjectorImpl::TokenProjectorImpl(std::int64_t in_width, std::int64_t out_width) {
  object_proj = register_module("object_proj", torch::nn::Linear(in_width, out_width));
  text_proj = register_module("text_proj", torch::nn::Linear(in_width, out_width));
  image_proj = register_module("image_proj", torch::nn::Linear(in_width, out_width));
}

ProjectedTokens TokenProjectorImpl::forward(const TokenBundle& bundle) {
  ProjectedTokens out;
  out.object_token = object_proj(bundle.object_token);
  out.text_tokens = text_proj(bundle.text_tokens);
  out.image_tokens = image_proj(bundle.image_tokens);
  out.text_pad_mask = bundle.text_pad_mask;
  out.grid_h = bundle.grid_h;
  out.grid_w = bundle.grid_w;
  return out;
}

}  // namespace c3vg
