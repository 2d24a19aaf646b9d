#pragma once

#include <torch/torch.h>

#include "c3vg/encoder.hpp"
#include "c3vg/layers.hpp"

namespace c3vg {

enum class Stage { kCoarse, kFine };

struct StagePrediction {
  torch::Tensor box;          // [B, 4] (cx, cy, w, h), sigmoid-bounded
  torch::Tensor mask_logits;  // [B, H, W] at image resolution
  torch::Tensor grid_logits;  // [B, h, w] before upsampling
  Stage stage = Stage::kCoarse;
};

// Object-token refinement: text cross-attention, concat + MLP back to D,
// then image cross-attention.
class QueryDecoderImpl : public torch::nn::Module {
 public:
  QueryDecoderImpl(std::int64_t dim, std::int64_t heads, std::int64_t max_text_len, std::int64_t max_grid);

  torch::Tensor forward(const ProjectedTokens& tokens);  // -> [B, 1, D]

  // pos_2d for an h x w grid, [1, h*w, D].
  torch::Tensor image_position(std::int64_t h, std::int64_t w) const;

  torch::Tensor query_init, text_pos, image_row_pos, image_col_pos;
  CrossAttention text_attn{nullptr}, image_attn{nullptr};
  Mlp fuse{nullptr};
};
TORCH_MODULE(QueryDecoder);

// 3-layer MLP -> 4 logits -> sigmoid.
class BoxHeadImpl : public torch::nn::Module {
 public:
  explicit BoxHeadImpl(std::int64_t dim);
  torch::Tensor forward(const torch::Tensor& feature);  // [B, 1, D] or [B, D] -> [B, 4]

  Mlp mlp{nullptr};
};
TORCH_MODULE(BoxHead);

// Text-to-pixel correlation: logit(p) = <f_p, s> / sqrt(D) + b, where s is a
// 1x1 projection of the masked-mean sentence feature.
class PixelDecoderImpl : public torch::nn::Module {
 public:
  explicit PixelDecoderImpl(std::int64_t dim);
  torch::Tensor sentence_feature(const torch::Tensor& text, const torch::Tensor& pad_mask);
  // pixels [B, D, h, w] -> logits [B, h, w]
  torch::Tensor forward(const torch::Tensor& pixels, const torch::Tensor& text, const torch::Tensor& pad_mask);

  torch::nn::Conv1d sentence_proj{nullptr};
  torch::Tensor bias;
};
TORCH_MODULE(PixelDecoder);

// Bilinear (align_corners = false) resize of [B, h, w] logits to [B, H, W].
torch::Tensor upsample_mask(const torch::Tensor& logits, std::int64_t height, std::int64_t width);

struct RoughPerception {
  StagePrediction prediction;
  torch::Tensor object_feature;  // T_c, [B, 1, D]
};

class RoughPerceptionHeadImpl : public torch::nn::Module {
 public:
  RoughPerceptionHeadImpl(std::int64_t dim, std::int64_t heads, std::int64_t max_text_len, std::int64_t max_grid);
  RoughPerception forward(const ProjectedTokens& tokens, std::int64_t image_h, std::int64_t image_w);

  QueryDecoder query_decoder{nullptr};
  BoxHead box_head{nullptr};
  PixelDecoder pixel_decoder{nullptr};
};
TORCH_MODULE(RoughPerceptionHead);

}  // namespace c3vg
