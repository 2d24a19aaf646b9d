#pragma once

#include <torch/torch.h>

#include "c3vg/layers.hpp"

namespace c3vg {

struct EncoderConfig {
  int patch_size = 16;
  int width = 128;             // encoder width C
  int projection_width = 64;   // head width D
  int depth = 4;
  int heads = 4;
  int vocab_size = 0;
  int max_text_len = 20;
  int max_grid = 32;           // largest supported image side / patch_size
};

// Encoder output split back into its three token groups.
struct TokenBundle {
  torch::Tensor object_token;   // [B, 1, C]
  torch::Tensor text_tokens;    // [B, Nt, C]
  torch::Tensor image_tokens;   // [B, Ni, C], row-major over the patch grid
  torch::Tensor text_pad_mask;  // [B, Nt] bool, true at padding
  std::int64_t grid_h = 0;
  std::int64_t grid_w = 0;
};

// The same groups after the three unshared projections to width D.
struct ProjectedTokens {
  torch::Tensor object_token;  // [B, 1, D]
  torch::Tensor text_tokens;   // [B, Nt, D]
  torch::Tensor image_tokens;  // [B, Ni, D]
  torch::Tensor text_pad_mask;
  std::int64_t grid_h = 0;
  std::int64_t grid_w = 0;

  // Image tokens as a [B, D, grid_h, grid_w] feature map.
  torch::Tensor image_grid() const;
};

// One-stream transformer over [object token | image patches | text tokens].
class MultiModalEncoderImpl : public torch::nn::Module {
 public:
  explicit MultiModalEncoderImpl(const EncoderConfig& config);

  // [B, 3, H, W] -> [B, N_i, C] with 2-D position embeddings added.
  // Throws BadImageShape when H or W is not a multiple of the patch size.
  torch::Tensor embed_image(const torch::Tensor& images);
  // [B, Nt] ids -> [B, Nt, C] with 1-D position embeddings added.
  torch::Tensor embed_text(const torch::Tensor& text_ids);

  TokenBundle forward(const torch::Tensor& images, const torch::Tensor& text_ids, const torch::Tensor& text_pad_mask);

  const EncoderConfig& config() const { return config_; }

  torch::nn::Conv2d patch_embed{nullptr};
  torch::nn::Embedding word_embed{nullptr};
  torch::Tensor object_token, text_pos, image_row_pos, image_col_pos;
  std::vector<EncoderBlock> blocks;

 private:
  EncoderConfig config_;
};
TORCH_MODULE(MultiModalEncoder);

class TokenProjectorImpl : public torch::nn::Module {
 public:
  TokenProjectorImpl(std::int64_t in_width, std::int64_t out_width);
  ProjectedTokens forward(const TokenBundle& bundle);

  torch::nn::Linear object_proj{nullptr}, text_proj{nullptr}, image_proj{nullptr};
};
TORCH_MODULE(TokenProjector);

// Learned factorized row/column embedding for an h x w grid, flattened
// row-major: [1, h*w, D].
// Sinusoidal [n, dim] table over half of the channels (the first half, or
// the second when `upper`); the other half is zero. Row and column tables
// built this way sum to a concatenated 2-D code. Used only as an init.
torch::Tensor sincos_table(std::int64_t n, std::int64_t dim, bool upper);
torch::Tensor grid_position_embedding(const torch::Tensor& row_table, const torch::Tensor& col_table, std::int64_t h,
                                      std::int64_t w);

}  // namespace c3vg
