#pragma once

#include <torch/torch.h>

namespace c3vg {

// Multi-head scaled dot-product attention with separate q/k/v/out maps.
// key_padding_mask is [B, Lk] bool, true where the key must be ignored.
class MultiHeadAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadAttentionImpl(std::int64_t dim, std::int64_t heads);

  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& value,
                        const torch::Tensor& key_padding_mask = {});

  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

 private:
  std::int64_t heads_;
  std::int64_t head_dim_;
};
TORCH_MODULE(MultiHeadAttention);

// MCA(q, kv) = q + Attn(LN(q), LN(kv)); kv serves as both key and value.
class CrossAttentionImpl : public torch::nn::Module {
 public:
  CrossAttentionImpl(std::int64_t dim, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& context,
                        const torch::Tensor& key_padding_mask = {});

  MultiHeadAttention attn{nullptr};

 private:
  torch::nn::LayerNorm norm_q{nullptr}, norm_kv{nullptr};
};
TORCH_MODULE(CrossAttention);

// MSA(x) = x + Attn(LN(x), LN(x)).
class SelfAttentionImpl : public torch::nn::Module {
 public:
  SelfAttentionImpl(std::int64_t dim, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& key_padding_mask = {});

  MultiHeadAttention attn{nullptr};

 private:
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(SelfAttention);

// Stack of Linear layers with ReLU between them (none after the last).
class MlpImpl : public torch::nn::Module {
 public:
  MlpImpl(std::int64_t in, std::int64_t hidden, std::int64_t out, int num_layers);
  torch::Tensor forward(torch::Tensor x);

  std::vector<torch::nn::Linear> layers;
};
TORCH_MODULE(Mlp);

// Pre-norm transformer block used by the multimodal encoder.
class EncoderBlockImpl : public torch::nn::Module {
 public:
  EncoderBlockImpl(std::int64_t dim, std::int64_t heads, std::int64_t mlp_ratio = 4);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& key_padding_mask = {});

  MultiHeadAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(EncoderBlock);

// [B, C, H, W] <-> [B, H*W, C]
torch::Tensor grid_to_tokens(const torch::Tensor& grid);
torch::Tensor tokens_to_grid(const torch::Tensor& tokens, std::int64_t height, std::int64_t width);

// Mean over the non-padded text positions: [B, L, D] -> [B, D].
torch::Tensor masked_mean(const torch::Tensor& tokens, const torch::Tensor& pad_mask);

}  // namespace c3vg
