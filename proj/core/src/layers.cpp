#include "c3vg/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace c3vg {

namespace F = torch::nn::functional;

MultiHeadAttentionImpl::MultiHeadAttentionImpl(std::int64_t dim, std::int64_t heads)
    : heads_(heads), head_dim_(dim / heads) {
  if (dim % heads != 0) throw std::invalid_argument("attention width must be divisible by head count");
  q_proj = register_module("q_proj", torch::nn::Linear(dim, dim));
  k_proj = register_module("k_proj", torch::nn::Linear(dim, dim));
  v_proj = register_module("v_proj", torch::nn::Linear(dim, dim));
  out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key,
                                              const torch::Tensor& value, const torch::Tensor& key_padding_mask) {
  const auto batch = query.size(0);
  auto split = [&](const torch::Tensor& t) {
    return t.view({batch, t.size(1), heads_, head_dim_}).transpose(1, 2);
  };
  auto q = split(q_proj(query));
  auto k = split(k_proj(key));
  auto v = split(v_proj(value));
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim_));
  if (key_padding_mask.defined()) {
    scores = scores.masked_fill(key_padding_mask.view({batch, 1, 1, key.size(1)}),
                                -std::numeric_limits<double>::infinity());
  }
  auto out = torch::matmul(torch::softmax(scores, -1), v);
  out = out.transpose(1, 2).contiguous().view({batch, query.size(1), heads_ * head_dim_});
  return out_proj(out);
}

CrossAttentionImpl::CrossAttentionImpl(std::int64_t dim, std::int64_t heads) {
  norm_q = register_module("norm_q", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  norm_kv = register_module("norm_kv", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn = register_module("attn", MultiHeadAttention(dim, heads));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& context,
                                          const torch::Tensor& key_padding_mask) {
  auto kv = norm_kv(context);
  return query + attn(norm_q(query), kv, kv, key_padding_mask);
}

SelfAttentionImpl::SelfAttentionImpl(std::int64_t dim, std::int64_t heads) {
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn = register_module("attn", MultiHeadAttention(dim, heads));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& key_padding_mask) {
  auto h = norm(x);
  return x + attn(h, h, h, key_padding_mask);
}

MlpImpl::MlpImpl(std::int64_t in, std::int64_t hidden, std::int64_t out, int num_layers) {
  for (int i = 0; i < num_layers; ++i) {
    const auto fan_in = i == 0 ? in : hidden;
    const auto fan_out = i + 1 == num_layers ? out : hidden;
    layers.push_back(register_module("fc" + std::to_string(i), torch::nn::Linear(fan_in, fan_out)));
  }
}

torch::Tensor MlpImpl::forward(torch::Tensor x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (i + 1 < layers.size()) x = torch::relu(x);
  }
  return x;
}

EncoderBlockImpl::EncoderBlockImpl(std::int64_t dim, std::int64_t heads, std::int64_t mlp_ratio) {
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn = register_module("attn", MultiHeadAttention(dim, heads));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  fc1 = register_module("fc1", torch::nn::Linear(dim, dim * mlp_ratio));
  fc2 = register_module("fc2", torch::nn::Linear(dim * mlp_ratio, dim));
}

torch::Tensor EncoderBlockImpl::forward(torch::Tensor x, const torch::Tensor& key_padding_mask) {
  auto h = norm1(x);
  x = x + attn(h, h, h, key_padding_mask);
  return x + fc2(F::gelu(fc1(norm2(x))));
}

torch::Tensor grid_to_tokens(const torch::Tensor& grid) { return grid.flatten(2).transpose(1, 2); }

torch::Tensor tokens_to_grid(const torch::Tensor& tokens, std::int64_t height, std::int64_t width) {
  return tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), height, width});
}

torch::Tensor masked_mean(const torch::Tensor& tokens, const torch::Tensor& pad_mask) {
  auto keep = (~pad_mask).to(tokens.dtype()).unsqueeze(-1);
  return (tokens * keep).sum(1) / keep.sum(1).clamp_min(1.0);
}

}  // namespace c3vg
