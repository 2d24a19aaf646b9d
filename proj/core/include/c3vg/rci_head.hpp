#pragma once

#include <array>

#include <torch/torch.h>

#include "c3vg/mim.hpp"
#include "c3vg/rsp_head.hpp"

namespace c3vg {

// Levels at 1/4, 1/8, 1/16 and 1/32 of the image, finest first.
struct FeaturePyramid {
  std::array<torch::Tensor, 4> levels;
};

// Builds the four-scale pyramid from the single 1/16 feature map.
class SimpleFeaturePyramidImpl : public torch::nn::Module {
 public:
  explicit SimpleFeaturePyramidImpl(std::int64_t dim);
  // Throws GridTooSmall when the 1/16 grid is under 2x2.
  FeaturePyramid forward(const torch::Tensor& features);

  torch::nn::Sequential up4{nullptr}, up8{nullptr};
  std::array<torch::nn::Sequential, 4> outputs;
};
TORCH_MODULE(SimpleFeaturePyramid);

// Conv3x3 + BatchNorm + ReLU.
class ConvModuleImpl : public torch::nn::Module {
 public:
  ConvModuleImpl(std::int64_t in, std::int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};
};
TORCH_MODULE(ConvModule);

// Coarse-to-fine fusion: o = ConvModule^2(x); x = [Up(o), next finer level].
// Returns the final output at the 1/4 level.
class UNetDecoderImpl : public torch::nn::Module {
 public:
  explicit UNetDecoderImpl(std::int64_t dim);
  torch::Tensor forward(const FeaturePyramid& pyramid);

  std::array<torch::nn::Sequential, 4> stages;
};
TORCH_MODULE(UNetDecoder);

struct RefinedConsistency {
  StagePrediction prediction;
  FeaturePyramid pyramid;
  torch::Tensor decoded;  // [B, D, H/4, W/4]
};

class RefinedConsistencyHeadImpl : public torch::nn::Module {
 public:
  explicit RefinedConsistencyHeadImpl(std::int64_t dim);

  // Correlation at the 1/4 level, then bilinear upsampling to image size.
  torch::Tensor fine_pixel_decode(const torch::Tensor& decoded, const torch::Tensor& text, const torch::Tensor& pad_mask,
                                  std::int64_t image_h, std::int64_t image_w, torch::Tensor* grid_logits = nullptr);

  RefinedConsistency forward(const MimOutput& mim, const ProjectedTokens& tokens, std::int64_t image_h,
                             std::int64_t image_w);

  SimpleFeaturePyramid pyramid{nullptr};
  UNetDecoder decoder{nullptr};
  PixelDecoder pixel_decoder{nullptr};
  BoxHead box_head{nullptr};
};
TORCH_MODULE(RefinedConsistencyHead);

}  // namespace c3vg
