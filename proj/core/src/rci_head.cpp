#include "c3vg/rci_head.hpp"

#include "c3vg/errors.hpp"

namespace c3vg {

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace {

nn::ConvTranspose2d up2(std::int64_t dim) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(dim, dim, 2).stride(2));
}

nn::Sequential norm_project(std::int64_t dim) {
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(dim, dim, 1).bias(false)), nn::BatchNorm2d(dim));
}

torch::Tensor resize_to(const torch::Tensor& x, const torch::Tensor& like) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{like.size(2), like.size(3)})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

SimpleFeaturePyramidImpl::SimpleFeaturePyramidImpl(std::int64_t dim) {
  up4 = register_module("up4", nn::Sequential(up2(dim), nn::BatchNorm2d(dim), nn::GELU(), up2(dim)));
  up8 = register_module("up8", nn::Sequential(up2(dim)));
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    outputs[i] = register_module("out" + std::to_string(i), norm_project(dim));
  }
}

FeaturePyramid SimpleFeaturePyramidImpl::forward(const torch::Tensor& features) {
  if (features.size(2) < 2 || features.size(3) < 2) {
    throw GridTooSmall("feature grid " + std::to_string(features.size(2)) + "x" + std::to_string(features.size(3)) +
                       " cannot be downsampled to 1/32");
  }
  FeaturePyramid p;
  p.levels[0] = outputs[0]->forward(up4->forward(features));
  p.levels[1] = outputs[1]->forward(up8->forward(features));
  p.levels[2] = outputs[2]->forward(features);
  p.levels[3] = outputs[3]->forward(F::max_pool2d(features, F::MaxPool2dFuncOptions(2).stride(2)));
  return p;
}

ConvModuleImpl::ConvModuleImpl(std::int64_t in, std::int64_t out) {
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)));
  norm = register_module("norm", nn::BatchNorm2d(out));
}

torch::Tensor ConvModuleImpl::forward(const torch::Tensor& x) { return torch::relu(norm(conv(x))); }

UNetDecoderImpl::UNetDecoderImpl(std::int64_t dim) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto in = i == 0 ? dim : 2 * dim;
    stages[i] = register_module("stage" + std::to_string(i), nn::Sequential(ConvModule(in, dim), ConvModule(dim, dim)));
  }
}

torch::Tensor UNetDecoderImpl::forward(const FeaturePyramid& pyramid) {
  // stages[0] runs on the coarsest (1/32) level, stages[3] on the 1/4 level.
  auto x = pyramid.levels[3];
  torch::Tensor out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    out = stages[i]->forward(x);
    if (i + 1 == stages.size()) break;
    const auto& finer = pyramid.levels[2 - i];
    x = torch::cat({resize_to(out, finer), finer}, 1);
  }
  return out;
}

RefinedConsistencyHeadImpl::RefinedConsistencyHeadImpl(std::int64_t dim) {
  pyramid = register_module("pyramid", SimpleFeaturePyramid(dim));
  decoder = register_module("decoder", UNetDecoder(dim));
  pixel_decoder = register_module("pixel_decoder", PixelDecoder(dim));
  box_head = register_module("box_head", BoxHead(dim));
}

torch::Tensor RefinedConsistencyHeadImpl::fine_pixel_decode(const torch::Tensor& decoded, const torch::Tensor& text,
                                                            const torch::Tensor& pad_mask, std::int64_t image_h,
                                                            std::int64_t image_w, torch::Tensor* grid_logits) {
  auto logits = pixel_decoder(decoded, text, pad_mask);
  if (grid_logits) *grid_logits = logits;
  return upsample_mask(logits, image_h, image_w);
}

RefinedConsistency RefinedConsistencyHeadImpl::forward(const MimOutput& mim, const ProjectedTokens& tokens,
                                                       std::int64_t image_h, std::int64_t image_w) {
  RefinedConsistency out;
  out.pyramid = pyramid(mim.seg_feature);
  out.decoded = decoder(out.pyramid);
  out.prediction.stage = Stage::kFine;
  out.prediction.mask_logits = fine_pixel_decode(out.decoded, tokens.text_tokens, tokens.text_pad_mask, image_h,
                                                 image_w, &out.prediction.grid_logits);
  out.prediction.box = box_head(mim.object_feature);
  return out;
}

}  // namespace c3vg
