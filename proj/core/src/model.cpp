#include "c3vg/model.hpp"

namespace c3vg {

GroundingModelImpl::GroundingModelImpl(const ModelConfig& config) : config_(config) {
  const auto& e = config.encoder;
  const std::int64_t d = e.projection_width;
  encoder = register_module("encoder", MultiModalEncoder(e));
  projector = register_module("projector", TokenProjector(e.width, d));
  rsp = register_module("rsp", RoughPerceptionHead(d, e.heads, e.max_text_len, e.max_grid));
  mim = register_module("mim", MaskGuidedInteraction(d, e.heads, config.mim));
  rci = register_module("rci", RefinedConsistencyHead(d));
}

PipelineOutput GroundingModelImpl::forward(const torch::Tensor& images, const torch::Tensor& text_ids,
                                           const torch::Tensor& text_pad_mask) {
  const auto h = images.size(2), w = images.size(3);
  PipelineOutput out;
  out.tokens = projector->forward(encoder->forward(images, text_ids, text_pad_mask));
  auto rough = rsp->forward(out.tokens, h, w);
  out.coarse = rough.prediction;
  out.mim = mim->forward(out.tokens, out.coarse);
  auto refined = rci->forward(out.mim, out.tokens, h, w);
  out.fine = refined.prediction;
  out.pyramid = refined.pyramid;
  return out;
}

std::vector<torch::Tensor> GroundingModelImpl::encoder_parameters() const { return encoder->parameters(); }

std::vector<torch::Tensor> GroundingModelImpl::head_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto* m : std::initializer_list<const torch::nn::Module*>{projector.get(), rsp.get(), mim.get(), rci.get()}) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace c3vg
