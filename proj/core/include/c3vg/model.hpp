#pragma once

#include <torch/torch.h>

#include <vector>

#include "c3vg/encoder.hpp"
#include "c3vg/mim.hpp"
#include "c3vg/rci_head.hpp"
#include "c3vg/rsp_head.hpp"

namespace c3vg {

struct ModelConfig {
  EncoderConfig encoder;
  MimOptions mim;
};

struct PipelineOutput {
  StagePrediction coarse;
  StagePrediction fine;
  ProjectedTokens tokens;
  MimOutput mim;  // priors.box_weight is W_b, priors.mask_weight is W_s
  FeaturePyramid pyramid;
};

// Encoder -> projections -> rough perception -> mask-guided interaction ->
// refined consistency.
class GroundingModelImpl : public torch::nn::Module {
 public:
  explicit GroundingModelImpl(const ModelConfig& config);

  PipelineOutput forward(const torch::Tensor& images, const torch::Tensor& text_ids, const torch::Tensor& text_pad_mask);

  // The two optimizer groups; together they cover every parameter once.
  std::vector<torch::Tensor> encoder_parameters() const;
  std::vector<torch::Tensor> head_parameters() const;

  const ModelConfig& config() const { return config_; }

  MultiModalEncoder encoder{nullptr};
  TokenProjector projector{nullptr};
  RoughPerceptionHead rsp{nullptr};
  MaskGuidedInteraction mim{nullptr};
  RefinedConsistencyHead rci{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(GroundingModel);

}  // namespace c3vg
