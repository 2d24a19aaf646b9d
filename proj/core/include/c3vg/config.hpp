#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "c3vg/encoder.hpp"
#include "c3vg/losses.hpp"
#include "c3vg/mim.hpp"

namespace c3vg {

struct OptimizerConfig {
  std::string name = "adam";
  double lr_encoder = 5e-4;
  double lr_heads = 5e-4;
  std::array<double, 2> betas{0.9, 0.999};
  double weight_decay = 0.0;
};

struct ScheduleConfig {
  int epochs = 30;
  int decay_epoch = 25;  // epochs after this one run at the decayed rate
  double decay_factor = 0.1;
};

struct TrainFlags {
  bool invert_box_weight = false;
  bool bcc_on_coarse = false;
  bool pretrained_style_lr = false;  // encoder lr 5e-5 unless set explicitly
};

struct TrainConfig {
  EncoderConfig model;  // vocab_size is filled from the training data
  std::int64_t roi_size = 7;
  bool use_self_attention = true;
  LossWeights weights;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  int batch_size = 16;
  int image_size = 224;
  int max_shift_px = 0;  // random whole-scene translation during training; 0 disables
  std::uint64_t seed = 0;
  TrainFlags flags;

  MimOptions mim_options() const;
  // Throws BadConfig.
  void validate() const;
  std::string to_json() const;
  // Strict: unknown keys, wrong types and invalid values throw BadConfig.
  static TrainConfig from_json(const std::string& text);
};

TrainConfig load_config(const std::filesystem::path& path);

// Rate for a 1-based epoch under the step schedule.
double lr_at_epoch(double base_lr, int epoch, const ScheduleConfig& schedule);

}  // namespace c3vg
