#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c3vg/config.hpp"
#include "c3vg/data.hpp"
#include "c3vg/losses.hpp"
#include "c3vg/metrics.hpp"
#include "c3vg/model.hpp"
#include "c3vg/text.hpp"

namespace c3vg {

struct Batch {
  torch::Tensor images;      // [B, 3, H, W] in [0, 1]
  torch::Tensor text_ids;    // [B, L] int64
  torch::Tensor text_pad;    // [B, L] bool
  torch::Tensor gold_boxes;  // [B, 4]
  torch::Tensor gold_masks;  // [B, H, W] in {0, 1}
  std::vector<std::string> ids;
};

Batch make_batch(std::span<const GroundingSample* const> samples, const Vocabulary& vocab, int max_text_len);

// Translates each scene by up to max_shift pixels per axis, never pushing
// content (pixels that differ from the top-left background colour) out of
// frame. Boxes and masks move with it; uncovered pixels take the background.
void shift_augment(Batch& batch, int max_shift, std::uint64_t seed);

torch::Tensor image_to_tensor(const Image& image);  // [3, H, W]
Box box_from_tensor(const torch::Tensor& box);      // [4]
BinaryMask mask_from_logits(const torch::Tensor& logits);  // [H, W], cell = logit > 0

GroundingModel build_model(const TrainConfig& config, std::int64_t vocab_size);

struct LoadedModel {
  TrainConfig config;
  Vocabulary vocab;
  GroundingModel model{nullptr};
  int epoch = 0;
};

// Writes <path> (module archive) and the <path>.json sidecar.
void save_checkpoint(const std::filesystem::path& path, GroundingModel& model, const TrainConfig& config,
                     const Vocabulary& vocab, int epoch, const std::optional<MetricReport>& metrics);
// Throws Error(bad_input) for a missing or unreadable checkpoint.
LoadedModel load_checkpoint(const std::filesystem::path& path);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // a "last" checkpoint written by train
  std::function<void(const std::string&)> progress;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::vector<LossReport> step_losses;   // steps run by this call
  std::vector<MetricReport> epoch_metrics;
  double seconds = 0.0;
};

// Reads data_root/train and data_root/val. Writes train_log.jsonl,
// val_metrics.jsonl, best.pt and last.pt (with sidecars and optimizer state)
// under out_dir. Throws NanLoss on a non-finite loss after writing
// nan_batch.json.
TrainResult train(const TrainConfig& config, const std::filesystem::path& data_root,
                  const std::filesystem::path& out_dir, const TrainOptions& options = {});

using BatchPredictor = std::function<std::vector<std::pair<Box, BinaryMask>>(const Batch&)>;

BatchPredictor model_predictor(GroundingModel& model, Stage stage);
MetricReport evaluate_samples(std::span<const GroundingSample> samples, const Vocabulary& vocab, int max_text_len,
                              int batch_size, const BatchPredictor& predict);
// Throws EmptyEvaluation when the split is missing or empty.
MetricReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                      const std::string& split, Stage stage = Stage::kFine);

PipelineOutput run_single(LoadedModel& loaded, const Image& image, const std::string& expression);

struct Prediction {
  Box box;
  BinaryMask mask;
};
Prediction predict(LoadedModel& loaded, const Image& image, const std::string& expression);
// {"box_cxcywh": [...], "mask_rle": {"size": [H, W], "counts": [...]}}
std::string prediction_json(const Prediction& prediction);

// Names of the files written by inspect, in order.
inline constexpr std::array<const char*, 6> kInspectFiles{"coarse_mask.png", "fine_mask.png", "box_weight.png",
                                                          "mask_weight.png", "coarse_box.png", "fine_box.png"};
std::vector<std::filesystem::path> inspect(LoadedModel& loaded, const Image& image, const std::string& expression,
                                           const std::filesystem::path& out_dir);

// Refuses a non-empty out_dir unless force is set.
void generate_data(const std::filesystem::path& out_dir, std::size_t n_train, std::size_t n_val, int image_size,
                   std::uint64_t seed, bool force);

}  // namespace c3vg
