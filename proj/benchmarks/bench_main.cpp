#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "c3vg/data.hpp"
#include "c3vg/geometry.hpp"
#include "c3vg/losses.hpp"
#include "c3vg/metrics.hpp"
#include "c3vg/model.hpp"
#include "c3vg/rle.hpp"

using namespace c3vg;

namespace {

ModelConfig bench_model() {
  ModelConfig c;
  c.encoder.width = 128;
  c.encoder.projection_width = 64;
  c.encoder.depth = 4;
  c.encoder.heads = 4;
  c.encoder.vocab_size = 40;
  return c;
}

void BM_BoxGiou(benchmark::State& state) {
  const Box a{0.4, 0.5, 0.3, 0.2}, b{0.45, 0.55, 0.25, 0.3};
  for (auto _ : state) benchmark::DoNotOptimize(box_giou(a, b));
}
BENCHMARK(BM_BoxGiou);

void BM_MaskOverlap(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const auto scene = render_sample(generate_scene(1, n), "b");
  const auto other = render_sample(generate_scene(2, n), "b");
  for (auto _ : state) benchmark::DoNotOptimize(mask_overlap(scene.gold_mask, other.gold_mask));
}
BENCHMARK(BM_MaskOverlap)->Arg(128)->Arg(224);

void BM_RleRoundTrip(benchmark::State& state) {
  const auto mask = render_sample(generate_scene(3, 224), "b").gold_mask;
  for (auto _ : state) benchmark::DoNotOptimize(rle_decode(rle_encode(mask)));
}
BENCHMARK(BM_RleRoundTrip);

void BM_GenerateAndRender(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(render_sample(generate_scene(seed++, 128), "b"));
}
BENCHMARK(BM_GenerateAndRender);

void BM_TotalLoss(benchmark::State& state) {
  torch::manual_seed(0);
  const auto n = state.range(0);
  StagePrediction coarse, fine;
  coarse.box = torch::rand({8, 4});
  fine.box = torch::rand({8, 4});
  coarse.mask_logits = torch::randn({8, n, n});
  fine.mask_logits = torch::randn({8, n, n});
  const auto gold_boxes = torch::rand({8, 4});
  const auto gold_masks = (torch::rand({8, n, n}) > 0.8).to(torch::kFloat32);
  const LossWeights w;
  for (auto _ : state) benchmark::DoNotOptimize(total_loss(coarse, fine, gold_boxes, gold_masks, w, false).total);
}
BENCHMARK(BM_TotalLoss)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_Forward(benchmark::State& state) {
  torch::manual_seed(0);
  const auto n = state.range(0);
  GroundingModel model(bench_model());
  model->eval();
  auto images = torch::rand({8, 3, n, n});
  auto ids = torch::randint(2, 40, {8, 20});
  auto pad = torch::zeros({8, 20}, torch::kBool);
  torch::NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(images, ids, pad).fine.mask_logits);
}
BENCHMARK(BM_Forward)->Arg(128)->Arg(224)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  torch::manual_seed(0);
  GroundingModel model(bench_model());
  model->train();
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(5e-4));
  auto images = torch::rand({8, 3, 128, 128});
  auto ids = torch::randint(2, 40, {8, 20});
  auto pad = torch::zeros({8, 20}, torch::kBool);
  const auto gold_boxes = torch::rand({8, 4}) * 0.5 + 0.25;
  const auto gold_masks = (torch::rand({8, 128, 128}) > 0.8).to(torch::kFloat32);
  const LossWeights w;
  for (auto _ : state) {
    opt.zero_grad();
    auto out = model->forward(images, ids, pad);
    auto loss = total_loss(out.coarse, out.fine, gold_boxes, gold_masks, w, false).total;
    loss.backward();
    opt.step();
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
