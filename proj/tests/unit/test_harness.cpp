#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "c3vg/errors.hpp"
#include "c3vg/rle.hpp"
#include "c3vg/trainer.hpp"

using namespace c3vg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("c3vg_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig tiny_config(int epochs) {
  auto c = TrainConfig::from_json(R"({
    "model": {"width": 32, "projection_width": 32, "depth": 1, "heads": 2},
    "batch_size": 8, "image_size": 64, "seed": 5})");
  c.schedule.epochs = epochs;
  c.schedule.decay_epoch = 1;
  return c;
}

// Shared dataset and a short run that several tests look at.
class TrainedFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new fs::path(scratch("data"));
    out_ = new fs::path(scratch("run"));
    generate_data(*data_, 32, 8, 64, 123, false);
    result_ = new TrainResult(train(tiny_config(2), *data_, *out_));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete out_;
    delete result_;
  }
  static fs::path* data_;
  static fs::path* out_;
  static TrainResult* result_;
};
fs::path* TrainedFixture::data_ = nullptr;
fs::path* TrainedFixture::out_ = nullptr;
TrainResult* TrainedFixture::result_ = nullptr;

}  // namespace

TEST(GenerateData, LayoutAndMeta) {
  const auto dir = scratch("gen");
  generate_data(dir, 8, 4, 64, 1, false);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir / "train/images")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 8u);
  const auto meta = json::parse(slurp(dir / "meta.json"));
  EXPECT_EQ(meta.at("seed"), 1);
  EXPECT_EQ(meta.at("count"), 12);
  EXPECT_EQ(meta.at("image_size"), 64);
  EXPECT_EQ(meta.at("grammar_version"), kGrammarVersion);
  std::set<std::string> ids, images;
  for (const char* split : {"train", "val"}) {
    std::ifstream in(dir / split / "annotations.jsonl");
    for (std::string line; std::getline(in, line);) {
      const auto rec = json::parse(line);
      EXPECT_TRUE(ids.insert(rec.at("id").get<std::string>()).second);
      EXPECT_TRUE(images.insert(rec.at("image").get<std::string>() + split).second);
    }
  }
  EXPECT_EQ(ids.size(), 12u);
}

TEST(GenerateData, DeterministicAndRefusesToOverwrite) {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  generate_data(a, 6, 2, 64, 77, false);
  generate_data(b, 6, 2, 64, 77, false);
  EXPECT_EQ(slurp(a / "train/annotations.jsonl"), slurp(b / "train/annotations.jsonl"));
  EXPECT_EQ(slurp(a / "val/annotations.jsonl"), slurp(b / "val/annotations.jsonl"));
  EXPECT_THROW(generate_data(a, 6, 2, 64, 77, false), Error);
  EXPECT_NO_THROW(generate_data(a, 3, 1, 64, 78, true));
  EXPECT_NE(slurp(a / "train/annotations.jsonl"), slurp(b / "train/annotations.jsonl"));
  EXPECT_THROW(generate_data(scratch("gen_c"), 1, 1, 50, 1, false), BadImageShape);
}

TEST_F(TrainedFixture, WritesCheckpointsAndLogs) {
  EXPECT_TRUE(fs::exists(result_->best_checkpoint));
  EXPECT_TRUE(fs::exists(result_->last_checkpoint));
  EXPECT_TRUE(fs::exists(fs::path(result_->last_checkpoint.string() + ".json")));
  EXPECT_EQ(result_->step_losses.size(), 8u);
  EXPECT_EQ(result_->epoch_metrics.size(), 2u);
  std::size_t lines = 0;
  std::ifstream log(*out_ / "train_log.jsonl");
  for (std::string line; std::getline(log, line); ++lines) {
    const auto j = json::parse(line);
    EXPECT_TRUE(j.contains("total"));
    EXPECT_TRUE(j.contains("lr_encoder"));
  }
  EXPECT_EQ(lines, 8u);
  std::ifstream val(*out_ / "val_metrics.jsonl");
  std::size_t epochs = 0;
  for (std::string line; std::getline(val, line); ++epochs) EXPECT_TRUE(json::parse(line).contains("miou"));
  EXPECT_EQ(epochs, 2u);
  const auto first = json::parse(slurp(*out_ / "train_log.jsonl").substr(0, slurp(*out_ / "train_log.jsonl").find('\n')));
  EXPECT_DOUBLE_EQ(first.at("lr_encoder").get<double>(), 5e-4);
  // Training runs in float32; the parts recombine to the logged total.
  EXPECT_NEAR(result_->step_losses.back().recompute_total(tiny_config(2).weights), result_->step_losses.back().total,
              1e-5);
}

TEST_F(TrainedFixture, CheckpointRoundTrip) {
  auto a = load_checkpoint(result_->last_checkpoint);
  auto b = load_checkpoint(result_->last_checkpoint);
  EXPECT_EQ(a.epoch, 2);
  EXPECT_EQ(a.config.to_json(), tiny_config(2).to_json());
  const auto image = read_png(*data_ / "val/images/val-000000.png");
  const auto pa = run_single(a, image, "the red circle");
  const auto pb = run_single(b, image, "the red circle");
  EXPECT_TRUE(torch::equal(pa.fine.box, pb.fine.box));
  EXPECT_TRUE(torch::equal(pa.fine.mask_logits, pb.fine.mask_logits));
  EXPECT_THROW(load_checkpoint(*out_ / "missing.pt"), Error);
}

TEST_F(TrainedFixture, EvaluateRanges) {
  for (auto stage : {Stage::kCoarse, Stage::kFine}) {
    const auto r = evaluate(result_->best_checkpoint, *data_, "val", stage);
    EXPECT_EQ(r.n_samples, 8u);
    for (double v : {r.prec_at_05, r.acc_ris, r.miou, r.oiou, r.consistency_rate}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(evaluate(result_->best_checkpoint, *data_, "test", Stage::kFine), EmptyEvaluation);
}

TEST_F(TrainedFixture, ResumeReproducesTheNextStep) {
  const auto one = scratch("resume_one"), resumed = scratch("resume_two");
  train(tiny_config(1), *data_, one);
  TrainOptions opts;
  opts.resume = one / "last.pt";
  const auto r = train(tiny_config(2), *data_, resumed, opts);
  ASSERT_EQ(r.step_losses.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(r.step_losses[i].total, result_->step_losses[4 + i].total, 1e-5) << i;
  }
}

TEST(Training, LossDecreasesOnTinySet) {
  const auto data = scratch("descent_data"), out = scratch("descent_run");
  generate_data(data, 16, 4, 64, 9, false);
  auto cfg = tiny_config(12);
  cfg.schedule.decay_epoch = 12;
  const auto r = train(cfg, data, out);
  ASSERT_EQ(r.step_losses.size(), 24u);
  double head = 0, tail = 0;
  for (int i = 0; i < 4; ++i) {
    head += r.step_losses[i].total;
    tail += r.step_losses[20 + i].total;
  }
  EXPECT_LT(tail, 0.8 * head);
}

TEST(Evaluation, PerfectPredictorScoresOne) {
  const auto dir = scratch("perfect");
  generate_data(dir, 1, 10, 64, 4, false);
  const auto samples = load_refcoco_format(dir / "val", 64);
  std::map<std::string, const GroundingSample*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;
  std::vector<std::string> corpus;
  for (const auto& s : samples) corpus.push_back(s.expression);
  const auto vocab = Vocabulary::from_corpus(corpus);
  const auto r = evaluate_samples(samples, vocab, 20, 3, [&](const Batch& b) {
    std::vector<std::pair<Box, BinaryMask>> out;
    for (const auto& id : b.ids) out.emplace_back(by_id.at(id)->gold_box, by_id.at(id)->gold_mask);
    return out;
  });
  EXPECT_EQ(r.n_samples, 10u);
  EXPECT_DOUBLE_EQ(r.prec_at_05, 1.0);
  EXPECT_DOUBLE_EQ(r.acc_ris, 1.0);
  EXPECT_DOUBLE_EQ(r.miou, 1.0);
  EXPECT_DOUBLE_EQ(r.oiou, 1.0);
  EXPECT_DOUBLE_EQ(r.consistency_rate, 1.0);
}

TEST_F(TrainedFixture, PredictJson) {
  auto loaded = load_checkpoint(result_->best_checkpoint);
  const auto image = read_png(*data_ / "val/images/val-000001.png");
  const auto p = predict(loaded, image, "the blue square");
  const auto j = json::parse(prediction_json(p));
  ASSERT_EQ(j.at("box_cxcywh").size(), 4u);
  for (const auto& v : j.at("box_cxcywh")) {
    EXPECT_GE(v.get<double>(), 0.0);
    EXPECT_LE(v.get<double>(), 1.0);
  }
  EXPECT_EQ(j.at("mask_rle").at("size"), json::array({64, 64}));
  MaskRle rle{64, 64, j.at("mask_rle").at("counts").get<std::vector<std::int64_t>>()};
  EXPECT_EQ(rle_decode(rle), p.mask);
}

TEST_F(TrainedFixture, InspectWritesPriorMaps) {
  auto loaded = load_checkpoint(result_->best_checkpoint);
  const auto image = read_png(*data_ / "val/images/val-000002.png");
  const auto dir = scratch("inspect");
  const auto files = inspect(loaded, image, "the green triangle", dir);
  ASSERT_EQ(files.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(files[i].filename(), kInspectFiles[i]);
    EXPECT_TRUE(fs::exists(files[i]));
  }
  const auto out = run_single(loaded, image, "the green triangle");
  const auto wb = read_png(dir / "box_weight.png");
  const auto ws = read_png(dir / "mask_weight.png");
  ASSERT_EQ(wb.height, 4);
  ASSERT_EQ(ws.width, 4);
  std::set<int> levels;
  const auto expect_ws = out.mim.priors.mask_weight[0][0];
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      levels.insert(wb.at(y, x, 0));
      EXPECT_EQ(ws.at(y, x, 0), static_cast<int>(std::lround(255.0 * expect_ws[y][x].item<double>())));
    }
  }
  for (int v : levels) EXPECT_TRUE(v == 26 || v == 255) << v;
  const auto d = box_to_discrete(box_from_tensor(out.coarse.box[0]), 4, 4);
  EXPECT_EQ(levels.size(), d.empty() || (d.x2 - d.x1) * (d.y2 - d.y1) == 16 ? 1u : 2u);
}

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(C3VG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_F(TrainedFixture, CliExitCodes) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  EXPECT_EQ(run_cli("generate-data --out " + (dir / "d").string() + " --n-train 2 --n-val 1 --image-size 64 --seed 3"),
            0);
  EXPECT_EQ(run_cli("generate-data --out " + (dir / "d").string() + " --n-train 2 --n-val 1 --image-size 64 --seed 3"),
            2);
  EXPECT_EQ(run_cli("generate-data --out " + (dir / "e").string() + " --n-train 2 --n-val 1 --image-size 60 --seed 3"),
            2);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  std::ofstream(dir / "bad.json") << R"({"unknown": 1})";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string() + " --data " + data_->string() + " --out " +
                    (dir / "t").string()),
            2);
  EXPECT_EQ(run_cli("evaluate --checkpoint " + (dir / "none.pt").string() + " --data " + data_->string() +
                    " --report " + (dir / "r.json").string()),
            2);
  const auto ckpt = result_->best_checkpoint.string();
  EXPECT_EQ(run_cli("evaluate --checkpoint " + ckpt + " --data " + data_->string() + " --split val --stage coarse" +
                    " --report " + (dir / "r.json").string()),
            0);
  const auto report = MetricReport::from_json(slurp(dir / "r.json"));
  EXPECT_EQ(report.n_samples, 8u);
  EXPECT_EQ(run_cli("evaluate --checkpoint " + ckpt + " --data " + (dir / "d").string() + "/nothing --report " +
                    (dir / "r2.json").string()),
            2);
  const auto img = (*data_ / "val/images/val-000000.png").string();
  EXPECT_EQ(run_cli("predict --checkpoint " + ckpt + " --image " + img + " --expression 'the red circle' --out " +
                    (dir / "p.json").string()),
            0);
  EXPECT_TRUE(json::parse(slurp(dir / "p.json")).contains("mask_rle"));
  EXPECT_EQ(run_cli("inspect --checkpoint " + ckpt + " --image " + img + " --expression 'the red circle' --out " +
                    (dir / "maps").string()),
            0);
  for (const char* name : kInspectFiles) EXPECT_TRUE(fs::exists(dir / "maps" / name)) << name;
  EXPECT_EQ(run_cli("predict --checkpoint " + ckpt + " --image " + (dir / "none.png").string() +
                    " --expression x --out " + (dir / "q.json").string()),
            2);
}

TEST(ShiftAugment, MovesSceneBoxAndMaskTogether) {
  std::vector<GroundingSample> samples;
  for (std::uint64_t seed = 0; seed < 6; ++seed) samples.push_back(render_sample(generate_scene(seed, 64), "s"));
  std::vector<const GroundingSample*> ptrs;
  std::vector<std::string> corpus;
  for (const auto& s : samples) {
    ptrs.push_back(&s);
    corpus.push_back(s.expression);
  }
  const auto vocab = Vocabulary::from_corpus(corpus);
  const auto plain = make_batch(ptrs, vocab, 20);

  auto same = make_batch(ptrs, vocab, 20);
  shift_augment(same, 0, 1);
  EXPECT_TRUE(torch::equal(same.images, plain.images));

  auto a = make_batch(ptrs, vocab, 20), b = make_batch(ptrs, vocab, 20);
  shift_augment(a, 12, 99);
  shift_augment(b, 12, 99);
  EXPECT_TRUE(torch::equal(a.images, b.images));
  EXPECT_FALSE(torch::equal(a.images, plain.images));

  const auto bg = plain.images[0][0][0][0].item<float>();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto k = static_cast<std::int64_t>(i);
    // Nothing falls off the frame.
    EXPECT_EQ(a.gold_masks[k].sum().item<float>(), plain.gold_masks[k].sum().item<float>());
    EXPECT_EQ((a.images[k][0] != bg).sum().item<std::int64_t>(), (plain.images[k][0] != bg).sum().item<std::int64_t>());
    const auto m = mask_from_logits(a.gold_masks[k]);
    const auto box = mask_min_bbox(m);
    EXPECT_NEAR(a.gold_boxes[k][0].item<double>(), box.cx, 1e-5);
    EXPECT_NEAR(a.gold_boxes[k][1].item<double>(), box.cy, 1e-5);
    EXPECT_NEAR(a.gold_boxes[k][2].item<double>(), box.w, 1e-6);
    EXPECT_NEAR(a.gold_boxes[k][3].item<double>(), box.h, 1e-6);
  }
}
