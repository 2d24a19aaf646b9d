#include "c3vg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "c3vg/errors.hpp"
#include "c3vg/rle.hpp"
#include "json.hpp"

namespace c3vg {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

torch::Tensor image_to_tensor(const Image& image) {
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(image.rgb.data()), {image.height, image.width, 3}, torch::kUInt8);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

Box box_from_tensor(const torch::Tensor& box) {
  auto b = box.detach().to(torch::kFloat64).contiguous();
  const double* p = b.data_ptr<double>();
  return Box{p[0], p[1], p[2], p[3]};
}

BinaryMask mask_from_logits(const torch::Tensor& logits) {
  auto m = logits.detach().gt(0).to(torch::kUInt8).contiguous();
  const auto h = static_cast<int>(m.size(0)), w = static_cast<int>(m.size(1));
  const auto* p = m.data_ptr<std::uint8_t>();
  return BinaryMask(h, w, std::vector<std::uint8_t>(p, p + static_cast<std::size_t>(h) * w));
}

Batch make_batch(std::span<const GroundingSample* const> samples, const Vocabulary& vocab, int max_text_len) {
  Batch b;
  std::vector<torch::Tensor> images, ids, pads, boxes, masks;
  for (const auto* s : samples) {
    images.push_back(image_to_tensor(s->image));
    const auto tok = tokenize_text(s->expression, vocab, max_text_len);
    ids.push_back(torch::tensor(tok.ids, torch::kInt64));
    pads.push_back(torch::tensor(std::vector<std::int64_t>(tok.pad.begin(), tok.pad.end()), torch::kInt64).to(torch::kBool));
    const auto& g = s->gold_box;
    boxes.push_back(torch::tensor({g.cx, g.cy, g.w, g.h}, torch::kFloat32));
    const auto& m = s->gold_mask;
    masks.push_back(torch::from_blob(const_cast<std::uint8_t*>(m.cells().data()), {m.height(), m.width()}, torch::kUInt8)
                        .to(torch::kFloat32));
    b.ids.push_back(s->id);
  }
  b.images = torch::stack(images);
  b.text_ids = torch::stack(ids);
  b.text_pad = torch::stack(pads);
  b.gold_boxes = torch::stack(boxes);
  b.gold_masks = torch::stack(masks);
  return b;
}

void shift_augment(Batch& batch, int max_shift, std::uint64_t seed) {
  if (max_shift <= 0) return;
  std::mt19937_64 rng(seed);
  const auto h = batch.images.size(2), w = batch.images.size(3);
  for (std::int64_t i = 0; i < batch.images.size(0); ++i) {
    auto image = batch.images[i];
    auto bg = image.select(1, 0).select(1, 0).view({3, 1, 1});
    auto content = (image - bg).abs().sum(0) > 1e-6;
    auto rows = content.any(1).nonzero(), cols = content.any(0).nonzero();
    if (rows.numel() == 0) continue;
    auto range = [&](std::int64_t lo, std::int64_t hi, std::int64_t n) {
      const std::int64_t a = std::max<std::int64_t>(-max_shift, -lo);
      const std::int64_t b = std::min<std::int64_t>(max_shift, n - 1 - hi);
      return b <= a ? a : a + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(b - a + 1));
    };
    const auto dy = range(rows.min().item<std::int64_t>(), rows.max().item<std::int64_t>(), h);
    const auto dx = range(cols.min().item<std::int64_t>(), cols.max().item<std::int64_t>(), w);
    if (dx == 0 && dy == 0) continue;
    // Destination and source windows along one axis.
    auto win = [](std::int64_t d, std::int64_t n) {
      return d >= 0 ? std::array<std::int64_t, 4>{d, n, 0, n - d} : std::array<std::int64_t, 4>{0, n + d, -d, n};
    };
    const auto wy = win(dy, h), wx = win(dx, w);
    auto moved = bg.expand({3, h, w}).clone();
    moved.slice(1, wy[0], wy[1]).slice(2, wx[0], wx[1]) = image.slice(1, wy[2], wy[3]).slice(2, wx[2], wx[3]);
    batch.images[i] = moved;
    auto mask = torch::zeros_like(batch.gold_masks[i]);
    mask.slice(0, wy[0], wy[1]).slice(1, wx[0], wx[1]) = batch.gold_masks[i].slice(0, wy[2], wy[3]).slice(1, wx[2], wx[3]);
    batch.gold_masks[i] = mask;
    batch.gold_boxes[i][0] += static_cast<double>(dx) / static_cast<double>(w);
    batch.gold_boxes[i][1] += static_cast<double>(dy) / static_cast<double>(h);
  }
}

GroundingModel build_model(const TrainConfig& config, std::int64_t vocab_size) {
  ModelConfig mc;
  mc.encoder = config.model;
  mc.encoder.vocab_size = static_cast<int>(vocab_size);
  mc.mim = config.mim_options();
  return GroundingModel(mc);
}

namespace {

fs::path sidecar_path(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".json"); }
fs::path optimizer_path(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".optim"); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  out << line << '\n';
}

std::string loss_json(const LossReport& r, int epoch, std::int64_t step, double lr_enc, double lr_heads) {
  ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["rec_coarse"] = r.rec_coarse;
  j["ris_coarse"] = r.ris_coarse;
  j["rec_fine"] = r.rec_fine;
  j["ris_fine"] = r.ris_fine;
  j["m2b"] = r.m2b;
  j["b2m"] = r.b2m;
  j["total"] = r.total;
  j["lr_encoder"] = lr_enc;
  j["lr_heads"] = lr_heads;
  return j.dump();
}

std::vector<GroundingSample> load_split(const fs::path& data_root, const std::string& split, int image_size) {
  const auto dir = data_root / split;
  if (!fs::exists(dir / "annotations.jsonl")) return {};
  return load_refcoco_format(dir, image_size);
}

// Fisher-Yates over raw engine output so the order is library independent.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

void set_group_lr(torch::optim::Adam& opt, std::size_t group, double lr) {
  static_cast<torch::optim::AdamOptions&>(opt.param_groups()[group].options()).lr(lr);
}

}  // namespace

void save_checkpoint(const fs::path& path, GroundingModel& model, const TrainConfig& config, const Vocabulary& vocab,
                     int epoch, const std::optional<MetricReport>& metrics) {
  torch::serialize::OutputArchive archive;
  model->save(archive);
  archive.save_to(path.string());
  ordered_json side;
  side["config"] = json::parse(config.to_json());
  side["vocab"] = vocab.words();
  side["epoch"] = epoch;
  side["metrics"] = metrics ? json::parse(metrics->to_json()) : json(nullptr);
  std::ofstream(sidecar_path(path)) << side.dump(2) << '\n';
}

LoadedModel load_checkpoint(const fs::path& path) {
  if (!fs::exists(path) || !fs::exists(sidecar_path(path))) {
    throw Error("checkpoint not found: " + path.string());
  }
  json side;
  try {
    side = json::parse(read_file(sidecar_path(path)));
  } catch (const json::exception& e) {
    throw Error("bad checkpoint sidecar: " + std::string(e.what()));
  }
  LoadedModel loaded;
  loaded.config = TrainConfig::from_json(side.at("config").dump());
  const auto words = side.at("vocab").get<std::vector<std::string>>();
  loaded.vocab = Vocabulary::from_words(words);
  loaded.epoch = side.value("epoch", 0);
  loaded.model = build_model(loaded.config, loaded.vocab.size());
  try {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    loaded.model->load(archive);
  } catch (const c10::Error& e) {
    throw Error("cannot load checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  loaded.model->eval();
  return loaded;
}

BatchPredictor model_predictor(GroundingModel& model, Stage stage) {
  return [&model, stage](const Batch& batch) {
    torch::NoGradGuard no_grad;
    model->eval();
    auto out = model->forward(batch.images, batch.text_ids, batch.text_pad);
    const auto& p = stage == Stage::kFine ? out.fine : out.coarse;
    std::vector<std::pair<Box, BinaryMask>> result;
    for (std::int64_t i = 0; i < p.box.size(0); ++i) {
      result.emplace_back(box_from_tensor(p.box[i]), mask_from_logits(p.mask_logits[i]));
    }
    return result;
  };
}

MetricReport evaluate_samples(std::span<const GroundingSample> samples, const Vocabulary& vocab, int max_text_len,
                              int batch_size, const BatchPredictor& predict) {
  MetricAccumulator acc;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const GroundingSample*> ptrs;
    for (auto i = start; i < end; ++i) ptrs.push_back(&samples[i]);
    const auto preds = predict(make_batch(ptrs, vocab, max_text_len));
    if (preds.size() != ptrs.size()) throw ShapeMismatch("predictor returned the wrong number of samples");
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
      acc.add(preds[k].first, ptrs[k]->gold_box, preds[k].second, ptrs[k]->gold_mask);
    }
  }
  return acc.report();
}

MetricReport evaluate(const fs::path& checkpoint, const fs::path& data_root, const std::string& split, Stage stage) {
  auto loaded = load_checkpoint(checkpoint);
  const auto samples = load_split(data_root, split, loaded.config.image_size);
  if (samples.empty()) throw EmptyEvaluation("no samples in split '" + split + "' under " + data_root.string());
  return evaluate_samples(samples, loaded.vocab, loaded.config.model.max_text_len, loaded.config.batch_size,
                          model_predictor(loaded.model, stage));
}

TrainResult train(const TrainConfig& config, const fs::path& data_root, const fs::path& out_dir,
                  const TrainOptions& options) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&](const std::string& s) {
    if (options.progress) options.progress(s);
  };

  const auto train_set = load_split(data_root, "train", config.image_size);
  if (train_set.empty()) throw EmptyEvaluation("no training samples under " + (data_root / "train").string());
  const auto val_set = load_split(data_root, "val", config.image_size);

  std::vector<std::string> corpus;
  for (const auto& s : train_set) corpus.push_back(s.expression);
  const auto vocab = Vocabulary::from_corpus(corpus);

  torch::manual_seed(config.seed);
  auto model = build_model(config, vocab.size());
  const auto& oc = config.optimizer;
  auto defaults = torch::optim::AdamOptions(oc.lr_heads)
                      .betas({oc.betas[0], oc.betas[1]})
                      .weight_decay(oc.weight_decay);
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(model->encoder_parameters(), std::make_unique<torch::optim::AdamOptions>(defaults));
  groups.emplace_back(model->head_parameters(), std::make_unique<torch::optim::AdamOptions>(defaults));
  torch::optim::Adam optimizer(std::move(groups), defaults);

  fs::create_directories(out_dir);
  TrainResult result;
  result.best_checkpoint = out_dir / "best.pt";
  result.last_checkpoint = out_dir / "last.pt";

  int start_epoch = 1;
  double best_miou = -1.0;
  if (options.resume) {
    auto loaded = load_checkpoint(*options.resume);
    torch::NoGradGuard no_grad;
    auto src = loaded.model->named_parameters();
    for (auto& p : model->named_parameters()) p.value().copy_(src[p.key()]);
    auto src_buf = loaded.model->named_buffers();
    for (auto& b : model->named_buffers()) b.value().copy_(src_buf[b.key()]);
    if (fs::exists(optimizer_path(*options.resume))) torch::load(optimizer, optimizer_path(*options.resume).string());
    start_epoch = loaded.epoch + 1;
    const auto side = json::parse(read_file(sidecar_path(*options.resume)));
    best_miou = side.value("best_miou", -1.0);
  } else {
    std::ofstream(out_dir / "train_log.jsonl", std::ios::trunc);
    std::ofstream(out_dir / "val_metrics.jsonl", std::ios::trunc);
  }

  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::int64_t step = static_cast<std::int64_t>(start_epoch - 1) *
                      static_cast<std::int64_t>((train_set.size() + bs - 1) / bs);
  for (int epoch = start_epoch; epoch <= config.schedule.epochs; ++epoch) {
    const double lr_enc = lr_at_epoch(oc.lr_encoder, epoch, config.schedule);
    const double lr_heads = lr_at_epoch(oc.lr_heads, epoch, config.schedule);
    set_group_lr(optimizer, 0, lr_enc);
    set_group_lr(optimizer, 1, lr_heads);

    model->train();
    const auto order = epoch_order(train_set.size(), config.seed, epoch);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const GroundingSample*> ptrs;
      for (auto i = start; i < std::min(order.size(), start + bs); ++i) ptrs.push_back(&train_set[order[i]]);
      auto batch = make_batch(ptrs, vocab, config.model.max_text_len);
      shift_augment(batch, config.max_shift_px, splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(step))));

      optimizer.zero_grad();
      auto out = model->forward(batch.images, batch.text_ids, batch.text_pad);
      auto terms = total_loss(out.coarse, out.fine, batch.gold_boxes, batch.gold_masks, config.weights,
                              config.flags.bcc_on_coarse);
      const auto report = terms.report();
      if (!std::isfinite(report.total)) {
        ordered_json dump;
        dump["epoch"] = epoch;
        dump["step"] = step;
        dump["batch_ids"] = batch.ids;
        std::ofstream(out_dir / "nan_batch.json") << dump.dump(2) << '\n';
        std::string ids;
        for (const auto& id : batch.ids) ids += (ids.empty() ? "" : ", ") + id;
        throw NanLoss("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                      "; batch: " + ids);
      }
      terms.total.backward();
      optimizer.step();
      append_line(out_dir / "train_log.jsonl", loss_json(report, epoch, step, lr_enc, lr_heads));
      result.step_losses.push_back(report);
      epoch_loss += report.total;
      ++epoch_steps;
      ++step;
    }

    std::optional<MetricReport> metrics;
    if (!val_set.empty()) {
      metrics = evaluate_samples(val_set, vocab, config.model.max_text_len, config.batch_size,
                                 model_predictor(model, Stage::kFine));
      auto line = json::parse(metrics->to_json());
      line["epoch"] = epoch;
      append_line(out_dir / "val_metrics.jsonl", line.dump());
      result.epoch_metrics.push_back(*metrics);
    }
    const bool improved = !metrics || metrics->miou > best_miou;
    if (improved) {
      if (metrics) best_miou = metrics->miou;
      save_checkpoint(result.best_checkpoint, model, config, vocab, epoch, metrics);
    }
    save_checkpoint(result.last_checkpoint, model, config, vocab, epoch, metrics);
    {
      auto side = json::parse(read_file(sidecar_path(result.last_checkpoint)));
      side["best_miou"] = best_miou;
      std::ofstream(sidecar_path(result.last_checkpoint)) << side.dump(2) << '\n';
    }
    torch::save(optimizer, optimizer_path(result.last_checkpoint).string());

    std::ostringstream msg;
    msg << "epoch " << epoch << "/" << config.schedule.epochs << " loss "
        << (epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0);
    if (metrics) msg << " val prec@0.5 " << metrics->prec_at_05 << " miou " << metrics->miou;
    say(msg.str());
  }
  if (!fs::exists(result.best_checkpoint) && fs::exists(result.last_checkpoint)) {
    fs::copy_file(result.last_checkpoint, result.best_checkpoint, fs::copy_options::overwrite_existing);
    fs::copy_file(sidecar_path(result.last_checkpoint), sidecar_path(result.best_checkpoint),
                  fs::copy_options::overwrite_existing);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

PipelineOutput run_single(LoadedModel& loaded, const Image& image, const std::string& expression) {
  const auto tok = tokenize_text(expression, loaded.vocab, loaded.config.model.max_text_len);
  auto images = image_to_tensor(image).unsqueeze(0);
  auto ids = torch::tensor(tok.ids, torch::kInt64).unsqueeze(0);
  auto pad = torch::tensor(std::vector<std::int64_t>(tok.pad.begin(), tok.pad.end()), torch::kInt64)
                 .to(torch::kBool)
                 .unsqueeze(0);
  torch::NoGradGuard no_grad;
  loaded.model->eval();
  return loaded.model->forward(images, ids, pad);
}

Prediction predict(LoadedModel& loaded, const Image& image, const std::string& expression) {
  const auto out = run_single(loaded, image, expression);
  return Prediction{box_from_tensor(out.fine.box[0]), mask_from_logits(out.fine.mask_logits[0])};
}

std::string prediction_json(const Prediction& prediction) {
  const auto rle = rle_encode(prediction.mask);
  ordered_json j;
  const auto& b = prediction.box;
  j["box_cxcywh"] = {b.cx, b.cy, b.w, b.h};
  j["mask_rle"] = {{"size", {rle.height, rle.width}}, {"counts", rle.counts}};
  return j.dump();
}

namespace {

std::vector<std::uint8_t> to_gray(const torch::Tensor& values01) {
  auto v = values01.detach().to(torch::kFloat64).mul(255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
  const auto* p = v.data_ptr<std::uint8_t>();
  return std::vector<std::uint8_t>(p, p + v.numel());
}

std::vector<std::uint8_t> box_overlay(const Image& image, const Box& box) {
  const int h = image.height, w = image.width;
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int luma = (299 * image.at(y, x, 0) + 587 * image.at(y, x, 1) + 114 * image.at(y, x, 2)) / 1000;
      gray[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(luma / 2);
    }
  }
  const auto d = box_to_discrete(box, w, h);
  if (d.empty()) return gray;
  for (int x = d.x1; x < d.x2; ++x) {
    gray[static_cast<std::size_t>(d.y1) * w + x] = 255;
    gray[static_cast<std::size_t>(d.y2 - 1) * w + x] = 255;
  }
  for (int y = d.y1; y < d.y2; ++y) {
    gray[static_cast<std::size_t>(y) * w + d.x1] = 255;
    gray[static_cast<std::size_t>(y) * w + d.x2 - 1] = 255;
  }
  return gray;
}

}  // namespace

std::vector<fs::path> inspect(LoadedModel& loaded, const Image& image, const std::string& expression,
                              const fs::path& out_dir) {
  const auto out = run_single(loaded, image, expression);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto put = [&](const char* name, int h, int w, const std::vector<std::uint8_t>& px) {
    write_gray_png(out_dir / name, h, w, px);
    written.push_back(out_dir / name);
  };
  const int h = image.height, w = image.width;
  put(kInspectFiles[0], h, w, to_gray(out.coarse.mask_logits[0].gt(0).to(torch::kFloat64)));
  put(kInspectFiles[1], h, w, to_gray(out.fine.mask_logits[0].gt(0).to(torch::kFloat64)));
  const auto wb = out.mim.priors.box_weight[0][0];
  const auto ws = out.mim.priors.mask_weight[0][0];
  put(kInspectFiles[2], static_cast<int>(wb.size(0)), static_cast<int>(wb.size(1)), to_gray(wb));
  put(kInspectFiles[3], static_cast<int>(ws.size(0)), static_cast<int>(ws.size(1)), to_gray(ws));
  put(kInspectFiles[4], h, w, box_overlay(image, box_from_tensor(out.coarse.box[0])));
  put(kInspectFiles[5], h, w, box_overlay(image, box_from_tensor(out.fine.box[0])));
  return written;
}

void generate_data(const fs::path& out_dir, std::size_t n_train, std::size_t n_val, int image_size,
                   std::uint64_t seed, bool force) {
  if (image_size <= 0 || image_size % 32 != 0) {
    throw BadImageShape("image size " + std::to_string(image_size) + " is not a positive multiple of 32");
  }
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) throw Error(out_dir.string() + " is not empty; pass --force to overwrite");
    fs::remove_all(out_dir);
  }
  fs::create_directories(out_dir);
  write_synthetic_split(out_dir / "train", "train", n_train, image_size,
                        [seed](std::size_t i) { return train_sample_seed(seed, i); });
  write_synthetic_split(out_dir / "val", "val", n_val, image_size,
                        [seed](std::size_t i) { return val_sample_seed(seed, i); });
  ordered_json meta;
  meta["seed"] = seed;
  meta["count"] = n_train + n_val;
  meta["n_train"] = n_train;
  meta["n_val"] = n_val;
  meta["image_size"] = image_size;
  meta["grammar_version"] = kGrammarVersion;
  std::ofstream(out_dir / "meta.json") << meta.dump(2) << '\n';
}

}  // namespace c3vg
