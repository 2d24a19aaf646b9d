#include "c3vg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "c3vg/errors.hpp"
#include "json.hpp"

namespace c3vg {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, std::string_view where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw BadConfig(std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw BadConfig("unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw BadConfig(std::string("bad value for '") + key + "'");
  }
}

}  // namespace

MimOptions TrainConfig::mim_options() const {
  MimOptions o;
  o.box_weight = weights.w_1;
  o.invert_box_weight = flags.invert_box_weight;
  o.roi_size = roi_size;
  o.use_self_attention = use_self_attention;
  return o;
}

void TrainConfig::validate() const {
  weights.validate();
  const auto& m = model;
  if (m.patch_size <= 0 || m.width <= 0 || m.projection_width <= 0 || m.depth < 0 || m.heads <= 0 ||
      m.max_text_len <= 0 || m.max_grid <= 0) {
    throw BadConfig("model sizes must be positive");
  }
  if (m.width % m.heads != 0 || m.projection_width % m.heads != 0) {
    throw BadConfig("widths must be divisible by the head count");
  }
  if (roi_size <= 0) throw BadConfig("roi_size must be positive");
  if (optimizer.name != "adam") throw BadConfig("only the adam optimizer is supported");
  if (optimizer.lr_encoder < 0 || optimizer.lr_heads < 0 || optimizer.weight_decay < 0) {
    throw BadConfig("learning rates and weight decay must be non-negative");
  }
  for (double b : optimizer.betas) {
    if (b < 0 || b >= 1) throw BadConfig("betas must lie in [0, 1)");
  }
  if (schedule.epochs < 0 || schedule.decay_epoch < 0 || schedule.decay_factor <= 0) {
    throw BadConfig("bad schedule");
  }
  if (batch_size <= 0) throw BadConfig("batch_size must be positive");
  if (max_shift_px < 0) throw BadConfig("max_shift_px must be non-negative");
  if (image_size <= 0 || image_size % 32 != 0) throw BadConfig("image_size must be a positive multiple of 32");
  if (image_size / m.patch_size > m.max_grid) throw BadConfig("image_size exceeds max_grid patches");
}

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["model"] = {{"patch_size", model.patch_size},
                {"width", model.width},
                {"projection_width", model.projection_width},
                {"depth", model.depth},
                {"heads", model.heads},
                {"max_text_len", model.max_text_len},
                {"max_grid", model.max_grid},
                {"roi_size", roi_size},
                {"use_self_attention", use_self_attention}};
  const auto& w = weights;
  j["weights"] = {{"sigma_l1", w.sigma_l1},     {"sigma_giou", w.sigma_giou}, {"sigma_dice", w.sigma_dice},
                  {"sigma_bce", w.sigma_bce},   {"lambda_1", w.lambda_1},     {"lambda_2", w.lambda_2},
                  {"lambda_rec", w.lambda_rec}, {"lambda_bcc", w.lambda_bcc}, {"lambda_c", w.lambda_c},
                  {"t", w.t},                   {"w_1", w.w_1}};
  j["optimizer"] = {{"name", optimizer.name},
                    {"lr_encoder", optimizer.lr_encoder},
                    {"lr_heads", optimizer.lr_heads},
                    {"betas", optimizer.betas},
                    {"weight_decay", optimizer.weight_decay}};
  j["schedule"] = {{"epochs", schedule.epochs},
                   {"decay_epoch", schedule.decay_epoch},
                   {"decay_factor", schedule.decay_factor}};
  j["batch_size"] = batch_size;
  j["image_size"] = image_size;
  j["max_shift_px"] = max_shift_px;
  j["seed"] = seed;
  j["flags"] = {{"invert_box_weight", flags.invert_box_weight},
                {"bcc_on_coarse", flags.bcc_on_coarse},
                {"pretrained_style_lr", flags.pretrained_style_lr}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw BadConfig(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"model", "weights", "optimizer", "schedule", "batch_size", "image_size", "max_shift_px", "seed",
              "flags"});
  TrainConfig c;
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model",
               {"patch_size", "width", "projection_width", "depth", "heads", "max_text_len", "max_grid", "roi_size",
                "use_self_attention"});
    read(m, "patch_size", c.model.patch_size);
    read(m, "width", c.model.width);
    read(m, "projection_width", c.model.projection_width);
    read(m, "depth", c.model.depth);
    read(m, "heads", c.model.heads);
    read(m, "max_text_len", c.model.max_text_len);
    read(m, "max_grid", c.model.max_grid);
    read(m, "roi_size", c.roi_size);
    read(m, "use_self_attention", c.use_self_attention);
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    check_keys(w, "weights",
               {"sigma_l1", "sigma_giou", "sigma_dice", "sigma_bce", "lambda_1", "lambda_2", "lambda_rec",
                "lambda_bcc", "lambda_c", "t", "w_1"});
    read(w, "sigma_l1", c.weights.sigma_l1);
    read(w, "sigma_giou", c.weights.sigma_giou);
    read(w, "sigma_dice", c.weights.sigma_dice);
    read(w, "sigma_bce", c.weights.sigma_bce);
    read(w, "lambda_1", c.weights.lambda_1);
    read(w, "lambda_2", c.weights.lambda_2);
    read(w, "lambda_rec", c.weights.lambda_rec);
    read(w, "lambda_bcc", c.weights.lambda_bcc);
    read(w, "lambda_c", c.weights.lambda_c);
    read(w, "t", c.weights.t);
    read(w, "w_1", c.weights.w_1);
  }
  if (j.contains("flags")) {
    const auto& f = j["flags"];
    check_keys(f, "flags", {"invert_box_weight", "bcc_on_coarse", "pretrained_style_lr"});
    read(f, "invert_box_weight", c.flags.invert_box_weight);
    read(f, "bcc_on_coarse", c.flags.bcc_on_coarse);
    read(f, "pretrained_style_lr", c.flags.pretrained_style_lr);
  }
  if (c.flags.pretrained_style_lr) c.optimizer.lr_encoder = 5e-5;
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    check_keys(o, "optimizer", {"name", "lr_encoder", "lr_heads", "betas", "weight_decay"});
    read(o, "name", c.optimizer.name);
    read(o, "lr_encoder", c.optimizer.lr_encoder);
    read(o, "lr_heads", c.optimizer.lr_heads);
    read(o, "betas", c.optimizer.betas);
    read(o, "weight_decay", c.optimizer.weight_decay);
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    check_keys(s, "schedule", {"epochs", "decay_epoch", "decay_factor"});
    read(s, "epochs", c.schedule.epochs);
    read(s, "decay_epoch", c.schedule.decay_epoch);
    read(s, "decay_factor", c.schedule.decay_factor);
  }
  read(j, "batch_size", c.batch_size);
  read(j, "image_size", c.image_size);
  read(j, "max_shift_px", c.max_shift_px);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BadConfig("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return TrainConfig::from_json(ss.str());
}

double lr_at_epoch(double base_lr, int epoch, const ScheduleConfig& schedule) {
  return epoch > schedule.decay_epoch ? base_lr * schedule.decay_factor : base_lr;
}

}  // namespace c3vg
