#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "c3vg/config.hpp"
#include "c3vg/errors.hpp"
#include "c3vg/image.hpp"
#include "c3vg/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitBadInput = 2;
constexpr int kExitRuntime = 3;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw c3vg::Error("cannot write " + path.string(), /*bad_input=*/false);
  out << text << '\n';
}

c3vg::Image load_image(const fs::path& path) {
  if (!fs::exists(path)) throw c3vg::Error("image not found: " + path.string());
  return c3vg::read_png(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage visual grounding: box and mask from an image and a referring expression"};
  app.require_subcommand(1);

  std::string out, data, config_path, checkpoint, image_path, expression, report, split = "val", stage = "fine";
  std::size_t n_train = 0, n_val = 0;
  int image_size = 224;
  std::uint64_t seed = 0;
  bool force = false;
  std::string resume;

  auto* gen = app.add_subcommand("generate-data", "Write a synthetic dataset");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--n-train", n_train, "Training samples")->required();
  gen->add_option("--n-val", n_val, "Validation samples")->required();
  gen->add_option("--image-size", image_size, "Image side in pixels (multiple of 32)");
  gen->add_option("--seed", seed, "Base seed")->required();
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path, "JSON training config")->required();
  tr->add_option("--data", data, "Dataset root with train/ and val/")->required();
  tr->add_option("--out", out, "Output directory for logs and checkpoints")->required();
  tr->add_option("--resume", resume, "Continue from a last.pt checkpoint");

  auto* ev = app.add_subcommand("evaluate", "Compute metrics on a split");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--split", split)->check(CLI::IsMember({"train", "val"}));
  ev->add_option("--stage", stage)->check(CLI::IsMember({"coarse", "fine"}));
  ev->add_option("--report", report, "Where to write the metric JSON")->required();

  auto* pr = app.add_subcommand("predict", "Predict a box and mask for one image");
  pr->add_option("--checkpoint", checkpoint)->required();
  pr->add_option("--image", image_path)->required();
  pr->add_option("--expression", expression)->required();
  pr->add_option("--out", out)->required();

  auto* in = app.add_subcommand("inspect", "Dump intermediate maps as grayscale PNGs");
  in->add_option("--checkpoint", checkpoint)->required();
  in->add_option("--image", image_path)->required();
  in->add_option("--expression", expression)->required();
  in->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  try {
    if (*gen) {
      c3vg::generate_data(out, n_train, n_val, image_size, seed, force);
      std::cout << "wrote " << n_train << " train / " << n_val << " val samples to " << out << "\n";
    } else if (*tr) {
      auto config = c3vg::load_config(config_path);
      if (const char* env = std::getenv("C3VG_SEED")) {
        try {
          config.seed = std::stoull(env);
        } catch (const std::exception&) {
          throw c3vg::BadConfig(std::string("C3VG_SEED is not an unsigned integer: ") + env);
        }
      }
      c3vg::TrainOptions options;
      if (!resume.empty()) options.resume = resume;
      options.progress = [](const std::string& line) { std::cout << line << std::endl; };
      const auto result = c3vg::train(config, data, out, options);
      std::cout << "best checkpoint " << result.best_checkpoint.string() << " (" << result.seconds << " s)\n";
    } else if (*ev) {
      const auto metrics =
          c3vg::evaluate(checkpoint, data, split, stage == "coarse" ? c3vg::Stage::kCoarse : c3vg::Stage::kFine);
      write_text(report, metrics.to_json());
      std::cout << metrics.to_json() << "\n";
    } else if (*pr) {
      auto loaded = c3vg::load_checkpoint(checkpoint);
      const auto prediction = c3vg::predict(loaded, load_image(image_path), expression);
      write_text(out, c3vg::prediction_json(prediction));
    } else if (*in) {
      auto loaded = c3vg::load_checkpoint(checkpoint);
      for (const auto& p : c3vg::inspect(loaded, load_image(image_path), expression, out)) {
        std::cout << p.string() << "\n";
      }
    }
  } catch (const c3vg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.bad_input() ? kExitBadInput : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
