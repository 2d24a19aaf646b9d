#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "c3vg/geometry.hpp"
#include "c3vg/image.hpp"

namespace c3vg {

enum class ShapeKind : std::uint8_t { kCircle, kSquare, kTriangle };
enum class ColorName : std::uint8_t { kRed, kGreen, kBlue, kYellow, kPurple, kOrange, kCyan, kWhite };
enum class SizeClass : std::uint8_t { kSmall, kLarge };
enum class Relation : std::uint8_t { kLeftOf, kRightOf, kAbove, kBelow };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 8;
inline constexpr int kGrammarVersion = 1;

std::string_view to_string(ShapeKind shape);
std::string_view to_string(ColorName color);
std::string_view to_string(SizeClass size);
std::string_view to_string(Relation relation);  // "left of", "right of", "above", "below"
std::array<std::uint8_t, 3> palette_rgb(ColorName color);

struct SceneObject {
  ShapeKind shape = ShapeKind::kCircle;
  ColorName color = ColorName::kRed;
  SizeClass size = SizeClass::kSmall;
  int cx = 0;  // pixel-corner centre
  int cy = 0;
  int radius = 0;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneSpec {
  int image_size = 0;
  std::uint64_t seed = 0;
  std::vector<SceneObject> objects;
  int referent = 0;
  std::string expression;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct GroundingSample {
  std::string id;
  Image image;
  std::string expression;
  Box gold_box;
  BinaryMask gold_mask;
};

// Half-extent in pixels for a size class at the given image size.
int object_radius(SizeClass size, int image_size);

// Deterministic in (seed, image_size). The referent is described by the
// smallest unique attribute set, with a spatial relation to a uniquely
// described anchor only when its attributes alone are ambiguous.
// Throws BadImageShape when image_size is not a positive multiple of 32.
SceneSpec generate_scene(std::uint64_t seed, int image_size);

BinaryMask rasterize_object(const SceneObject& object, int image_size);
GroundingSample render_sample(const SceneSpec& spec, std::string id);

// Even-odd fill; a pixel is set when its centre lies inside. Vertices are
// (x, y) in pixels. Throws BadAnnotation for fewer than 3 vertices.
BinaryMask rasterize_polygon(std::span<const std::pair<double, double>> vertices, int height, int width);

struct LoadStats {
  std::size_t loaded = 0;
  std::size_t missing_images = 0;
};

// Reads root/annotations.jsonl (one record per line) and delivers samples
// in file order, resized to image_size x image_size. Missing images are
// skipped and counted; malformed records throw BadAnnotation with the line
// number.
LoadStats for_each_refcoco_sample(const std::filesystem::path& root, int image_size,
                                  const std::function<void(GroundingSample&&)>& sink);
std::vector<GroundingSample> load_refcoco_format(const std::filesystem::path& root, int image_size,
                                                 LoadStats* stats = nullptr);

// Standard splitmix64 finaliser, used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Seeds for sample i of each split; the two ranges never overlap.
std::uint64_t train_sample_seed(std::uint64_t base_seed, std::size_t index);
std::uint64_t val_sample_seed(std::uint64_t base_seed, std::size_t index);

// Writes one split in the annotations.jsonl layout (PNG masks).
void write_synthetic_split(const std::filesystem::path& dir, std::string_view prefix, std::size_t count,
                           int image_size, const std::function<std::uint64_t(std::size_t)>& seed_of);

}  // namespace c3vg
