#include "c3vg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "c3vg/errors.hpp"
#include "json.hpp"

namespace c3vg {

namespace fs = std::filesystem;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using nlohmann::json;

std::string_view to_string(ShapeKind shape) {
  switch (shape) {
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}

std::string_view to_string(ColorName color) {
  static constexpr std::array<std::string_view, kNumColors> kNames{"red",    "green",  "blue", "yellow",
                                                                   "purple", "orange", "cyan", "white"};
  return kNames[static_cast<std::size_t>(color)];
}

std::string_view to_string(SizeClass size) { return size == SizeClass::kSmall ? "small" : "large"; }

std::string_view to_string(Relation relation) {
  switch (relation) {
    case Relation::kLeftOf: return "left of";
    case Relation::kRightOf: return "right of";
    case Relation::kAbove: return "above";
    case Relation::kBelow: return "below";
  }
  return "?";
}

std::array<std::uint8_t, 3> palette_rgb(ColorName color) {
  static constexpr std::array<std::array<std::uint8_t, 3>, kNumColors> kPalette{{{220, 40, 40},
                                                                                 {40, 180, 60},
                                                                                 {40, 80, 230},
                                                                                 {230, 210, 40},
                                                                                 {150, 60, 200},
                                                                                 {240, 140, 30},
                                                                                 {40, 200, 210},
                                                                                 {240, 240, 240}}};
  return kPalette[static_cast<std::size_t>(color)];
}

int object_radius(SizeClass size, int image_size) {
  return static_cast<int>(std::lround((size == SizeClass::kSmall ? 0.07 : 0.12) * image_size));
}

namespace {

constexpr std::array<std::uint8_t, 3> kBackground{30, 30, 30};
constexpr int kPlacementAttempts = 100;

// Portable draws from the raw engine output (distribution objects are
// implementation-defined).
int draw(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

struct Attributes {
  std::optional<SizeClass> size;
  std::optional<ColorName> color;
  std::optional<ShapeKind> shape;

  bool matches(const SceneObject& o) const {
    return (!size || *size == o.size) && (!color || *color == o.color) && (!shape || *shape == o.shape);
  }

  std::string phrase() const {
    std::string out = "the";
    if (size) out += " " + std::string(to_string(*size));
    if (color) out += " " + std::string(to_string(*color));
    out += " " + std::string(shape ? to_string(*shape) : "object");
    return out;
  }
};

bool relation_holds(const SceneObject& a, Relation r, const SceneObject& anchor) {
  switch (r) {
    case Relation::kLeftOf: return a.cx < anchor.cx;
    case Relation::kRightOf: return a.cx > anchor.cx;
    case Relation::kAbove: return a.cy < anchor.cy;
    case Relation::kBelow: return a.cy > anchor.cy;
  }
  return false;
}

// Smallest attribute subset that singles out objects[index], if any.
std::optional<Attributes> unique_attributes(const std::vector<SceneObject>& objects, std::size_t index) {
  const auto& o = objects[index];
  const std::array<Attributes, 6> subsets{{
      {std::nullopt, std::nullopt, o.shape},
      {std::nullopt, o.color, std::nullopt},
      {std::nullopt, o.color, o.shape},
      {o.size, std::nullopt, o.shape},
      {o.size, o.color, std::nullopt},
      {o.size, o.color, o.shape},
  }};
  for (const auto& attrs : subsets) {
    const auto n = std::count_if(objects.begin(), objects.end(), [&](const auto& x) { return attrs.matches(x); });
    if (n == 1) return attrs;
  }
  return std::nullopt;
}

std::optional<std::string> describe(const std::vector<SceneObject>& objects, std::size_t referent,
                                    std::mt19937_64& rng) {
  if (auto attrs = unique_attributes(objects, referent)) return attrs->phrase();

  const auto& ref = objects[referent];
  const Attributes full{ref.size, ref.color, ref.shape};
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (i != referent && !full.matches(objects[i])) anchors.push_back(i);
  }
  std::array<Relation, 4> relations{Relation::kLeftOf, Relation::kRightOf, Relation::kAbove, Relation::kBelow};
  for (std::size_t i = anchors.size(); i > 1; --i) std::swap(anchors[i - 1], anchors[rng() % i]);
  for (std::size_t i = relations.size(); i > 1; --i) std::swap(relations[i - 1], relations[rng() % i]);

  for (auto a : anchors) {
    auto anchor_attrs = unique_attributes(objects, a);
    if (!anchor_attrs) continue;
    for (auto r : relations) {
      bool unique = relation_holds(ref, r, objects[a]);
      for (std::size_t i = 0; unique && i < objects.size(); ++i) {
        if (i != referent && full.matches(objects[i]) && relation_holds(objects[i], r, objects[a])) unique = false;
      }
      if (unique) return full.phrase() + " " + std::string(to_string(r)) + " " + anchor_attrs->phrase();
    }
  }
  return std::nullopt;
}

std::optional<SceneSpec> try_scene(std::uint64_t attempt_seed, int image_size) {
  std::mt19937_64 rng(attempt_seed);
  SceneSpec spec;
  spec.image_size = image_size;
  const int count = draw(rng, 2, 5);
  const double min_dist = 0.15 * image_size;
  for (int k = 0; k < count; ++k) {
    SceneObject o;
    o.shape = static_cast<ShapeKind>(draw(rng, 0, kNumShapes - 1));
    o.color = static_cast<ColorName>(draw(rng, 0, kNumColors - 1));
    o.size = static_cast<SizeClass>(draw(rng, 0, 1));
    o.radius = object_radius(o.size, image_size);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      o.cx = draw(rng, o.radius + 1, image_size - o.radius - 1);
      o.cy = draw(rng, o.radius + 1, image_size - o.radius - 1);
      placed = std::all_of(spec.objects.begin(), spec.objects.end(), [&](const SceneObject& p) {
        const int gap = o.radius + p.radius + 2;
        const bool apart = std::abs(o.cx - p.cx) >= gap || std::abs(o.cy - p.cy) >= gap;
        return apart && std::hypot(o.cx - p.cx, o.cy - p.cy) >= min_dist;
      });
    }
    if (!placed) return std::nullopt;
    spec.objects.push_back(o);
  }
  spec.referent = draw(rng, 0, count - 1);
  auto expression = describe(spec.objects, static_cast<std::size_t>(spec.referent), rng);
  if (!expression) return std::nullopt;
  spec.expression = std::move(*expression);
  return spec;
}

}  // namespace

SceneSpec generate_scene(std::uint64_t seed, int image_size) {
  if (image_size <= 0 || image_size % 32 != 0) {
    throw BadImageShape("image size " + std::to_string(image_size) + " is not a positive multiple of 32");
  }
  for (std::uint64_t attempt = 0;; ++attempt) {
    if (auto spec = try_scene(splitmix64(seed ^ splitmix64(attempt)), image_size)) {
      spec->seed = seed;
      return *spec;
    }
  }
}

BinaryMask rasterize_polygon(std::span<const std::pair<double, double>> vertices, int height, int width) {
  if (vertices.size() < 3) throw BadAnnotation("polygon needs at least 3 vertices");
  BinaryMask mask(height, width);
  std::vector<double> crossings;
  const std::size_t n = vertices.size();
  for (int y = 0; y < height; ++y) {
    const double yc = y + 0.5;
    crossings.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto [xi, yi] = vertices[i];
      const auto [xj, yj] = vertices[j];
      if ((yi > yc) != (yj > yc)) crossings.push_back(xi + (yc - yi) * (xj - xi) / (yj - yi));
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      // pixel centres x + 0.5 in [c0, c1)
      const int x_begin = std::max(0, static_cast<int>(std::ceil(crossings[k] - 0.5)));
      const int x_end = std::min(width, static_cast<int>(std::ceil(crossings[k + 1] - 0.5)));
      for (int x = x_begin; x < x_end; ++x) mask.set(y, x, true);
    }
  }
  return mask;
}

BinaryMask rasterize_object(const SceneObject& o, int image_size) {
  const int r = o.radius;
  switch (o.shape) {
    case ShapeKind::kSquare: {
      BinaryMask mask(image_size, image_size);
      for (int y = std::max(0, o.cy - r); y < std::min(image_size, o.cy + r); ++y) {
        for (int x = std::max(0, o.cx - r); x < std::min(image_size, o.cx + r); ++x) mask.set(y, x, true);
      }
      return mask;
    }
    case ShapeKind::kCircle: {
      BinaryMask mask(image_size, image_size);
      const double r2 = static_cast<double>(r) * r;
      for (int y = std::max(0, o.cy - r - 1); y < std::min(image_size, o.cy + r + 1); ++y) {
        for (int x = std::max(0, o.cx - r - 1); x < std::min(image_size, o.cx + r + 1); ++x) {
          const double dx = x + 0.5 - o.cx, dy = y + 0.5 - o.cy;
          if (dx * dx + dy * dy <= r2) mask.set(y, x, true);
        }
      }
      return mask;
    }
    case ShapeKind::kTriangle: {
      const std::array<std::pair<double, double>, 3> tri{{{static_cast<double>(o.cx), static_cast<double>(o.cy - r)},
                                                          {static_cast<double>(o.cx + r), static_cast<double>(o.cy + r)},
                                                          {static_cast<double>(o.cx - r), static_cast<double>(o.cy + r)}}};
      return rasterize_polygon(tri, image_size, image_size);
    }
  }
  return BinaryMask(image_size, image_size);
}

GroundingSample render_sample(const SceneSpec& spec, std::string id) {
  const int s = spec.image_size;
  GroundingSample sample;
  sample.id = std::move(id);
  sample.expression = spec.expression;
  sample.image = Image(s, s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      for (int c = 0; c < 3; ++c) sample.image.at(y, x, c) = kBackground[c];
    }
  }
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto mask = rasterize_object(spec.objects[i], s);
    const auto rgb = palette_rgb(spec.objects[i].color);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        if (!mask.at(y, x)) continue;
        for (int c = 0; c < 3; ++c) sample.image.at(y, x, c) = rgb[c];
      }
    }
    if (static_cast<int>(i) == spec.referent) sample.gold_mask = mask;
  }
  sample.gold_box = mask_min_bbox(sample.gold_mask);
  return sample;
}

namespace {

std::vector<std::pair<double, double>> parse_polygon(const json& flat, long line) {
  if (!flat.is_array() || flat.size() % 2 != 0) throw BadAnnotation("polygon must be a flat [x, y, ...] list", line);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < flat.size(); i += 2) pts.emplace_back(flat[i].get<double>(), flat[i + 1].get<double>());
  if (pts.size() < 3) throw BadAnnotation("polygon needs at least 3 vertices", line);
  return pts;
}

}  // namespace

LoadStats for_each_refcoco_sample(const fs::path& root, int image_size,
                                  const std::function<void(GroundingSample&&)>& sink) {
  const auto ann_path = root / "annotations.jsonl";
  std::ifstream in(ann_path);
  if (!in) throw Error("cannot open " + ann_path.string());

  LoadStats stats;
  std::string text;
  for (long line = 1; std::getline(in, text); ++line) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    GroundingSample sample;
    BinaryMask mask;
    Image image;
    std::array<double, 4> bbox{};
    try {
      const auto rec = json::parse(text);
      sample.id = rec.at("id").get<std::string>();
      sample.expression = rec.at("expression").get<std::string>();
      bbox = rec.at("bbox_xywh_px").get<std::array<double, 4>>();
      const auto image_path = root / rec.at("image").get<std::string>();
      if (!fs::exists(image_path)) {
        ++stats.missing_images;
        continue;
      }
      image = read_png(image_path);
      const auto& m = rec.at("mask");
      if (m.contains("polygon")) {
        mask = BinaryMask(image.height, image.width);
        for (const auto& poly : m.at("polygon")) {
          const auto part = rasterize_polygon(parse_polygon(poly, line), image.height, image.width);
          for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
              if (part.at(y, x)) mask.set(y, x, !mask.at(y, x));
            }
          }
        }
      } else if (m.contains("png")) {
        mask = read_mask_png(root / m.at("png").get<std::string>());
        if (mask.height() != image.height || mask.width() != image.width) {
          throw BadAnnotation("mask PNG size differs from the image", line);
        }
      } else {
        throw BadAnnotation("mask needs a polygon or png entry", line);
      }
    } catch (const BadAnnotation&) {
      throw;
    } catch (const json::exception& e) {
      throw BadAnnotation(e.what(), line);
    }
    if (bbox[2] <= 0 || bbox[3] <= 0) throw BadAnnotation("bbox must have positive size", line);
    sample.gold_box = Box{(bbox[0] + 0.5 * bbox[2]) / image.width, (bbox[1] + 0.5 * bbox[3]) / image.height,
                          bbox[2] / image.width, bbox[3] / image.height};
    sample.image = resize_bilinear(image, image_size, image_size);
    sample.gold_mask = resize_nearest(mask, image_size, image_size);
    ++stats.loaded;
    sink(std::move(sample));
  }
  return stats;
}

std::vector<GroundingSample> load_refcoco_format(const fs::path& root, int image_size, LoadStats* stats) {
  std::vector<GroundingSample> samples;
  auto s = for_each_refcoco_sample(root, image_size, [&](GroundingSample&& g) { samples.push_back(std::move(g)); });
  if (stats) *stats = s;
  return samples;
}

std::uint64_t train_sample_seed(std::uint64_t base_seed, std::size_t index) {
  return splitmix64(base_seed) + static_cast<std::uint64_t>(index);
}

std::uint64_t val_sample_seed(std::uint64_t base_seed, std::size_t index) {
  return splitmix64(base_seed) + (std::uint64_t{1} << 40) + static_cast<std::uint64_t>(index);
}

void write_synthetic_split(const fs::path& dir, std::string_view prefix, std::size_t count, int image_size,
                           const std::function<std::uint64_t(std::size_t)>& seed_of) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::ofstream ann(dir / "annotations.jsonl", std::ios::binary | std::ios::trunc);
  for (std::size_t i = 0; i < count; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%.*s-%06zu", static_cast<int>(prefix.size()), prefix.data(), i);
    const auto spec = generate_scene(seed_of(i), image_size);
    const auto sample = render_sample(spec, id);
    const std::string image_rel = std::string("images/") + id + ".png";
    const std::string mask_rel = std::string("masks/") + id + ".png";
    write_png(dir / image_rel, sample.image);
    write_mask_png(dir / mask_rel, sample.gold_mask);

    const auto& b = sample.gold_box;
    nlohmann::ordered_json rec;
    rec["id"] = id;
    rec["image"] = image_rel;
    rec["expression"] = sample.expression;
    rec["bbox_xywh_px"] = {std::lround(b.x1() * image_size), std::lround(b.y1() * image_size),
                           std::lround(b.w * image_size), std::lround(b.h * image_size)};
    rec["mask"] = {{"png", mask_rel}};
    ann << rec.dump() << '\n';
  }
  if (!ann) throw Error("failed writing " + (dir / "annotations.jsonl").string(), /*bad_input=*/false);
}

}  // namespace c3vg
