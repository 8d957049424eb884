#include "clippo/shapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "clippo/errors.hpp"
#include "clippo/rng.hpp"

namespace clippo {

namespace {

constexpr std::array<std::array<float, 3>, 5> kRgb = {{
    {1.0f, -0.8f, -0.8f},
    {-0.8f, 0.9f, -0.8f},
    {-0.6f, -0.6f, 1.0f},
    {1.0f, 1.0f, -0.8f},
    {0.9f, -0.8f, 1.0f},
}};

constexpr float kBackground = -0.6f;

bool inside(const ShapeObject& o, double x, double y) {
  const double dx = x - o.cx;
  const double dy = y - o.cy;
  if (o.kind == 0) return dx * dx + dy * dy <= o.radius * o.radius;
  return std::abs(dx) <= o.radius * 0.85 && std::abs(dy) <= o.radius * 0.85;
}

bool overlaps(const ShapeObject& a, const std::vector<ShapeObject>& others) {
  for (const auto& b : others) {
    if (std::hypot(a.cx - b.cx, a.cy - b.cy) < a.radius + b.radius + 2.0) return true;
  }
  return false;
}

}  // namespace

const std::vector<std::string>& shape_colors() {
  static const std::vector<std::string> names = {"red", "green", "blue", "yellow", "purple"};
  return names;
}

const std::vector<std::string>& shape_kinds() {
  static const std::vector<std::string> names = {"circle", "square"};
  return names;
}

const std::vector<std::string>& shape_quadrants() {
  static const std::vector<std::string> names = {"top left", "top right", "bottom left", "bottom right"};
  return names;
}

RenderedImage draw_shapes(std::span<const ShapeObject> objects, int image_px, int channels, std::uint64_t noise_seed) {
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  RenderedImage img(image_px, image_px, channels, kBackground);
  Rng noise(noise_seed);
  for (auto& v : img.pixels) v += static_cast<float>(noise.uniform(-0.05, 0.05));
  for (const auto& o : objects) {
    const auto& rgb = kRgb.at(static_cast<std::size_t>(o.color));
    const int y0 = std::max(0, static_cast<int>(std::floor(o.cy - o.radius)));
    const int y1 = std::min(image_px - 1, static_cast<int>(std::ceil(o.cy + o.radius)));
    const int x0 = std::max(0, static_cast<int>(std::floor(o.cx - o.radius)));
    const int x1 = std::min(image_px - 1, static_cast<int>(std::ceil(o.cx + o.radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!inside(o, x + 0.5, y + 0.5)) continue;
        if (channels == 3) {
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[static_cast<std::size_t>(c)];
        } else {
          img.at(y, x, 0) = (rgb[0] + rgb[1] + rgb[2]) / 3.0f;
        }
      }
    }
  }
  for (auto& v : img.pixels) v = std::clamp(v, -1.0f, 1.0f);
  return img;
}

ShapeClassSet make_shape_classes(int per_class, int image_px, int channels, std::uint64_t seed) {
  if (per_class < 0 || image_px < 16) throw ConfigError("invalid shape dataset size");
  ShapeClassSet set;
  const auto& colors = shape_colors();
  const auto& kinds = shape_kinds();
  for (int k = 0; k < static_cast<int>(kinds.size()); ++k) {
    for (int c = 0; c < static_cast<int>(colors.size()); ++c) set.class_names.push_back(colors[c] + " " + kinds[k]);
  }
  Rng rng = Rng::substream(seed, "shape-classes");
  const double half = image_px / 2.0;
  for (int i = 0; i < per_class; ++i) {
    for (int label = 0; label < kShapeClassCount; ++label) {
      const int quadrant = (i + label) % 4;
      ShapeObject o;
      o.color = label % static_cast<int>(colors.size());
      o.kind = label / static_cast<int>(colors.size());
      o.radius = half * rng.uniform(0.25, 0.38);
      const double lo = o.radius + 1.0;
      const double hi = half - o.radius - 1.0;
      o.cx = (quadrant % 2) * half + rng.uniform(lo, std::max(lo, hi));
      o.cy = (quadrant / 2) * half + rng.uniform(lo, std::max(lo, hi));
      set.images.push_back(draw_shapes(std::span<const ShapeObject>(&o, 1), image_px, channels, rng.next_u64()));
      set.labels.push_back(label);
      set.quadrants.push_back(quadrant);
      set.captions.push_back(set.class_names[static_cast<std::size_t>(label)] + " " +
                             shape_quadrants()[static_cast<std::size_t>(quadrant)]);
    }
  }
  return set;
}

VqaDataset make_shapes_vqa(int count, int image_px, int channels, std::uint64_t seed) {
  if (count < 0 || image_px < 16) throw ConfigError("invalid VQA dataset size");
  const auto& colors = shape_colors();
  const auto& kinds = shape_kinds();
  VqaDataset ds;
  for (const char* n : {"1", "2", "3"}) ds.answers.emplace_back(n);
  for (const auto& c : colors) ds.answers.push_back(c);
  for (const auto& k : kinds) ds.answers.push_back(k);
  ds.answers.emplace_back("yes");
  ds.answers.emplace_back("no");
  const auto answer_id = [&](const std::string& a) {
    return static_cast<int>(std::find(ds.answers.begin(), ds.answers.end(), a) - ds.answers.begin());
  };

  Rng rng = Rng::substream(seed, "shapes-vqa");
  for (int i = 0; i < count; ++i) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const int color = static_cast<int>(rng.below(colors.size()));
    const int kind = static_cast<int>(rng.below(kinds.size()));
    std::vector<ShapeObject> objects;
    int attempts = 0;
    while (static_cast<int>(objects.size()) < n) {
      ShapeObject o{color, kind, 0.0, 0.0, image_px * rng.uniform(0.1, 0.14)};
      o.cx = rng.uniform(o.radius + 1.0, image_px - o.radius - 1.0);
      o.cy = rng.uniform(o.radius + 1.0, image_px - o.radius - 1.0);
      if (++attempts > 1000) {
        objects.clear();
        attempts = 0;
      }
      if (!overlaps(o, objects)) objects.push_back(o);
    }
    VqaExample ex;
    ex.image = draw_shapes(objects, image_px, channels, rng.next_u64());
    switch (i % 4) {
      case 0:
        ex.question = "how many";
        ex.answer = answer_id(std::to_string(n));
        break;
      case 1:
        ex.question = "color?";
        ex.answer = answer_id(colors[static_cast<std::size_t>(color)]);
        break;
      case 2:
        ex.question = "shape?";
        ex.answer = answer_id(kinds[static_cast<std::size_t>(kind)]);
        break;
      default: {
        int asked = color;
        if (rng.below(2) == 1) asked = static_cast<int>((color + 1 + rng.below(colors.size() - 1)) % colors.size());
        ex.question = colors[static_cast<std::size_t>(asked)] + "?";
        ex.answer = answer_id(asked == color ? "yes" : "no");
        break;
      }
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

}  // namespace clippo
