#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clippo/image.hpp"

namespace clippo {

// Synthetic scenes of flat coloured shapes on a dark background.
struct ShapeObject {
  int color = 0;  // index into shape_colors()
  int kind = 0;   // index into shape_kinds()
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

const std::vector<std::string>& shape_colors();
const std::vector<std::string>& shape_kinds();
const std::vector<std::string>& shape_quadrants();

RenderedImage draw_shapes(std::span<const ShapeObject> objects, int image_px, int channels, std::uint64_t noise_seed);

struct ShapeClassSet {
  std::vector<std::string> class_names;  // "red circle", ...
  std::vector<RenderedImage> images;
  std::vector<int> labels;
  std::vector<int> quadrants;
  std::vector<std::string> captions;  // "red circle top left"
};

inline constexpr int kShapeClassCount = 10;

// per_class images of each (colour, kind) class with one shape per image.
// Image i of class c sits in quadrant (i + c) mod 4, so per_class = 4 yields
// 40 distinct captions.
ShapeClassSet make_shape_classes(int per_class, int image_px, int channels, std::uint64_t seed);

struct VqaExample {
  RenderedImage image;
  std::string question;
  int answer = 0;
};

struct VqaDataset {
  std::vector<std::string> answers;
  std::vector<VqaExample> examples;
};

// Scenes of 1 to 3 identical shapes with questions "how many", "color?",
// "shape?" and "<colour>?" (yes/no), in equal proportion.
VqaDataset make_shapes_vqa(int count, int image_px, int channels, std::uint64_t seed);

}  // namespace clippo
