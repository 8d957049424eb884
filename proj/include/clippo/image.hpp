#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace clippo {

struct Placement {
  char32_t codepoint = 0;
  int x_px = 0;
  int y_px = 0;

  friend bool operator==(const Placement&, const Placement&) = default;
};

struct LayoutPlan {
  std::vector<Placement> placements;
  int lines_used = 0;
  bool truncated = false;

  friend bool operator==(const LayoutPlan&, const LayoutPlan&) = default;
};

// Present on pure text renders only.
struct TextMeta {
  LayoutPlan layout;
  float background = 0.0f;
  float foreground = 0.0f;
};

// height x width x channels, row-major, channel-last. Values in [-1, 1].
struct RenderedImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;
  std::optional<TextMeta> text;

  RenderedImage() = default;
  RenderedImage(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  float& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  float at(int y, int x, int c) const { return pixels[index(y, x, c)]; }
};

// Bilinear resampling with half-pixel centres and edge clamping. Resizing to
// the same shape returns the input values unchanged.
RenderedImage resize_bilinear(const RenderedImage& image, int out_height, int out_width);

// 1 -> 3 channels by replication, 3 -> 1 by averaging.
RenderedImage convert_channels(const RenderedImage& image, int channels);

// Netpbm I/O. P5 for one channel, P6 for three; [-1, 1] maps to [0, 255].
void write_pnm(const RenderedImage& image, const std::filesystem::path& path);
RenderedImage read_pnm(const std::filesystem::path& path);

std::uint8_t to_byte(float v);

// FNV-1a over the dimensions and the little-endian float32 bit patterns.
std::uint64_t pixel_digest(const RenderedImage& image);

}  // namespace clippo
