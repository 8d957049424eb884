#pragma once

#include <string>
#include <string_view>

#include "clippo/glyphstore.hpp"
#include "clippo/image.hpp"

namespace clippo {

enum class WrapMode { word, character };

enum class TextPosition { top, middle, bottom };

TextPosition parse_position(std::string_view name);
std::string_view to_string(TextPosition position);

struct RenderConfig {
  int width_px = 224;
  int height_px = 224;
  int line_height_px = 16;
  float background_value = 0.25f;
  float foreground_value = -1.0f;
  float value_min = -1.0f;
  float value_max = 1.0f;
  WrapMode wrap_mode = WrapMode::word;
  int channels = 3;

  // Throws ConfigError.
  void validate() const;

  // Number of text lines that fit the canvas.
  int max_lines() const;
};

// Monospace left-to-right layout. Newlines force a break, words wrap greedily
// and fall back to per-character breaks when wider than the canvas. Text that
// does not fit is dropped and flagged as truncated.
LayoutPlan layout_text(std::u32string_view text, const RenderConfig& cfg, const GlyphTable& table);
LayoutPlan layout_text(std::string_view utf8, const RenderConfig& cfg, const GlyphTable& table);

RenderedImage render_text(std::string_view utf8, const RenderConfig& cfg, const GlyphTable& table);

// Renders "s1 [SEP] s2".
RenderedImage render_sentence_pair(std::string_view first, std::string_view second, const RenderConfig& cfg,
                                   const GlyphTable& table);

// Lays the question out in a band of whole text lines at `position` and fills
// the remaining rows with the bilinearly resized image. For `middle` the
// resized image is split around the band. Throws CompositionError when the
// question leaves no room for the image.
RenderedImage compose_question_image(const RenderedImage& image, std::string_view question,
                                     const RenderConfig& cfg, const GlyphTable& table, TextPosition position);

// 1 + raster index of the last patch containing a foreground pixel, 0 when
// blank. Requires a pure text render; throws ShapeError when the canvas is not
// divisible by patch_px.
int used_patch_count(const RenderedImage& image, int patch_px);

}  // namespace clippo
