#include "clippo/renderer.hpp"

#include <algorithm>

#include "clippo/errors.hpp"
#include "clippo/utf8.hpp"

namespace clippo {

TextPosition parse_position(std::string_view name) {
  if (name == "top") return TextPosition::top;
  if (name == "middle") return TextPosition::middle;
  if (name == "bottom") return TextPosition::bottom;
  throw ConfigError("unknown text position '" + std::string(name) + "' (expected top|middle|bottom)");
}

std::string_view to_string(TextPosition position) {
  switch (position) {
    case TextPosition::top:
      return "top";
    case TextPosition::middle:
      return "middle";
    case TextPosition::bottom:
      return "bottom";
  }
  return "top";
}

void RenderConfig::validate() const {
  if (width_px <= 0 || height_px <= 0) throw ConfigError("canvas dimensions must be positive");
  if (line_height_px < 16) throw ConfigError("line height must be at least the glyph height (16)");
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  if (!(value_min < value_max)) throw ConfigError("empty value range");
  const auto in_range = [&](float v) { return v >= value_min && v <= value_max; };
  if (!in_range(background_value) || !in_range(foreground_value)) {
    throw ConfigError("background/foreground outside the value range");
  }
  if (background_value == foreground_value) throw ConfigError("background and foreground must differ");
}

int RenderConfig::max_lines() const {
  if (height_px < 16) return 0;
  return (height_px - 16) / line_height_px + 1;
}

namespace {

class LineCursor {
 public:
  LineCursor(const RenderConfig& cfg, LayoutPlan& plan) : cfg_(cfg), plan_(plan), max_lines_(cfg.max_lines()) {}

  bool full() const { return plan_.truncated; }
  int x() const { return x_; }
  bool on_last_line() const { return line_ + 1 >= max_lines_; }

  void break_line() {
    ++line_;
    x_ = 0;
    started_ = false;
  }

  // Places one glyph at the cursor, breaking first when `may_break` and the
  // glyph overflows the line.
  void place(char32_t cp, int glyph_width, bool may_break) {
    if (full()) return;
    if (glyph_width > cfg_.width_px) {
      plan_.truncated = true;
      return;
    }
    if (x_ + glyph_width > cfg_.width_px) {
      if (!may_break) return;
      break_line();
    }
    if (!started_) {
      if (line_ >= max_lines_) {
        plan_.truncated = true;
        return;
      }
      started_ = true;
      plan_.lines_used = line_ + 1;
    }
    plan_.placements.push_back({cp, x_, line_ * cfg_.line_height_px});
    x_ += glyph_width;
  }

 private:
  const RenderConfig& cfg_;
  LayoutPlan& plan_;
  int max_lines_;
  int line_ = 0;
  int x_ = 0;
  bool started_ = false;
};

void layout_word_mode(std::u32string_view para, const RenderConfig& cfg, const GlyphTable& table,
                      LineCursor& cursor) {
  std::size_t i = 0;
  while (i < para.size() && !cursor.full()) {
    if (para[i] == U' ') {
      const int w = table.lookup(U' ').width_px;
      if (cursor.x() + w > cfg.width_px) {
        // A space that overflows ends the line; the rest of the run is dropped.
        cursor.break_line();
        while (i < para.size() && para[i] == U' ') ++i;
        continue;
      }
      cursor.place(U' ', w, false);
      ++i;
      continue;
    }
    std::size_t end = i;
    int word_width = 0;
    while (end < para.size() && para[end] != U' ') {
      word_width += table.lookup(para[end]).width_px;
      ++end;
    }
    // On the last line a long word is broken by character instead of moved.
    if (cursor.x() + word_width > cfg.width_px && cursor.x() > 0 && !cursor.on_last_line()) cursor.break_line();
    for (std::size_t k = i; k < end; ++k) cursor.place(para[k], table.lookup(para[k]).width_px, true);
    i = end;
  }
}

}  // namespace

LayoutPlan layout_text(std::u32string_view text, const RenderConfig& cfg, const GlyphTable& table) {
  cfg.validate();
  LayoutPlan plan;
  LineCursor cursor(cfg, plan);
  std::size_t start = 0;
  while (start <= text.size() && !cursor.full()) {
    auto nl = text.find(U'\n', start);
    if (nl == std::u32string_view::npos) nl = text.size();
    auto para = text.substr(start, nl - start);
    if (!para.empty() && para.back() == U'\r') para.remove_suffix(1);
    if (cfg.wrap_mode == WrapMode::word) {
      layout_word_mode(para, cfg, table, cursor);
    } else {
      for (char32_t cp : para) cursor.place(cp, table.lookup(cp).width_px, true);
    }
    if (nl == text.size()) break;
    cursor.break_line();
    start = nl + 1;
  }
  return plan;
}

LayoutPlan layout_text(std::string_view utf8, const RenderConfig& cfg, const GlyphTable& table) {
  return layout_text(std::u32string_view(decode_utf8(utf8)), cfg, table);
}

namespace {

void blit(RenderedImage& canvas, const LayoutPlan& plan, const GlyphTable& table, int y_offset, float value) {
  for (const auto& p : plan.placements) {
    const Glyph& g = table.lookup(p.codepoint);
    for (int gy = 0; gy < 16; ++gy) {
      for (int gx = 0; gx < g.width_px; ++gx) {
        if (!g.pixel(gx, gy)) continue;
        for (int c = 0; c < canvas.channels; ++c) canvas.at(p.y_px + y_offset + gy, p.x_px + gx, c) = value;
      }
    }
  }
}

}  // namespace

RenderedImage render_text(std::string_view utf8, const RenderConfig& cfg, const GlyphTable& table) {
  LayoutPlan plan = layout_text(utf8, cfg, table);
  RenderedImage image(cfg.height_px, cfg.width_px, cfg.channels, cfg.background_value);
  blit(image, plan, table, 0, cfg.foreground_value);
  image.text = TextMeta{std::move(plan), cfg.background_value, cfg.foreground_value};
  return image;
}

RenderedImage render_sentence_pair(std::string_view first, std::string_view second, const RenderConfig& cfg,
                                   const GlyphTable& table) {
  std::string joined;
  joined.reserve(first.size() + second.size() + 7);
  joined.append(first).append(" [SEP] ").append(second);
  return render_text(joined, cfg, table);
}

RenderedImage compose_question_image(const RenderedImage& image, std::string_view question,
                                     const RenderConfig& cfg, const GlyphTable& table, TextPosition position) {
  cfg.validate();
  const LayoutPlan plan = layout_text(question, cfg, table);
  if (plan.truncated) throw CompositionError("question does not fit on the canvas");
  const int band = plan.lines_used * cfg.line_height_px;
  const int image_rows = cfg.height_px - band;
  if (image_rows < 1) throw CompositionError("question leaves no rows for the image");

  int band_start = 0;
  switch (position) {
    case TextPosition::top:
      band_start = 0;
      break;
    case TextPosition::middle:
      band_start = image_rows / 2;
      break;
    case TextPosition::bottom:
      band_start = image_rows;
      break;
  }

  const RenderedImage resized = resize_bilinear(convert_channels(image, cfg.channels), image_rows, cfg.width_px);
  RenderedImage out(cfg.height_px, cfg.width_px, cfg.channels, cfg.background_value);
  for (int y = 0; y < image_rows; ++y) {
    const int dst_y = y < band_start ? y : y + band;
    std::copy_n(resized.pixels.begin() + static_cast<std::ptrdiff_t>(resized.index(y, 0, 0)),
                static_cast<std::size_t>(cfg.width_px * cfg.channels),
                out.pixels.begin() + static_cast<std::ptrdiff_t>(out.index(dst_y, 0, 0)));
  }
  blit(out, plan, table, band_start, cfg.foreground_value);
  return out;
}

int used_patch_count(const RenderedImage& image, int patch_px) {
  if (patch_px <= 0 || image.height % patch_px != 0 || image.width % patch_px != 0) {
    throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is not divisible into " + std::to_string(patch_px) + "-px patches");
  }
  if (!image.text) throw ContractError("used_patch_count needs a pure text render");
  const float fg = image.text->foreground;
  const int per_row = image.width / patch_px;
  const int total = per_row * (image.height / patch_px);
  for (int idx = total - 1; idx >= 0; --idx) {
    const int py = (idx / per_row) * patch_px;
    const int px = (idx % per_row) * patch_px;
    for (int y = py; y < py + patch_px; ++y) {
      for (int x = px; x < px + patch_px; ++x) {
        if (image.at(y, x, 0) == fg) return idx + 1;
      }
    }
  }
  return 0;
}

}  // namespace clippo
