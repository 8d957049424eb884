#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>

namespace clippo {

// One 16-row Unifont bitmap. Row bit (width_px - 1) is the leftmost pixel.
struct Glyph {
  char32_t codepoint = 0;
  int width_px = 8;
  std::array<std::uint16_t, 16> rows{};

  bool pixel(int x, int y) const {
    return (rows[static_cast<std::size_t>(y)] >> (width_px - 1 - x)) & 1u;
  }

  int popcount() const;

  friend bool operator==(const Glyph&, const Glyph&) = default;
};

enum class ParseMode { strict, lenient };

// Parses `HEXCODEPOINT:HEXDATA`. `line_no` is only used for error messages.
// Throws ParseError.
Glyph parse_hex_line(std::string_view line, std::size_t line_no = 1);

// Inverse of parse_hex_line's data field (uppercase, zero padded).
std::string to_hex_line(const Glyph& glyph);

// 8x16 box with every pixel set; fallback when the font lacks U+FFFD.
Glyph solid_box_glyph();

// Immutable after load; lookups are safe from any number of threads.
class GlyphTable {
 public:
  GlyphTable() : fallback_(solid_box_glyph()) {}

  const Glyph& lookup(char32_t cp) const noexcept {
    const auto it = entries_.find(cp);
    return it == entries_.end() ? fallback_ : it->second;
  }

  bool contains(char32_t cp) const { return entries_.contains(cp); }
  std::size_t size() const noexcept { return entries_.size(); }
  const Glyph& fallback() const noexcept { return fallback_; }

  // Lines whose codepoint had already been defined (last definition wins).
  std::size_t overridden() const noexcept { return overridden_; }
  // Malformed lines dropped in lenient mode.
  std::size_t skipped() const noexcept { return skipped_; }

  // Content hash of the source bytes (FNV-1a 64), used to pin fonts.
  std::uint64_t source_digest() const noexcept { return digest_; }

  friend GlyphTable load_glyph_table(std::istream& source, ParseMode mode);

 private:
  std::unordered_map<char32_t, Glyph> entries_;
  Glyph fallback_;
  std::size_t overridden_ = 0;
  std::size_t skipped_ = 0;
  std::uint64_t digest_ = 0;
};

GlyphTable load_glyph_table(std::istream& source, ParseMode mode = ParseMode::strict);
GlyphTable load_glyph_table(const std::filesystem::path& path, ParseMode mode = ParseMode::strict);

}  // namespace clippo
