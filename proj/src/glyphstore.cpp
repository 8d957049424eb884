#include "clippo/glyphstore.hpp"

#include <bit>
#include <fstream>

#include "clippo/errors.hpp"
#include "clippo/rng.hpp"

namespace clippo {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

std::string_view trim_eol(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

int Glyph::popcount() const {
  int n = 0;
  for (auto r : rows) n += std::popcount(static_cast<unsigned>(r));
  return n;
}

Glyph parse_hex_line(std::string_view line, std::size_t line_no) {
  line = trim_eol(line);
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) throw ParseError(line_no, "missing ':' separator");

  const auto cp_text = line.substr(0, colon);
  const auto data = line.substr(colon + 1);
  if (cp_text.size() < 4 || cp_text.size() > 6) {
    throw ParseError(line_no, "codepoint must have 4-6 hex digits, got '" + std::string(cp_text) + "'");
  }

  Glyph g;
  std::uint32_t cp = 0;
  for (char c : cp_text) {
    const int v = hex_value(c);
    if (v < 0 || (c >= 'a' && c <= 'f')) throw ParseError(line_no, "non-hex digit in codepoint");
    cp = cp * 16 + static_cast<std::uint32_t>(v);
  }
  if (cp > 0x10FFFF) throw ParseError(line_no, "codepoint out of Unicode range");
  g.codepoint = cp;

  if (data.size() == 32) {
    g.width_px = 8;
  } else if (data.size() == 64) {
    g.width_px = 16;
  } else {
    throw ParseError(line_no, "glyph data must have 32 or 64 hex digits, got " + std::to_string(data.size()));
  }

  const std::size_t per_row = data.size() / 16;
  for (std::size_t r = 0; r < 16; ++r) {
    std::uint16_t bits = 0;
    for (std::size_t k = 0; k < per_row; ++k) {
      const int v = hex_value(data[r * per_row + k]);
      if (v < 0) throw ParseError(line_no, "non-hex digit in glyph data");
      bits = static_cast<std::uint16_t>((bits << 4) | v);
    }
    g.rows[r] = bits;
  }
  return g;
}

std::string to_hex_line(const Glyph& glyph) {
  static constexpr char digits[] = "0123456789ABCDEF";
  std::string out;
  std::uint32_t cp = glyph.codepoint;
  std::string cp_text;
  do {
    cp_text.insert(cp_text.begin(), digits[cp & 0xF]);
    cp >>= 4;
  } while (cp != 0);
  while (cp_text.size() < 4) cp_text.insert(cp_text.begin(), '0');
  out += cp_text;
  out += ':';
  const int nibbles = glyph.width_px / 4;
  for (auto row : glyph.rows) {
    for (int k = nibbles - 1; k >= 0; --k) out += digits[(row >> (4 * k)) & 0xF];
  }
  return out;
}

Glyph solid_box_glyph() {
  Glyph g;
  g.codepoint = 0xFFFD;
  g.width_px = 8;
  g.rows.fill(0xFF);
  return g;
}

GlyphTable load_glyph_table(std::istream& source, ParseMode mode) {
  GlyphTable table;
  std::uint64_t digest = fnv1a64("");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    digest = fnv1a64(line, digest);
    digest = fnv1a64("\n", digest);
    const auto trimmed = trim_eol(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    Glyph g;
    try {
      g = parse_hex_line(trimmed, line_no);
    } catch (const ParseError&) {
      if (mode == ParseMode::strict) throw;
      ++table.skipped_;
      continue;
    }
    auto [it, inserted] = table.entries_.insert_or_assign(g.codepoint, g);
    if (!inserted) ++table.overridden_;
  }
  if (source.bad()) throw IoError("failed reading glyph source");
  if (const auto it = table.entries_.find(0xFFFD); it != table.entries_.end()) {
    table.fallback_ = it->second;
  }
  table.digest_ = digest;
  return table;
}

GlyphTable load_glyph_table(const std::filesystem::path& path, ParseMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open font file " + path.string());
  return load_glyph_table(in, mode);
}

}  // namespace clippo
