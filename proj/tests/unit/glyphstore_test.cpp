#include <doctest.h>

#include <fstream>
#include <sstream>

#include "clippo/errors.hpp"
#include "clippo/glyphstore.hpp"

using namespace clippo;

namespace {

const GlyphTable& bundled() {
  static const GlyphTable t = load_glyph_table(std::filesystem::path(CLIPPO_DEFAULT_FONT));
  return t;
}

}  // namespace

TEST_CASE("narrow and wide glyph lines parse to 16 rows") {
  const auto narrow = parse_hex_line("0041:0000000018242442427E424242420000");
  CHECK(narrow.codepoint == 0x41);
  CHECK(narrow.width_px == 8);
  CHECK(narrow.rows[4] == 0x18);
  CHECK(narrow.rows[9] == 0x7E);
  CHECK(narrow.pixel(3, 4));
  CHECK_FALSE(narrow.pixel(0, 3));

  const std::string wide_data(64, 'F');
  const auto wide = parse_hex_line("65E5:" + wide_data);
  CHECK(wide.width_px == 16);
  for (auto r : wide.rows) CHECK(r == 0xFFFF);
  CHECK(wide.popcount() == 256);
}

TEST_CASE("six digit codepoints are accepted") {
  const auto g = parse_hex_line("1F600:" + std::string(32, '0'));
  CHECK(g.codepoint == 0x1F600);
}

TEST_CASE("to_hex_line reproduces the source line") {
  for (const char* line : {"0041:0000000018242442427E424242420000", "1F600:000000003C42A581A5A599423C000000",
                           "0065:00000000000000003C4242427E40403C"}) {
    CHECK(to_hex_line(parse_hex_line(line)) == line);
  }
}

TEST_CASE("malformed lines raise ParseError with the line number") {
  CHECK_THROWS_AS(parse_hex_line("0041"), ParseError);
  CHECK_THROWS_AS(parse_hex_line("0041:00"), ParseError);
  CHECK_THROWS_AS(parse_hex_line("00G1:" + std::string(32, '0')), ParseError);
  CHECK_THROWS_AS(parse_hex_line("0041:" + std::string(31, '0') + "Z"), ParseError);
  CHECK_THROWS_AS(parse_hex_line("41:" + std::string(32, '0')), ParseError);
  CHECK_THROWS_AS(parse_hex_line("110000:" + std::string(32, '0')), ParseError);

  std::istringstream in("0041:" + std::string(32, '0') + "\nbroken\n");
  try {
    load_glyph_table(in);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("lenient mode skips bad lines and later definitions win") {
  std::istringstream in("# comment\n0041:" + std::string(32, '0') + "\nnope\n0041:" + std::string(32, 'F') + "\n");
  const auto t = load_glyph_table(in, ParseMode::lenient);
  CHECK(t.size() == 1);
  CHECK(t.skipped() == 1);
  CHECK(t.overridden() == 1);
  CHECK(t.lookup(U'A').popcount() == 128);
}

TEST_CASE("lookup falls back to U+FFFD, or a solid box without it") {
  std::istringstream no_fffd("0041:" + std::string(32, '0') + "\n");
  const auto a = load_glyph_table(no_fffd);
  CHECK(a.lookup(U'Z') == solid_box_glyph());
  CHECK(a.lookup(U'Z').popcount() == 128);

  std::istringstream with_fffd("FFFD:" + std::string(30, '0') + "18\n");
  const auto b = load_glyph_table(with_fffd);
  CHECK(b.lookup(U'Z').codepoint == 0xFFFD);
  CHECK(b.lookup(U'Z').popcount() == 2);
}

TEST_CASE("the bundled font loads strictly") {
  const auto& t = bundled();
  CHECK(t.size() == 57087);
  CHECK(t.lookup(U'A').width_px == 8);
  CHECK(t.lookup(U'A').popcount() == 24);
  CHECK(t.lookup(U'日').width_px == 16);
  CHECK(t.contains(0xFFFD));
  CHECK(t.skipped() == 0);
}

TEST_CASE("the bundled font re-serializes byte for byte") {
  std::ifstream in(CLIPPO_DEFAULT_FONT);
  std::string line;
  std::size_t checked = 0;
  while (std::getline(in, line) && checked < 5000) {
    if (line.empty() || line[0] == '#') continue;
    CHECK(to_hex_line(parse_hex_line(line)) == line);
    ++checked;
  }
  CHECK(checked == 5000);
}
