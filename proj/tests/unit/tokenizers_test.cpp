#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "clippo/bpe.hpp"
#include "clippo/efficiency.hpp"
#include "clippo/errors.hpp"
#include "clippo/rng.hpp"

using namespace clippo;

namespace {

const GlyphTable& font() {
  static const GlyphTable t = load_glyph_table(std::filesystem::path(CLIPPO_DEFAULT_FONT));
  return t;
}

std::vector<std::string> chunks_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if ((c == ' ' || c == '\t' || c == '\n' || c == '\r') && !cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
    cur += c;
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Plain string-piece BPE: recount every pair, take the most frequent, break
// ties on the smaller (left, right) strings.
std::vector<std::pair<std::string, std::string>> oracle_merges(const std::string& corpus, std::size_t n_merges) {
  std::vector<std::vector<std::string>> words;
  for (const auto& c : chunks_of(corpus)) {
    std::vector<std::string> w;
    for (char b : c) w.emplace_back(1, b);
    words.push_back(w);
  }
  std::vector<std::pair<std::string, std::string>> merges;
  while (merges.size() < n_merges) {
    std::map<std::pair<std::string, std::string>, int> counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto m = best->first;
    merges.push_back(m);
    for (auto& w : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == m.first && w[i + 1] == m.second) {
          next.push_back(m.first + m.second);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = next;
    }
  }
  return merges;
}

std::vector<std::string> oracle_encode(const std::vector<std::pair<std::string, std::string>>& merges,
                                       const std::string& text) {
  std::vector<std::string> out;
  for (const auto& c : chunks_of(text)) {
    std::vector<std::string> w;
    for (char b : c) w.emplace_back(1, b);
    for (const auto& m : merges) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == m.first && w[i + 1] == m.second) {
          next.push_back(m.first + m.second);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = next;
    }
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

std::string random_utf8(Rng& rng, std::size_t max_cps) {
  std::string s;
  const auto n = rng.below(max_cps + 1);
  for (std::uint64_t i = 0; i < n; ++i) {
    char32_t cp = 0;
    switch (rng.below(4)) {
      case 0: cp = static_cast<char32_t>(0x20 + rng.below(0x5f)); break;
      case 1: cp = static_cast<char32_t>(0x80 + rng.below(0x780)); break;
      case 2:
        do cp = static_cast<char32_t>(0x800 + rng.below(0xf800)); while (cp >= 0xd800 && cp < 0xe000);
        break;
      default: cp = static_cast<char32_t>(0x10000 + rng.below(0x100000)); break;
    }
    if (cp < 0x80) {
      s += static_cast<char>(cp);
    } else if (cp < 0x800) {
      s += static_cast<char>(0xc0 | (cp >> 6));
      s += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
      s += static_cast<char>(0xe0 | (cp >> 12));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
      s += static_cast<char>(0x80 | (cp & 0x3f));
    } else {
      s += static_cast<char>(0xf0 | (cp >> 18));
      s += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
      s += static_cast<char>(0x80 | (cp & 0x3f));
    }
  }
  return s;
}

const std::string kCorpus =
    "the cat sat on the mat. the dog sat on the log.\n"
    "a cat and a dog met on a mat; the cat ran.\n"
    "der Hund und die Katze sassen auf der Matte.\n";

}  // namespace

TEST_CASE("pretokenize keeps leading whitespace on the following chunk") {
  const auto parts = pretokenize("ab  c\nd");
  REQUIRE(parts.size() == 4);
  CHECK(parts[0] == "ab");
  CHECK(parts[1] == " ");
  CHECK(parts[2] == " c");
  CHECK(parts[3] == "\nd");
  CHECK(pretokenize("").empty());
}

TEST_CASE("training merges match a naive string oracle") {
  const Vocab v = bpe_train(kCorpus, 256 + 40, 1);
  const auto want = oracle_merges(kCorpus, 40);
  REQUIRE(v.merges.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CAPTURE(i);
    CHECK(v.pieces[static_cast<std::size_t>(v.merges[i].first)] == want[i].first);
    CHECK(v.pieces[static_cast<std::size_t>(v.merges[i].second)] == want[i].second);
  }
  for (const std::string text : {"the cat", " dog mat", "Katze und Hund", "xyz"}) {
    std::vector<std::string> got;
    for (auto id : bpe_encode(v, text)) got.push_back(v.pieces[static_cast<std::size_t>(id)]);
    CHECK(got == oracle_encode(want, text));
  }
}

TEST_CASE("training stops when no pair is left") {
  const Vocab v = bpe_train("ab ab", 1000, 0);
  CHECK(v.merges.size() == 2);  // "ab", then " ab"
  CHECK(v.size() == 258);
  CHECK(bpe_encode(v, "ab ab") == std::vector<std::int32_t>{256, 257});
}

TEST_CASE("specials count towards the target size and are never produced by encode") {
  const Vocab v = bpe_train(kCorpus, 300, 0, {"<pad>", "<eos>"});
  CHECK(v.size() == 300);
  CHECK(v.special_id("<pad>") == 298);
  CHECK(v.special_id("<eos>") == 299);
  CHECK_THROWS_AS(v.special_id("<unk>"), ContractError);
  for (auto id : bpe_encode(v, "<pad> the cat")) CHECK(id < 298);
  const std::vector<std::int32_t> with_special{v.special_id("<eos>")};
  CHECK(bpe_decode(v, with_special) == "<eos>");
}

TEST_CASE("training errors") {
  CHECK_THROWS_AS(bpe_train("", 300, 0), DataError);
  CHECK_THROWS_AS(bpe_train("abc", 256, 0), ContractError);
  const std::vector<std::int32_t> bad{-1};
  CHECK_THROWS_AS(bpe_decode(bpe_train("abc", 300, 0), bad), ContractError);
}

TEST_CASE("encode and decode round trip random UTF-8") {
  Rng rng(17);
  std::string corpus;
  for (int i = 0; i < 200; ++i) corpus += random_utf8(rng, 20) + " ";
  const Vocab v = bpe_train(corpus, 600, 4);
  BpeEncoder enc(v);
  for (int i = 0; i < 2000; ++i) {
    const auto s = random_utf8(rng, 30);
    CHECK(bpe_decode(v, enc.encode(s)) == s);
  }
}

TEST_CASE("training is deterministic and vocabularies survive a file round trip") {
  const Vocab a = bpe_train(kCorpus, 320, 9, {"<pad>"});
  const Vocab b = bpe_train(kCorpus, 320, 9, {"<pad>"});
  CHECK(a == b);
  const auto path = std::filesystem::temp_directory_path() / "clippo_tokenizers_vocab.json";
  save_vocab(a, path);
  CHECK(load_vocab(path) == a);

  std::ofstream(path) << "{\"format\": \"other\"}";
  CHECK_THROWS_AS(load_vocab(path), DataError);
  std::ofstream(path) << "{\"format\": \"clippo-bpe\", \"merges\": [[300, 1]]}";
  CHECK_THROWS_AS(load_vocab(path), DataError);
  CHECK_THROWS_AS(load_vocab(path.parent_path() / "clippo_no_such_vocab.json"), IoError);
}

TEST_CASE("visual sequence length counts patches up to the last inked one") {
  RenderConfig cfg;
  CHECK(visual_sequence_length("", cfg, font()) == 0);
  CHECK(visual_sequence_length("A", cfg, font()) == 1);
  CHECK(visual_sequence_length("AAA", cfg, font()) == 2);
  CHECK(visual_sequence_length(std::string(29, 'x'), cfg, font()) == 14 + 1);
}

TEST_CASE("median") {
  CHECK(median({}) == 0.0);
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
}

TEST_CASE("efficiency verdict, ties and sample_n") {
  RenderConfig cfg;
  // Byte-level vocabulary: every byte is one token, so "AAAA" costs 4 ids and 2 patches.
  const Vocab bytes = bpe_train("ab", 257, 0);
  LanguageCorpus wins{"wins", {"AAAA", "AAAA", "AAAA", "AAAA", "AAAA"}};
  LanguageCorpus ties{"ties", {"A", "A", "A", "A", "A"}};
  const auto report = efficiency_report({wins, ties}, {{"bytes", &bytes}}, {}, cfg, font(), 4);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].samples == 4);
  CHECK(report.rows[0].visual_median == 2.0);
  CHECK(report.rows[0].subword_median == 4.0);
  CHECK(report.rows[0].shorter_fraction == 1.0);
  CHECK(report.rows[0].visual_more_efficient);
  CHECK(report.rows[1].visual_shorter == 0);
  CHECK_FALSE(report.rows[1].visual_more_efficient);
  CHECK(report.warnings.empty());

  LanguageCorpus three{"three", {"AAAA", "AAAA", "AAAA", "A"}};
  const auto edge = efficiency_report({three}, {{"bytes", &bytes}}, {}, cfg, font(), 10);
  CHECK(edge.rows[0].shorter_fraction == 0.75);
  CHECK_FALSE(edge.rows[0].visual_more_efficient);
  CHECK(edge.warnings.size() == 1);
}

TEST_CASE("external length lists") {
  RenderConfig cfg;
  LanguageCorpus c{"xx", {"AAAA", "AAAA"}};
  ExternalLengths ext{"ext", {{"xx", {9, 1}}}};
  const auto r = efficiency_report({c}, {}, {ext}, cfg, font(), 2);
  CHECK(r.rows[0].visual_shorter == 1);
  ExternalLengths short_list{"ext", {{"xx", {9}}}};
  CHECK_THROWS_AS(efficiency_report({c}, {}, {short_list}, cfg, font(), 2), DataError);
  CHECK_THROWS_AS(efficiency_report({c}, {}, {}, cfg, font(), 2), ContractError);
  CHECK_THROWS_AS(efficiency_report({}, {}, {ext}, cfg, font(), 2), ContractError);

  const auto dir = std::filesystem::temp_directory_path() / "clippo_tokenizers_ext";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "xx.txt") << "3\n4\n";
  std::ofstream(dir / "yy.txt") << "3\nfour\n";
  try {
    load_external_lengths("ext", dir);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::filesystem::remove(dir / "yy.txt");
  CHECK(load_external_lengths("ext", dir).lengths.at("xx") == std::vector<int>{3, 4});
  std::ofstream(dir / "zz.txt") << "A\n\nB\n";
  const auto corpora = load_corpus_dir(dir);
  CHECK(corpora.size() == 2);
  CHECK(corpora[1].sentences == std::vector<std::string>{"A", "B"});
}
