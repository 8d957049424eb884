#include "clippo/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>

#include "clippo/errors.hpp"

namespace clippo {

namespace {

bool is_space_byte(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::uint64_t pair_key(std::int32_t a, std::int32_t b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

struct Word {
  std::vector<std::int32_t> symbols;
  std::uint64_t count = 0;
};

}  // namespace

std::int32_t Vocab::special_id(std::string_view name) const {
  for (std::size_t i = 0; i < specials.size(); ++i) {
    if (specials[i] == name) return static_cast<std::int32_t>(pieces.size() + i);
  }
  throw ContractError("vocabulary has no special '" + std::string(name) + "'");
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= text.size(); ++i) {
    if (i == text.size() || is_space_byte(text[i])) {
      if (i > start) out.push_back(text.substr(start, i - start));
      start = i;
    }
  }
  return out;
}

Vocab bpe_train(std::string_view corpus, std::size_t target_size, std::uint64_t seed,
                std::vector<std::string> specials) {
  if (target_size <= 256) throw ContractError("BPE target size must exceed 256");
  if (corpus.empty()) throw DataError("BPE training corpus is empty");

  Vocab vocab;
  vocab.seed = seed;
  vocab.specials = std::move(specials);
  vocab.pieces.reserve(target_size);
  for (int b = 0; b < 256; ++b) vocab.pieces.emplace_back(1, static_cast<char>(b));

  std::map<std::string_view, std::uint64_t> counts;
  for (auto chunk : pretokenize(corpus)) ++counts[chunk];
  std::vector<Word> words;
  words.reserve(counts.size());
  for (const auto& [chunk, n] : counts) {
    Word w;
    w.count = n;
    for (unsigned char c : chunk) w.symbols.push_back(c);
    words.push_back(std::move(w));
  }

  std::unordered_map<std::uint64_t, std::uint64_t> pair_counts;
  while (vocab.size() < target_size) {
    pair_counts.clear();
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) pair_counts[pair_key(w.symbols[i], w.symbols[i + 1])] += w.count;
    }
    if (pair_counts.empty()) break;

    std::uint64_t best_key = 0;
    std::uint64_t best_count = 0;
    for (const auto& [key, n] : pair_counts) {
      if (n < best_count) continue;
      if (n == best_count) {
        const auto& bl = vocab.pieces[key >> 32];
        const auto& br = vocab.pieces[key & 0xffffffffu];
        const auto& cl = vocab.pieces[best_key >> 32];
        const auto& cr = vocab.pieces[best_key & 0xffffffffu];
        if (std::tie(bl, br) >= std::tie(cl, cr)) continue;
      }
      best_key = key;
      best_count = n;
    }

    const auto left = static_cast<std::int32_t>(best_key >> 32);
    const auto right = static_cast<std::int32_t>(best_key & 0xffffffffu);
    const auto merged = static_cast<std::int32_t>(vocab.pieces.size());
    vocab.merges.emplace_back(left, right);
    vocab.pieces.push_back(vocab.pieces[left] + vocab.pieces[right]);

    for (auto& w : words) {
      auto& s = w.symbols;
      std::size_t out = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          s[out++] = merged;
          ++i;
        } else {
          s[out++] = s[i];
        }
      }
      s.resize(out);
    }
  }
  return vocab;
}

BpeEncoder::BpeEncoder(const Vocab& vocab) : vocab_(&vocab) {
  for (std::size_t i = 0; i < vocab.merges.size(); ++i) {
    rank_.emplace(pair_key(vocab.merges[i].first, vocab.merges[i].second), static_cast<std::int32_t>(i));
  }
}

void BpeEncoder::encode_chunk(std::string_view chunk, std::vector<std::int32_t>& out) {
  auto it = cache_.find(std::string(chunk));
  if (it == cache_.end()) {
    std::vector<std::int32_t> s;
    s.reserve(chunk.size());
    for (unsigned char c : chunk) s.push_back(c);
    while (s.size() > 1) {
      std::int32_t best = std::numeric_limits<std::int32_t>::max();
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const auto r = rank_.find(pair_key(s[i], s[i + 1]));
        if (r != rank_.end()) best = std::min(best, r->second);
      }
      if (best == std::numeric_limits<std::int32_t>::max()) break;
      const auto [left, right] = vocab_->merges[static_cast<std::size_t>(best)];
      const auto merged = static_cast<std::int32_t>(256 + best);
      std::size_t o = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          s[o++] = merged;
          ++i;
        } else {
          s[o++] = s[i];
        }
      }
      s.resize(o);
    }
    it = cache_.emplace(std::string(chunk), std::move(s)).first;
  }
  out.insert(out.end(), it->second.begin(), it->second.end());
}

std::vector<std::int32_t> BpeEncoder::encode(std::string_view text) {
  std::vector<std::int32_t> out;
  for (auto chunk : pretokenize(text)) encode_chunk(chunk, out);
  return out;
}

std::vector<std::int32_t> bpe_encode(const Vocab& vocab, std::string_view text) {
  BpeEncoder enc(vocab);
  return enc.encode(text);
}

std::string bpe_decode(const Vocab& vocab, std::span<const std::int32_t> ids) {
  std::string out;
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw ContractError("token id " + std::to_string(id) + " outside the vocabulary");
    }
    const auto u = static_cast<std::size_t>(id);
    out += u < vocab.pieces.size() ? vocab.pieces[u] : vocab.specials[u - vocab.pieces.size()];
  }
  return out;
}

void to_json(nlohmann::json& j, const Vocab& v) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : v.merges) merges.push_back({a, b});
  j = {{"format", "clippo-bpe"}, {"version", 1}, {"seed", v.seed}, {"merges", merges}, {"specials", v.specials}};
}

void from_json(const nlohmann::json& j, Vocab& v) {
  if (j.value("format", "") != "clippo-bpe") throw DataError("not a BPE vocabulary manifest");
  v = Vocab{};
  v.seed = j.value("seed", std::uint64_t{0});
  v.specials = j.value("specials", std::vector<std::string>{});
  for (int b = 0; b < 256; ++b) v.pieces.emplace_back(1, static_cast<char>(b));
  for (const auto& m : j.at("merges")) {
    const auto a = m.at(0).get<std::int32_t>();
    const auto b = m.at(1).get<std::int32_t>();
    const auto n = static_cast<std::int32_t>(v.pieces.size());
    if (a < 0 || b < 0 || a >= n || b >= n) throw DataError("merge references an unknown piece");
    v.merges.emplace_back(a, b);
    v.pieces.push_back(v.pieces[a] + v.pieces[b]);
  }
}

void save_vocab(const Vocab& v, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << nlohmann::json(v).dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<Vocab>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed vocabulary " + path.string() + ": " + e.what());
  }
}

}  // namespace clippo
