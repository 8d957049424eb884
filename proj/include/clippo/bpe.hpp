#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace clippo {

// Byte-level BPE vocabulary. Ids 0..255 are the raw bytes, then one id per
// merge in training order, then the specials.
struct Vocab {
  std::vector<std::pair<std::int32_t, std::int32_t>> merges;
  std::vector<std::string> pieces;
  std::vector<std::string> specials;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return pieces.size() + specials.size(); }
  std::int32_t special_id(std::string_view name) const;

  friend bool operator==(const Vocab&, const Vocab&) = default;
};

// Splits text into pre-tokenization chunks; each whitespace byte starts a new
// chunk, so a space stays attached to the word after it.
std::vector<std::string_view> pretokenize(std::string_view text);

// Merges the most frequent adjacent pair until target_size ids exist (counting
// specials) or no adjacent pair is left. Ties go to the lexicographically
// smallest (left bytes, right bytes). Throws DataError on an empty corpus and
// ContractError when target_size <= 256.
Vocab bpe_train(std::string_view corpus, std::size_t target_size, std::uint64_t seed,
                std::vector<std::string> specials = {});

std::vector<std::int32_t> bpe_encode(const Vocab& vocab, std::string_view text);
std::string bpe_decode(const Vocab& vocab, std::span<const std::int32_t> ids);

void to_json(nlohmann::json& j, const Vocab& v);
void from_json(const nlohmann::json& j, Vocab& v);
void save_vocab(const Vocab& v, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

// Encoder with a per-chunk cache.
class BpeEncoder {
 public:
  explicit BpeEncoder(const Vocab& vocab);
  std::vector<std::int32_t> encode(std::string_view text);
  const Vocab& vocab() const noexcept { return *vocab_; }

 private:
  void encode_chunk(std::string_view chunk, std::vector<std::int32_t>& out);

  const Vocab* vocab_;
  std::unordered_map<std::uint64_t, std::int32_t> rank_;  // (left << 32 | right) -> merge index
  std::unordered_map<std::string, std::vector<std::int32_t>> cache_;
};

}  // namespace clippo
