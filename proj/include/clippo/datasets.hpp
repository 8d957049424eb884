#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clippo/image.hpp"
#include "clippo/rng.hpp"

namespace clippo {

enum class PairSource { image_alt_text, text_text };

std::string_view to_string(PairSource s);

// One side of a training pair: a natural image, or text to be rendered (or
// tokenized for the tokenized variants).
struct Item {
  std::optional<RenderedImage> image;
  std::string text;

  bool is_image() const noexcept { return image.has_value(); }
  static Item of_text(std::string t) { return {std::nullopt, std::move(t)}; }
  static Item of_image(RenderedImage img) { return {std::move(img), {}}; }
};

struct PairItem {
  Item left;
  Item right;
  PairSource source = PairSource::image_alt_text;
};

using PairSampler = std::function<PairItem()>;

// Documents of sentences. In the file form a blank line ends a document.
using TextCorpus = std::vector<std::vector<std::string>>;

TextCorpus read_text_corpus(std::istream& in);
TextCorpus load_text_corpus(const std::filesystem::path& path);

// Consecutive-sentence pairs drawn uniformly from all pairs that lie inside a
// document. Throws DataError when no document has two sentences.
class NspSampler {
 public:
  NspSampler(const TextCorpus& corpus, std::uint64_t seed);
  PairItem next();
  std::size_t pair_count() const noexcept { return pairs_.size(); }

 private:
  const TextCorpus* corpus_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  Rng rng_;
};

// `src<TAB>tgt` lines. Throws DataError naming the line for anything else.
std::vector<PairItem> read_parallel_pairs(std::istream& in);
std::vector<PairItem> parallel_pairs(const std::filesystem::path& path);

// `image_path<TAB>caption` lines; image paths are relative to the file.
std::vector<PairItem> load_image_text_tsv(const std::filesystem::path& path);

// Cycles through `items`, reshuffling at the start of every epoch.
PairSampler epoch_sampler(std::vector<PairItem> items, std::uint64_t seed);
PairSampler nsp_sampler(const TextCorpus& corpus, std::uint64_t seed);

// round(p * B) text/text pairs and B - round(p * B) image/alt-text pairs per
// batch, shuffled within the batch.
class MixedBatcher {
 public:
  MixedBatcher(PairSampler image_text, PairSampler text_text, double p, std::size_t batch_size, std::uint64_t seed);
  std::vector<PairItem> next();
  std::size_t text_pairs_per_batch() const noexcept { return text_count_; }

 private:
  PairSampler image_text_;
  PairSampler text_text_;
  std::size_t batch_size_;
  std::size_t text_count_;
  Rng rng_;
};

}  // namespace clippo
