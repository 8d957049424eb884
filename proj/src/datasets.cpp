#include "clippo/datasets.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "clippo/errors.hpp"

namespace clippo {

std::string_view to_string(PairSource s) { return s == PairSource::text_text ? "text_text" : "image_alt_text"; }

namespace {

std::string chomp(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

TextCorpus read_text_corpus(std::istream& in) {
  TextCorpus corpus;
  std::vector<std::string> doc;
  std::string line;
  while (std::getline(in, line)) {
    line = chomp(std::move(line));
    if (line.empty()) {
      if (!doc.empty()) corpus.push_back(std::move(doc));
      doc.clear();
    } else {
      doc.push_back(line);
    }
  }
  if (!doc.empty()) corpus.push_back(std::move(doc));
  return corpus;
}

TextCorpus load_text_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_text_corpus(in);
}

NspSampler::NspSampler(const TextCorpus& corpus, std::uint64_t seed) : corpus_(&corpus), rng_(seed) {
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (std::size_t i = 0; i + 1 < corpus[d].size(); ++i) pairs_.emplace_back(d, i);
  }
  if (pairs_.empty()) throw DataError("corpus has no document with two consecutive sentences");
}

PairItem NspSampler::next() {
  const auto [d, i] = pairs_[rng_.below(pairs_.size())];
  const auto& doc = (*corpus_)[d];
  return {Item::of_text(doc[i]), Item::of_text(doc[i + 1]), PairSource::text_text};
}

std::vector<PairItem> read_parallel_pairs(std::istream& in) {
  std::vector<PairItem> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(std::move(line));
    const auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw DataError("bitext line " + std::to_string(line_no) + ": expected 2 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    out.push_back({Item::of_text(fields[0]), Item::of_text(fields[1]), PairSource::text_text});
  }
  return out;
}

std::vector<PairItem> parallel_pairs(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_parallel_pairs(in);
}

std::vector<PairItem> load_image_text_tsv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<PairItem> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(std::move(line));
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": expected image_path<TAB>caption");
    }
    const std::filesystem::path image_path = path.parent_path() / fields[0];
    out.push_back({Item::of_image(read_pnm(image_path)), Item::of_text(fields[1]), PairSource::image_alt_text});
  }
  return out;
}

PairSampler epoch_sampler(std::vector<PairItem> items, std::uint64_t seed) {
  if (items.empty()) throw DataError("cannot sample from an empty pair list");
  struct State {
    std::vector<PairItem> items;
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    Rng rng;
  };
  auto st = std::make_shared<State>(State{std::move(items), {}, 0, Rng(seed)});
  st->order.resize(st->items.size());
  for (std::size_t i = 0; i < st->order.size(); ++i) st->order[i] = i;
  st->pos = st->order.size();
  return [st] {
    if (st->pos == st->order.size()) {
      st->rng.shuffle(st->order.begin(), st->order.end());
      st->pos = 0;
    }
    return st->items[st->order[st->pos++]];
  };
}

PairSampler nsp_sampler(const TextCorpus& corpus, std::uint64_t seed) {
  auto sampler = std::make_shared<NspSampler>(corpus, seed);
  return [sampler] { return sampler->next(); };
}

MixedBatcher::MixedBatcher(PairSampler image_text, PairSampler text_text, double p, std::size_t batch_size,
                           std::uint64_t seed)
    : image_text_(std::move(image_text)), text_text_(std::move(text_text)), batch_size_(batch_size), rng_(seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("text fraction must lie in [0, 1)");
  if (batch_size == 0) throw ContractError("batch size must be positive");
  text_count_ = static_cast<std::size_t>(std::llround(p * static_cast<double>(batch_size)));
  if (text_count_ > 0 && !text_text_) throw DataError("text fraction > 0 but no text/text source");
  if (text_count_ < batch_size_ && !image_text_) throw DataError("no image/alt-text source");
}

std::vector<PairItem> MixedBatcher::next() {
  std::vector<PairItem> batch;
  batch.reserve(batch_size_);
  for (std::size_t i = 0; i < text_count_; ++i) batch.push_back(text_text_());
  for (std::size_t i = text_count_; i < batch_size_; ++i) batch.push_back(image_text_());
  rng_.shuffle(batch.begin(), batch.end());
  return batch;
}

}  // namespace clippo
