#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "clippo/bpe.hpp"
#include "clippo/glyphstore.hpp"
#include "clippo/renderer.hpp"

namespace clippo {

inline constexpr int kEfficiencyPatchPx = 16;
inline constexpr double kEfficiencyThreshold = 0.75;

// Patches up to and including the last 16x16 patch holding rendered text.
int visual_sequence_length(std::string_view text, const RenderConfig& cfg, const GlyphTable& font);

struct LanguageCorpus {
  std::string language;
  std::vector<std::string> sentences;
};

struct NamedVocab {
  std::string name;
  const Vocab* vocab = nullptr;
};

// Precomputed subword lengths for one external tokenizer, per language.
struct ExternalLengths {
  std::string name;
  std::map<std::string, std::vector<int>> lengths;
};

struct EfficiencyRow {
  std::string language;
  std::string tokenizer;
  std::size_t samples = 0;
  double visual_median = 0.0;
  double visual_mean = 0.0;
  double subword_median = 0.0;
  double subword_mean = 0.0;
  std::size_t visual_shorter = 0;
  double shorter_fraction = 0.0;
  bool visual_more_efficient = false;
};

struct EfficiencyReport {
  std::vector<EfficiencyRow> rows;
  std::vector<std::string> warnings;
};

// One row per (language, tokenizer). Only the first sample_n sentences of each
// corpus are used. A tie counts as not shorter, and the verdict needs a
// fraction strictly above 0.75. Throws ContractError when there is no corpus
// or no tokenizer and DataError when an external length list is too short.
EfficiencyReport efficiency_report(const std::vector<LanguageCorpus>& corpora, const std::vector<NamedVocab>& vocabs,
                                   const std::vector<ExternalLengths>& external, const RenderConfig& cfg,
                                   const GlyphTable& font, std::size_t sample_n);

// Every `<lang>.txt` in the directory, one sentence per line, sorted by name.
std::vector<LanguageCorpus> load_corpus_dir(const std::filesystem::path& dir);
// `<lang>.txt` files holding one integer per line.
ExternalLengths load_external_lengths(std::string name, const std::filesystem::path& dir);

void write_report_csv(const EfficiencyReport& report, const std::filesystem::path& path);

double median(std::vector<double> values);

}  // namespace clippo
