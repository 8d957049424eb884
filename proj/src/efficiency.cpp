#include "clippo/efficiency.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "clippo/errors.hpp"

namespace clippo {

int visual_sequence_length(std::string_view text, const RenderConfig& cfg, const GlyphTable& font) {
  RenderConfig c = cfg;
  c.channels = 1;
  return used_patch_count(render_text(text, c, font), kEfficiencyPatchPx);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

EfficiencyRow make_row(const std::string& language, const std::string& tokenizer, const std::vector<double>& visual,
                       const std::vector<double>& subword) {
  EfficiencyRow row;
  row.language = language;
  row.tokenizer = tokenizer;
  row.samples = visual.size();
  row.visual_median = median(visual);
  row.visual_mean = mean(visual);
  row.subword_median = median(subword);
  row.subword_mean = mean(subword);
  for (std::size_t i = 0; i < visual.size(); ++i) {
    if (visual[i] < subword[i]) ++row.visual_shorter;
  }
  row.shorter_fraction =
      row.samples == 0 ? 0.0 : static_cast<double>(row.visual_shorter) / static_cast<double>(row.samples);
  row.visual_more_efficient = row.shorter_fraction > kEfficiencyThreshold;
  return row;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (in.bad()) throw IoError("failed reading " + path.string());
  return lines;
}

std::vector<std::filesystem::path> txt_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

EfficiencyReport efficiency_report(const std::vector<LanguageCorpus>& corpora, const std::vector<NamedVocab>& vocabs,
                                   const std::vector<ExternalLengths>& external, const RenderConfig& cfg,
                                   const GlyphTable& font, std::size_t sample_n) {
  if (corpora.empty()) throw ContractError("efficiency report needs at least one corpus");
  if (vocabs.empty() && external.empty()) throw ContractError("efficiency report needs a vocabulary or length file");
  if (cfg.width_px % kEfficiencyPatchPx != 0 || cfg.height_px % kEfficiencyPatchPx != 0) {
    throw ConfigError("render canvas must be divisible into 16-px patches");
  }

  EfficiencyReport report;
  for (const auto& corpus : corpora) {
    std::size_t n = sample_n;
    if (n > corpus.sentences.size()) {
      report.warnings.push_back(corpus.language + ": sample_n " + std::to_string(sample_n) + " exceeds corpus size " +
                                std::to_string(corpus.sentences.size()) + ", using all sentences");
      n = corpus.sentences.size();
    }
    std::vector<double> visual(n);
    for (std::size_t i = 0; i < n; ++i) visual[i] = visual_sequence_length(corpus.sentences[i], cfg, font);

    for (const auto& nv : vocabs) {
      BpeEncoder enc(*nv.vocab);
      std::vector<double> subword(n);
      for (std::size_t i = 0; i < n; ++i) subword[i] = static_cast<double>(enc.encode(corpus.sentences[i]).size());
      report.rows.push_back(make_row(corpus.language, nv.name, visual, subword));
    }
    for (const auto& ext : external) {
      const auto it = ext.lengths.find(corpus.language);
      if (it == ext.lengths.end()) {
        report.warnings.push_back(ext.name + ": no lengths for " + corpus.language);
        continue;
      }
      if (it->second.size() < n) {
        throw DataError(ext.name + ": " + std::to_string(it->second.size()) + " lengths for " + corpus.language +
                        ", need " + std::to_string(n));
      }
      std::vector<double> subword(it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(n));
      report.rows.push_back(make_row(corpus.language, ext.name, visual, subword));
    }
  }
  return report;
}

std::vector<LanguageCorpus> load_corpus_dir(const std::filesystem::path& dir) {
  std::vector<LanguageCorpus> out;
  for (const auto& path : txt_files(dir)) {
    LanguageCorpus c;
    c.language = path.stem().string();
    for (auto& line : read_lines(path)) {
      if (!line.empty()) c.sentences.push_back(std::move(line));
    }
    out.push_back(std::move(c));
  }
  if (out.empty()) throw IoError("no .txt corpora in " + dir.string());
  return out;
}

ExternalLengths load_external_lengths(std::string name, const std::filesystem::path& dir) {
  ExternalLengths ext;
  ext.name = std::move(name);
  for (const auto& path : txt_files(dir)) {
    std::vector<int> lengths;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        std::size_t used = 0;
        const int v = std::stoi(line, &used);
        if (used != line.size() || v < 0) throw std::invalid_argument(line);
        lengths.push_back(v);
      } catch (const std::exception&) {
        throw ParseError(line_no, path.string() + ": expected a non-negative integer, got '" + line + "'");
      }
    }
    ext.lengths.emplace(path.stem().string(), std::move(lengths));
  }
  return ext;
}

void write_report_csv(const EfficiencyReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "language,tokenizer,samples,visual_median,visual_mean,subword_median,subword_mean,visual_shorter,"
         "shorter_fraction,visual_more_efficient\n";
  for (const auto& r : report.rows) {
    out << r.language << ',' << r.tokenizer << ',' << r.samples << ',' << r.visual_median << ',' << r.visual_mean
        << ',' << r.subword_median << ',' << r.subword_mean << ',' << r.visual_shorter << ',' << r.shorter_fraction
        << ',' << (r.visual_more_efficient ? "true" : "false") << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace clippo
