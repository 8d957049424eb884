#include "clippo/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "clippo/analysis.hpp"
#include "clippo/config.hpp"
#include "clippo/efficiency.hpp"
#include "clippo/errors.hpp"
#include "clippo/eval.hpp"
#include "clippo/selfcheck.hpp"
#include "clippo/shapes.hpp"
#include "clippo/transfer.hpp"
#include "clippo/utf8.hpp"

namespace clippo {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tsv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
    out.push_back(line.substr(start, tab - start));
  }
  out.push_back(line.substr(start));
  return out;
}

// Non-empty lines split on tabs; every line must have `fields` columns.
std::vector<std::vector<std::string>> read_tsv(const fs::path& path, std::size_t fields) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = tsv_fields(line);
    if (f.size() != fields) {
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": expected " + std::to_string(fields) +
                      " tab-separated fields");
    }
    rows.push_back(std::move(f));
  }
  return rows;
}

std::vector<std::string> read_nonempty_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

RenderedImage load_image_row(const fs::path& base, const std::string& rel, std::size_t row) {
  try {
    return read_pnm(base / rel);
  } catch (const Error& e) {
    throw IoError("row " + std::to_string(row) + " (" + rel + "): " + e.what());
  }
}

int class_index(const std::vector<std::string>& classes, const std::string& name) {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return static_cast<int>(i);
  }
  throw DataError("unknown class '" + name + "'");
}

struct LabeledImages {
  std::vector<RenderedImage> images;
  std::vector<int> labels;
};

LabeledImages load_labeled_images(const fs::path& tsv, const std::vector<std::string>& classes) {
  LabeledImages out;
  std::size_t row = 0;
  for (const auto& f : read_tsv(tsv, 2)) {
    out.images.push_back(load_image_row(tsv.parent_path(), f[0], ++row));
    out.labels.push_back(class_index(classes, f[1]));
  }
  return out;
}

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected NAME=VALUE, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

// ---------------------------------------------------------------------------
// Shared model and run settings

struct ModelKey {
  const char* key;
  const char* help;
};

const std::vector<ModelKey>& train_keys() {
  static const std::vector<ModelKey> keys = {
      {"variant", "encoder variant"},
      {"patch_px", "patch size in pixels"},
      {"image_px", "input resolution"},
      {"channels", "input channels (1 or 3)"},
      {"depth", "transformer blocks"},
      {"width", "model width"},
      {"heads", "attention heads"},
      {"mlp_ratio", "MLP hidden size as a multiple of width"},
      {"rep_dim", "representation size"},
      {"vocab_size", "token vocabulary size (tokenized variants)"},
      {"seq_len", "token sequence length (tokenized variants)"},
      {"vocab", "BPE vocabulary file (tokenized variants)"},
      {"batch_size", "pairs per batch"},
      {"base_steps", "steps before scaling for the text fraction"},
      {"text_fraction", "fraction of text/text pairs per batch"},
      {"peak_lr", "peak learning rate"},
      {"warmup_steps", "linear warmup steps (-1: 5% of total)"},
      {"cooldown_steps", "linear cooldown steps (-1: 5% of total)"},
      {"weight_decay", "decoupled weight decay"},
      {"grad_clip_norm", "global gradient norm limit"},
      {"temperature_init", "initial contrastive temperature"},
      {"pos_embed_lr_mult", "learning-rate multiplier for positional embeddings"},
      {"log_every", "metric row interval"},
      {"seed", "run seed"},
      {"init", "checkpoint to continue from; positional embeddings follow image_px"},
      {"image_tsv", "image_path<TAB>caption file (default: synthetic shapes)"},
      {"shapes_per_class", "synthetic images per class when no image_tsv is given"},
      {"text_corpus", "sentence corpus for next-sentence pairs"},
      {"bitext", "src<TAB>tgt file for translation pairs"},
      {"font", "Unifont .hex file"},
      {"out", "output directory"},
  };
  return keys;
}

RunConfig train_defaults() {
  const EncoderConfig m = EncoderConfig::desk();
  const TrainConfig t;
  RunConfig c;
  c.set("variant", std::string(to_string(m.variant)));
  c.set("patch_px", std::to_string(m.patch_px));
  c.set("image_px", std::to_string(m.image_px));
  c.set("channels", std::to_string(m.channels));
  c.set("depth", std::to_string(m.depth));
  c.set("width", std::to_string(m.width));
  c.set("heads", std::to_string(m.heads));
  c.set("mlp_ratio", std::to_string(m.mlp_ratio));
  c.set("rep_dim", std::to_string(m.rep_dim));
  c.set("vocab_size", "1024");
  c.set("seq_len", std::to_string(m.num_patches()));
  c.set("batch_size", std::to_string(t.batch_size));
  c.set("base_steps", std::to_string(t.base_steps));
  c.set("text_fraction", "0");
  c.set("peak_lr", "0.001");
  c.set("warmup_steps", "-1");
  c.set("cooldown_steps", "-1");
  c.set("weight_decay", "0.0001");
  c.set("grad_clip_norm", "1");
  c.set("temperature_init", "10");
  c.set("pos_embed_lr_mult", "1");
  c.set("log_every", std::to_string(t.log_every));
  c.set("seed", "0");
  c.set("shapes_per_class", "100");
  c.set("font", CLIPPO_DEFAULT_FONT);
  return c;
}

EncoderConfig model_from(const RunConfig& c) {
  EncoderConfig m;
  m.variant = parse_variant(c.get("variant"));
  m.patch_px = static_cast<int>(c.get_int("patch_px"));
  m.image_px = static_cast<int>(c.get_int("image_px"));
  m.channels = static_cast<int>(c.get_int("channels"));
  m.depth = static_cast<int>(c.get_int("depth"));
  m.width = static_cast<int>(c.get_int("width"));
  m.heads = static_cast<int>(c.get_int("heads"));
  m.mlp_ratio = static_cast<int>(c.get_int("mlp_ratio"));
  m.rep_dim = static_cast<int>(c.get_int("rep_dim"));
  if (m.tokenized()) {
    m.vocab_size = static_cast<int>(c.get_int("vocab_size"));
    m.seq_len = static_cast<int>(c.get_int("seq_len"));
  }
  m.validate();
  return m;
}

TrainConfig train_from(const RunConfig& c) {
  TrainConfig t;
  t.batch_size = static_cast<int>(c.get_int("batch_size"));
  t.base_steps = c.get_int("base_steps");
  t.text_fraction = c.get_double("text_fraction");
  t.peak_lr = c.get_double("peak_lr");
  t.warmup_steps = c.get_int("warmup_steps");
  t.cooldown_steps = c.get_int("cooldown_steps");
  t.weight_decay = c.get_double("weight_decay");
  t.grad_clip_norm = c.get_double("grad_clip_norm");
  t.temperature_init = c.get_double("temperature_init");
  t.pos_embed_lr_mult = c.get_double("pos_embed_lr_mult");
  t.log_every = c.get_int("log_every");
  t.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  t.validate();
  return t;
}

// Model plus the pieces needed to featurize inputs for it.
struct LoadedModel {
  EncoderParams<float> params;
  GlyphTable font;
  std::optional<Vocab> vocab;
  std::unique_ptr<Featurizer> featurizer;
};

LoadedModel load_model(const fs::path& checkpoint, const fs::path& font, const std::string& vocab_path) {
  LoadedModel m{load_checkpoint(checkpoint), load_glyph_table(font), std::nullopt, nullptr};
  if (m.params.config.tokenized()) {
    fs::path vp = vocab_path;
    if (vp.empty()) vp = checkpoint.parent_path() / "vocab.json";
    m.vocab = load_vocab(vp);
  }
  m.featurizer = std::make_unique<Featurizer>(m.params.config, m.font, m.vocab ? &*m.vocab : nullptr);
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string image_extension(int channels) { return channels == 1 ? ".pgm" : ".ppm"; }

// ---------------------------------------------------------------------------
// render

struct RenderArgs {
  std::string text;
  std::string text_file;
  int width = 224;
  int height = 224;
  int channels = 3;
  std::string position = "top";
  std::string wrap = "word";
  std::string image;
  std::string font = CLIPPO_DEFAULT_FONT;
  std::string out;
};

void run_render(const RenderArgs& a, std::ostream& out) {
  if (!a.text.empty() && !a.text_file.empty()) throw UsageError("give --text or --text-file, not both");
  const std::string text = a.text_file.empty() ? a.text : read_file(a.text_file);
  RenderConfig cfg;
  cfg.width_px = a.width;
  cfg.height_px = a.height;
  cfg.channels = a.channels;
  cfg.wrap_mode = a.wrap == "character" ? WrapMode::character : WrapMode::word;
  if (a.wrap != "word" && a.wrap != "character") throw UsageError("--wrap must be word or character");
  cfg.validate();
  const GlyphTable font = load_glyph_table(fs::path(a.font));
  const TextPosition position = parse_position(a.position);

  RenderedImage img;
  LayoutPlan plan = layout_text(text, cfg, font);
  if (!a.image.empty()) {
    img = compose_question_image(convert_channels(read_pnm(a.image), cfg.channels), text, cfg, font, position);
  } else {
    img = render_text(text, cfg, font);
  }

  fs::path image_path = a.out;
  const auto ext = image_path.extension();
  if (ext != ".ppm" && ext != ".pgm") {
    fs::create_directories(image_path);
    image_path = image_path / ("render" + image_extension(cfg.channels));
  } else if (image_path.has_parent_path()) {
    fs::create_directories(image_path.parent_path());
  }
  write_pnm(img, image_path);

  nlohmann::json placements = nlohmann::json::array();
  for (const auto& p : plan.placements) placements.push_back({static_cast<std::uint32_t>(p.codepoint), p.x_px, p.y_px});
  nlohmann::json sidecar = {{"width", img.width},         {"height", img.height},
                            {"channels", img.channels},   {"lines_used", plan.lines_used},
                            {"truncated", plan.truncated}, {"placements", placements},
                            {"position", a.position},      {"composite", !a.image.empty()},
                            {"pixel_digest", pixel_digest(img)}};
  if (a.image.empty() && img.width % 16 == 0 && img.height % 16 == 0) {
    sidecar["used_patches_16"] = used_patch_count(img, 16);
  }
  fs::path json_path = image_path;
  json_path.replace_extension(".json");
  write_text(json_path, sidecar.dump(2) + "\n");
  out << image_path.string() << '\n';
}

// ---------------------------------------------------------------------------
// train

void run_train(const std::string& config_path, const RunConfig& flags, std::ostream& out) {
  RunConfig cfg = train_defaults();
  if (!config_path.empty()) cfg.merge(load_config(config_path));
  cfg.merge(flags);
  if (!cfg.contains("out")) throw UsageError("train needs --out");
  const fs::path out_dir = cfg.get("out");
  const EncoderConfig model_cfg = model_from(cfg);
  const TrainConfig train_cfg = train_from(cfg);
  const std::uint64_t seed = train_cfg.seed;
  write_resolved_config(cfg, out_dir);

  const GlyphTable font = load_glyph_table(fs::path(cfg.get("font")));

  std::vector<PairItem> image_pairs;
  if (cfg.contains("image_tsv")) {
    image_pairs = load_image_text_tsv(cfg.get("image_tsv"));
  } else {
    const auto set = make_shape_classes(static_cast<int>(cfg.get_int("shapes_per_class")), model_cfg.image_px,
                                        model_cfg.channels, seed);
    for (std::size_t i = 0; i < set.images.size(); ++i) {
      image_pairs.push_back({Item::of_image(set.images[i]), Item::of_text(set.captions[i]), PairSource::image_alt_text});
    }
  }

  TextCorpus corpus;
  PairSampler text_sampler;
  if (cfg.contains("text_corpus") && cfg.contains("bitext")) throw UsageError("give text_corpus or bitext, not both");
  if (cfg.contains("text_corpus")) {
    corpus = load_text_corpus(cfg.get("text_corpus"));
    text_sampler = nsp_sampler(corpus, Rng::substream(seed, "nsp").next_u64());
  } else if (cfg.contains("bitext")) {
    text_sampler = epoch_sampler(parallel_pairs(cfg.get("bitext")), Rng::substream(seed, "bitext").next_u64());
  }

  std::optional<Vocab> vocab;
  if (model_cfg.tokenized()) {
    if (cfg.contains("vocab")) {
      vocab = load_vocab(cfg.get("vocab"));
    } else {
      std::string text;
      for (const auto& p : image_pairs) text += p.right.text + "\n";
      for (const auto& doc : corpus) {
        for (const auto& s : doc) text += s + "\n";
      }
      vocab = bpe_train(text, static_cast<std::size_t>(model_cfg.vocab_size), seed, {"<pad>"});
    }
    save_vocab(*vocab, out_dir / "vocab.json");
  }

  Featurizer featurizer(model_cfg, font, vocab ? &*vocab : nullptr);
  MixedBatcher batcher(epoch_sampler(std::move(image_pairs), Rng::substream(seed, "data").next_u64()), text_sampler,
                       train_cfg.text_fraction, static_cast<std::size_t>(train_cfg.batch_size),
                       Rng::substream(seed, "mixing").next_u64());
  EncoderParams<float> start;
  if (cfg.contains("init")) {
    start = resize_positions(load_checkpoint(cfg.get("init")), model_cfg.image_px);
    if (!(start.config == model_cfg)) throw ConfigError("init checkpoint does not match the model config");
  } else {
    start = init_params<float>(model_cfg, Rng::substream(seed, "init").next_u64());
  }
  TrainOptions options;
  options.out_dir = out_dir;
  const auto result = train(train_cfg, std::move(start), batcher, featurizer, options);
  out << "trained " << result.steps_run << " steps";
  if (!result.metrics.empty()) out << ", final loss " << result.metrics.back().loss;
  out << "\n" << (out_dir / "checkpoint.json").string() << '\n';
}

// ---------------------------------------------------------------------------
// embed

struct EmbedArgs {
  std::string checkpoint;
  std::string manifest;
  std::string font = CLIPPO_DEFAULT_FONT;
  std::string vocab;
  std::string out;
  bool layers = false;
};

void run_embed(const EmbedArgs& a, std::ostream& out) {
  LoadedModel m = load_model(a.checkpoint, a.font, a.vocab);
  const fs::path manifest = a.manifest;
  std::vector<Item> items;
  nlohmann::json rows = nlohmann::json::array();
  {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot open " + manifest.string());
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      ++row;
      if (line.rfind("text:", 0) == 0) {
        items.push_back(Item::of_text(line.substr(5)));
      } else {
        items.push_back(Item::of_image(load_image_row(manifest.parent_path(), line, row)));
      }
      rows.push_back(line);
    }
  }
  std::vector<const Item*> ptrs;
  nlohmann::json modalities = nlohmann::json::array();
  for (const auto& it : items) {
    ptrs.push_back(&it);
    modalities.push_back(std::string(to_string(m.featurizer->modality_of(it))));
  }
  const auto rep = static_cast<std::size_t>(m.params.config.rep_dim);
  nn::Tensor<double> embs({0, rep});
  if (!items.empty()) embs = embed_items(m.params, *m.featurizer, std::span<const Item* const>(ptrs)).cast<double>();

  nn::TensorContainer c;
  c.metadata = {{"kind", "embeddings"}, {"modalities", modalities}, {"rows", rows}};
  c.add("embeddings", embs, nn::DType::f64);
  if (a.layers && !items.empty()) {
    // Token-averaged block outputs, one tensor per layer.
    std::vector<nn::Tensor<double>> pooled;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const Modality mod = m.featurizer->modality_of(items[i]);
      const std::vector<const Item*> one{&items[i]};
      const auto acts = layer_activations(m.params, m.featurizer->input<float>(one, mod));
      if (pooled.empty()) {
        for (const auto& act : acts) pooled.emplace_back(nn::Shape{items.size(), act.dim(2)});
      }
      for (std::size_t l = 0; l < acts.size(); ++l) {
        const std::size_t tokens = acts[l].dim(1);
        const std::size_t w = acts[l].dim(2);
        for (std::size_t t = 0; t < tokens; ++t) {
          for (std::size_t d = 0; d < w; ++d) pooled[l].at(i, d) += acts[l][t * w + d] / static_cast<double>(tokens);
        }
      }
    }
    for (std::size_t l = 0; l < pooled.size(); ++l) c.add("layer" + std::to_string(l), pooled[l], nn::DType::f64);
  }
  fs::create_directories(a.out);
  write_container(c, fs::path(a.out) / "embeddings.json");
  out << items.size() << " rows\n" << (fs::path(a.out) / "embeddings.json").string() << '\n';
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string font = CLIPPO_DEFAULT_FONT;
  std::string vocab;
  std::string out;
  std::uint64_t seed = 0;
  int synthetic = 0;
  std::string images;
  std::string classes;
  std::string prompt = "{}";
  std::string pairs;
  std::size_t k = 1;
  std::string train;
  std::string test;
  int shots = 10;
  int steps = 300;
  int batch_size = 32;
  std::string lr_grid = "0.03,0.1,0.2";
  std::string position = "top";
  double pos_embed_lr_mult = 1.0;
  std::string metric = "accuracy";
  int hidden = 768;
  bool finetune = false;
};

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw UsageError("bad number '" + part + "'");
    }
  }
  return out;
}

std::vector<std::string> class_names_from(const EvalArgs& a) {
  if (a.synthetic > 0) return make_shape_classes(0, 64, 1, 0).class_names;
  if (a.classes.empty()) throw UsageError("--classes is required without --synthetic");
  return read_nonempty_lines(a.classes);
}

LabeledImages labeled_from(const EvalArgs& a, const EncoderConfig& mc, const std::string& tsv,
                           const std::vector<std::string>& classes, const char* stream) {
  if (a.synthetic > 0) {
    auto set = make_shape_classes(a.synthetic, mc.image_px, mc.channels, Rng::substream(a.seed, stream).next_u64());
    return {std::move(set.images), std::move(set.labels)};
  }
  if (tsv.empty()) throw UsageError("an image list is required without --synthetic");
  return load_labeled_images(tsv, classes);
}

VqaDataset load_vqa(const fs::path& tsv, std::vector<std::string>& answers) {
  VqaDataset ds;
  std::size_t row = 0;
  for (const auto& f : read_tsv(tsv, 3)) {
    VqaExample ex;
    ex.image = load_image_row(tsv.parent_path(), f[0], ++row);
    ex.question = f[1];
    auto it = std::find(answers.begin(), answers.end(), f[2]);
    if (it == answers.end()) {
      answers.push_back(f[2]);
      it = answers.end() - 1;
    }
    ex.answer = static_cast<int>(it - answers.begin());
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

void run_eval(const std::string& task, const EvalArgs& a, const RunConfig& run, std::ostream& out) {
  LoadedModel m = load_model(a.checkpoint, a.font, a.vocab);
  const EncoderConfig& mc = m.params.config;
  const std::string digest = run.digest();
  std::vector<MetricsRecord> records;

  if (task == "zeroshot") {
    const auto classes = class_names_from(a);
    const auto data = labeled_from(a, mc, a.images, classes, "eval-zeroshot");
    const auto r = zero_shot_classify(m.params, *m.featurizer, data.images, data.labels, classes, a.prompt);
    records.push_back({"zeroshot", MetricKind::accuracy, r.accuracy, "eval", digest});
  } else if (task == "retrieval") {
    std::vector<Item> left;
    std::vector<Item> right;
    if (a.synthetic > 0) {
      const auto set = make_shape_classes(a.synthetic, mc.image_px, mc.channels,
                                          Rng::substream(a.seed, "eval-retrieval").next_u64());
      for (std::size_t i = 0; i < set.images.size(); ++i) {
        left.push_back(Item::of_image(set.images[i]));
        right.push_back(Item::of_text(set.captions[i]));
      }
    } else {
      if (a.pairs.empty()) throw UsageError("--pairs is required without --synthetic");
      std::size_t row = 0;
      for (const auto& f : read_tsv(a.pairs, 2)) {
        left.push_back(Item::of_image(load_image_row(fs::path(a.pairs).parent_path(), f[0], ++row)));
        right.push_back(Item::of_text(f[1]));
      }
    }
    std::vector<const Item*> lp, rp;
    for (const auto& it : left) lp.push_back(&it);
    for (const auto& it : right) rp.push_back(&it);
    const auto le = embed_items(m.params, *m.featurizer, std::span<const Item* const>(lp)).cast<double>();
    const auto re = embed_items(m.params, *m.featurizer, std::span<const Item* const>(rp)).cast<double>();
    const auto r = retrieval_recall(le, re, a.k);
    const std::string name = "recall@" + std::to_string(a.k);
    records.push_back({name + "/image_to_text", MetricKind::recall_at_k, r.left_to_right, "eval", digest});
    records.push_back({name + "/text_to_image", MetricKind::recall_at_k, r.right_to_left, "eval", digest});
  } else if (task == "probe") {
    const auto classes = class_names_from(a);
    const auto train_set = labeled_from(a, mc, a.train, classes, "eval-probe-train");
    const auto test_set = labeled_from(a, mc, a.test, classes, "eval-probe-test");
    const auto embed_all = [&](const std::vector<RenderedImage>& imgs) {
      std::vector<Item> items;
      for (const auto& img : imgs) items.push_back(Item::of_image(img));
      std::vector<const Item*> ptrs;
      for (const auto& it : items) ptrs.push_back(&it);
      return embed_items(m.params, *m.featurizer, std::span<const Item* const>(ptrs)).cast<double>();
    };
    const double acc = few_shot_linear_probe(embed_all(train_set.images), train_set.labels,
                                             embed_all(test_set.images), test_set.labels, a.shots, a.seed);
    records.push_back({std::to_string(a.shots) + "-shot probe", MetricKind::accuracy, acc, "eval", digest});
  } else if (task == "vqa") {
    VqaDataset train_set, test_set;
    if (a.synthetic > 0) {
      train_set = make_shapes_vqa(a.synthetic, mc.image_px, mc.channels, Rng::substream(a.seed, "vqa-train").next_u64());
      test_set = make_shapes_vqa(std::max(1, a.synthetic / 4), mc.image_px, mc.channels,
                                 Rng::substream(a.seed, "vqa-test").next_u64());
    } else {
      if (a.train.empty() || a.test.empty()) throw UsageError("--train and --test are required without --synthetic");
      std::vector<std::string> answers;
      train_set = load_vqa(a.train, answers);
      const std::size_t known = answers.size();
      test_set = load_vqa(a.test, answers);
      for (auto& ex : test_set.examples) {
        if (static_cast<std::size_t>(ex.answer) >= known) ex.answer = -1;
      }
      answers.resize(known);
      train_set.answers = answers;
      test_set.answers = answers;
    }
    VqaConfig vc;
    vc.steps = a.steps;
    vc.warmup_steps = a.steps / 10;
    vc.batch_size = a.batch_size;
    vc.lr_grid = parse_doubles(a.lr_grid);
    vc.position = parse_position(a.position);
    vc.pos_embed_lr_mult = a.pos_embed_lr_mult;
    vc.seed = a.seed;
    const auto r = vqa_finetune(m.params, *m.featurizer, train_set, test_set, vc);
    records.push_back({"vqa/" + a.position, MetricKind::accuracy, r.accuracy, "test", digest});
    records.push_back({"vqa/majority_baseline", MetricKind::accuracy, r.majority_baseline, "test", digest});
    out << "chosen lr " << r.chosen_lr << '\n';
  } else if (task == "transfer") {
    if (a.train.empty() || a.test.empty()) throw UsageError("--train and --test are required");
    const MetricKind kind = parse_metric(a.metric);
    const auto train_task = load_sentence_task(a.train, "train", kind);
    const auto test_task = load_sentence_task(a.test, fs::path(a.test).stem().string(), kind);
    MlpHeadConfig hc;
    hc.hidden = a.hidden;
    hc.steps = a.steps;
    hc.batch_size = a.batch_size;
    hc.finetune_encoder = a.finetune;
    hc.seed = a.seed;
    auto rec = mlp_transfer(m.params, *m.featurizer, train_task, test_task, hc);
    rec.config_digest = digest;
    records.push_back(rec);
  } else if (task == "typo") {
    const auto classes = class_names_from(a);
    const auto data = labeled_from(a, mc, a.images, classes, "eval-typo");
    const auto confounders = random_confounders(data.labels, classes, a.seed);
    std::vector<TextPosition> positions;
    if (a.position == "all") {
      positions = {TextPosition::top, TextPosition::middle, TextPosition::bottom};
    } else {
      positions = {parse_position(a.position)};
    }
    for (auto pos : positions) {
      const auto r = typographic_attack_eval(m.params, *m.featurizer, data.images, data.labels, confounders, classes, pos);
      const std::string p(to_string(pos));
      records.push_back({"typo/" + p + "/clean", MetricKind::accuracy, r.clean_accuracy, "eval", digest});
      records.push_back({"typo/" + p + "/attacked", MetricKind::accuracy, r.attacked_accuracy, "eval", digest});
    }
  } else {
    throw UsageError("unknown eval task '" + task + "'");
  }

  write_resolved_config(run, a.out);
  write_metrics_records(records, fs::path(a.out) / "metrics.csv");
  for (const auto& r : records) out << r.task << ' ' << to_string(r.kind) << ' ' << r.value << '\n';
}

// ---------------------------------------------------------------------------
// tokstats

struct TokstatsArgs {
  std::string corpus_dir;
  std::vector<std::string> vocabs;
  std::vector<std::string> external;
  std::string train_corpus;
  std::vector<std::size_t> train_sizes;
  std::size_t sample_n = 20000;
  int width = 224;
  int height = 224;
  std::string font = CLIPPO_DEFAULT_FONT;
  std::string out;
};

void run_tokstats(const TokstatsArgs& a, std::ostream& out, std::ostream& err) {
  const auto corpora = load_corpus_dir(a.corpus_dir);
  std::vector<std::pair<std::string, Vocab>> owned;
  for (const auto& spec : a.vocabs) {
    auto [name, path] = split_assignment(spec);
    owned.emplace_back(name, load_vocab(path));
  }
  if (!a.train_corpus.empty()) {
    const std::string text = read_file(a.train_corpus);
    for (auto size : a.train_sizes) owned.emplace_back("bpe" + std::to_string(size), bpe_train(text, size, 0));
  }
  std::vector<NamedVocab> vocabs;
  for (const auto& [name, v] : owned) vocabs.push_back({name, &v});
  std::vector<ExternalLengths> external;
  for (const auto& spec : a.external) {
    auto [name, dir] = split_assignment(spec);
    external.push_back(load_external_lengths(name, dir));
  }
  RenderConfig cfg;
  cfg.width_px = a.width;
  cfg.height_px = a.height;
  cfg.channels = 1;
  cfg.validate();
  const GlyphTable font = load_glyph_table(fs::path(a.font));
  const auto report = efficiency_report(corpora, vocabs, external, cfg, font, a.sample_n);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  fs::path path = a.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_report_csv(report, path);
  for (const auto& r : report.rows) {
    out << r.language << ' ' << r.tokenizer << " shorter " << r.shorter_fraction
        << (r.visual_more_efficient ? " (visual more efficient)" : "") << '\n';
  }
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string embeddings;
  std::string other;
  std::string checkpoint;
  std::string out;
  std::size_t components = 0;
  std::size_t bins = 50;
};

struct EmbeddingFile {
  nn::TensorContainer container;
  nn::Tensor<double> all;
  std::vector<std::string> modalities;
};

EmbeddingFile read_embeddings(const fs::path& path) {
  EmbeddingFile f{nn::read_container(path), {}, {}};
  f.all = f.container.at("embeddings").value;
  if (f.container.metadata.contains("modalities")) {
    f.modalities = f.container.metadata.at("modalities").get<std::vector<std::string>>();
  }
  return f;
}

nn::Tensor<double> select_rows(const EmbeddingFile& f, bool images) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < f.modalities.size(); ++i) {
    if ((f.modalities[i] == "image") == images) rows.push_back(i);
  }
  const std::size_t d = f.all.dim(1);
  nn::Tensor<double> out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(f.all.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return out;
}

void run_analyze(const std::string& task, const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  if (task == "patchpca") {
    if (a.checkpoint.empty()) throw UsageError("patchpca needs --checkpoint");
    const auto model = load_checkpoint(a.checkpoint);
    const std::string kernel = embedding_prefix(model.config, Modality::image) + "kernel";
    const auto r = patch_kernel_pca(model.params[kernel].cast<double>(), model.config.patch_px, model.config.channels,
                                    a.components == 0 ? 30 : a.components);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    std::ostringstream csv;
    csv << "component,eigenvalue\n";
    for (std::size_t i = 0; i < r.spectrum.size(); ++i) csv << i << ',' << r.spectrum[i] << '\n';
    write_text(out_dir / "spectrum.csv", csv.str());
    const auto grid = tile_images(r.component_images, 10);
    write_pnm(grid, out_dir / ("components" + image_extension(grid.channels)));
    out << r.component_images.size() << " components\n";
    return;
  }
  if (a.embeddings.empty()) throw UsageError(task + " needs --embeddings");
  const auto f = read_embeddings(a.embeddings);
  std::ostringstream csv;
  csv.precision(12);
  if (task == "gap") {
    const double gap = modality_gap(select_rows(f, true), select_rows(f, false));
    csv << "gap\n" << gap << '\n';
    write_text(out_dir / "gap.csv", csv.str());
    out << "gap " << gap << '\n';
  } else if (task == "pca") {
    const auto r = pca_project(f.all, a.components == 0 ? 2 : a.components);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    csv << "row,modality";
    for (std::size_t k = 0; k < r.variances.size(); ++k) csv << ",pc" << k + 1;
    csv << '\n';
    for (std::size_t i = 0; i < f.all.dim(0); ++i) {
      csv << i << ',' << (i < f.modalities.size() ? f.modalities[i] : "");
      for (std::size_t k = 0; k < r.variances.size(); ++k) csv << ',' << r.projections.at(i, k);
      csv << '\n';
    }
    write_text(out_dir / "pca.csv", csv.str());
    std::ostringstream spec;
    spec << "component,variance,explained_ratio\n";
    for (std::size_t k = 0; k < r.variances.size(); ++k) {
      spec << k + 1 << ',' << r.variances[k] << ',' << r.explained_ratio[k] << '\n';
    }
    write_text(out_dir / "pca_spectrum.csv", spec.str());
    out << r.variances.size() << " components\n";
  } else if (task == "hist") {
    const auto h = pairwise_distance_hist(select_rows(f, true), select_rows(f, false), a.bins);
    csv << "lo,hi,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) csv << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << '\n';
    write_text(out_dir / "hist.csv", csv.str());
    out << h.counts.size() << " bins\n";
  } else if (task == "cka") {
    const auto g = a.other.empty() ? f : read_embeddings(a.other);
    csv << "x,y,cka\n";
    for (const auto& ex : f.container.entries) {
      for (const auto& ey : g.container.entries) {
        const auto r = linear_cka(ex.value, ey.value);
        if (r.degenerate) err << "warning: zero variance in " << ex.name << " or " << ey.name << '\n';
        csv << ex.name << ',' << ey.name << ',' << r.value << '\n';
      }
    }
    write_text(out_dir / "cka.csv", csv.str());
    out << (out_dir / "cka.csv").string() << '\n';
  } else {
    throw UsageError("unknown analysis '" + task + "'");
  }
}

// ---------------------------------------------------------------------------

int run_selfcheck_cmd(const std::string& font_path, std::ostream& out) {
  const GlyphTable font = load_glyph_table(fs::path(font_path));
  bool ok = true;
  for (const auto& line : run_selfcheck(font)) {
    out << (line.pass ? "PASS " : "FAIL ") << line.name << "  " << line.detail << '\n';
    ok = ok && line.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pixel-only contrastive image/text toolkit", "clippo"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::function<int()> action;

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "render text to a PNM image with a JSON layout sidecar");
  auto* text_opt = render->add_option("--text", ra.text, "text to render");
  render->add_option("--text-file", ra.text_file, "file holding the text")->excludes(text_opt);
  render->add_option("--width", ra.width, "canvas width")->capture_default_str();
  render->add_option("--height", ra.height, "canvas height")->capture_default_str();
  render->add_option("--channels", ra.channels, "1 or 3")->capture_default_str();
  render->add_option("--position", ra.position, "text band position with --image")->capture_default_str();
  render->add_option("--wrap", ra.wrap, "word or character")->capture_default_str();
  render->add_option("--image", ra.image, "natural image to compose below/around the text");
  render->add_option("--font", ra.font, "Unifont .hex file")->capture_default_str();
  render->add_option("--out", ra.out, "output directory or .ppm/.pgm path")->required();
  render->callback([&] { action = [&] { run_render(ra, out); return 0; }; });

  std::string train_config;
  std::map<std::string, std::string> train_values;
  auto* trainc = app.add_subcommand("train", "contrastive training");
  trainc->add_option("--config", train_config, "TOML-style config file");
  for (const auto& k : train_keys()) trainc->add_option("--" + std::string(k.key), train_values[k.key], k.help);
  trainc->add_option("--p", train_values["text_fraction"], "alias of --text_fraction");
  trainc->add_option("--steps", train_values["base_steps"], "alias of --base_steps");
  trainc->callback([&] {
    action = [&] {
      RunConfig flags;
      for (const auto& [k, v] : train_values) {
        const auto* opt = trainc->get_option_no_throw("--" + k);
        const bool given = (opt != nullptr && opt->count() > 0) ||
                           (k == "text_fraction" && trainc->get_option("--p")->count() > 0) ||
                           (k == "base_steps" && trainc->get_option("--steps")->count() > 0);
        if (given) flags.set(k, v);
      }
      run_train(train_config, flags, out);
      return 0;
    };
  });

  EmbedArgs ea;
  auto* embedc = app.add_subcommand("embed", "embed a manifest of image paths and text: lines");
  embedc->add_option("--checkpoint", ea.checkpoint, "checkpoint manifest")->required();
  embedc->add_option("--manifest", ea.manifest, "input manifest")->required();
  embedc->add_option("--font", ea.font, "Unifont .hex file")->capture_default_str();
  embedc->add_option("--vocab", ea.vocab, "BPE vocabulary for tokenized variants");
  embedc->add_flag("--layers", ea.layers, "also store token-averaged block outputs");
  embedc->add_option("--out", ea.out, "output directory")->required();
  embedc->callback([&] { action = [&] { run_embed(ea, out); return 0; }; });

  EvalArgs va;
  std::string eval_task;
  auto* evalc = app.add_subcommand("eval", "evaluation protocols");
  evalc->add_option("task", eval_task, "zeroshot|retrieval|probe|vqa|transfer|typo")->required();
  evalc->add_option("--checkpoint", va.checkpoint, "checkpoint manifest")->required();
  evalc->add_option("--out", va.out, "output directory")->required();
  evalc->add_option("--font", va.font, "Unifont .hex file")->capture_default_str();
  evalc->add_option("--vocab", va.vocab, "BPE vocabulary for tokenized variants");
  evalc->add_option("--seed", va.seed, "seed")->capture_default_str();
  evalc->add_option("--synthetic", va.synthetic, "use N generated shape examples per class (or VQA examples)");
  evalc->add_option("--images", va.images, "image_path<TAB>class file");
  evalc->add_option("--classes", va.classes, "one class name per line");
  evalc->add_option("--prompt", va.prompt, "prompt template, {} is the class name")->capture_default_str();
  evalc->add_option("--pairs", va.pairs, "image_path<TAB>caption file");
  evalc->add_option("--k", va.k, "recall@k")->capture_default_str();
  evalc->add_option("--train", va.train, "training split");
  evalc->add_option("--test", va.test, "test split");
  evalc->add_option("--shots", va.shots, "examples per class for the probe")->capture_default_str();
  evalc->add_option("--steps", va.steps, "fine-tuning steps")->capture_default_str();
  evalc->add_option("--batch-size", va.batch_size, "fine-tuning batch size")->capture_default_str();
  evalc->add_option("--lr-grid", va.lr_grid, "comma-separated learning rates")->capture_default_str();
  evalc->add_option("--position", va.position, "top|middle|bottom (typo also: all)")->capture_default_str();
  evalc->add_option("--pos-embed-lr-mult", va.pos_embed_lr_mult, "positional-embedding lr multiplier")
      ->capture_default_str();
  evalc->add_option("--metric", va.metric, "accuracy|f1|matthews|spearman")->capture_default_str();
  evalc->add_option("--hidden", va.hidden, "MLP hidden units")->capture_default_str();
  evalc->add_flag("--finetune", va.finetune, "fine-tune the encoder with the MLP head");
  evalc->callback([&] {
    action = [&] {
      RunConfig run;
      for (const auto* opt : evalc->get_options()) {
        if (opt->count() > 0 && !opt->get_lnames().empty()) run.set(opt->get_lnames().front(), opt->as<std::string>());
      }
      run.set("task", eval_task);
      run_eval(eval_task, va, run, out);
      return 0;
    };
  });

  TokstatsArgs ta;
  auto* tok = app.add_subcommand("tokstats", "visual vs subword sequence lengths");
  tok->add_option("--corpus-dir", ta.corpus_dir, "directory of <lang>.txt corpora")->required();
  tok->add_option("--vocab", ta.vocabs, "NAME=vocab.json (repeatable)");
  tok->add_option("--external-lengths", ta.external, "NAME=DIR with <lang>.txt length files (repeatable)");
  tok->add_option("--train-corpus", ta.train_corpus, "train BPE vocabularies on this file");
  tok->add_option("--train-size", ta.train_sizes, "target sizes for --train-corpus (repeatable)");
  tok->add_option("--sample-n", ta.sample_n, "sentences per language")->capture_default_str();
  tok->add_option("--width", ta.width, "render width")->capture_default_str();
  tok->add_option("--height", ta.height, "render height")->capture_default_str();
  tok->add_option("--font", ta.font, "Unifont .hex file")->capture_default_str();
  tok->add_option("--out", ta.out, "report CSV path")->required();
  tok->callback([&] { action = [&] { run_tokstats(ta, out, err); return 0; }; });

  AnalyzeArgs aa;
  std::string analyze_task;
  auto* an = app.add_subcommand("analyze", "representation diagnostics");
  an->add_option("task", analyze_task, "gap|pca|hist|cka|patchpca")->required();
  an->add_option("--embeddings", aa.embeddings, "embedding container");
  an->add_option("--other", aa.other, "second container for cka");
  an->add_option("--checkpoint", aa.checkpoint, "checkpoint for patchpca");
  an->add_option("--components", aa.components, "principal components");
  an->add_option("--bins", aa.bins, "histogram bins")->capture_default_str();
  an->add_option("--out", aa.out, "output directory")->required();
  an->callback([&] { action = [&] { run_analyze(analyze_task, aa, out, err); return 0; }; });

  std::string sc_font = CLIPPO_DEFAULT_FONT;
  auto* sc = app.add_subcommand("selfcheck", "gradient check, loss identities and renderer golden digests");
  sc->add_option("--font", sc_font, "Unifont .hex file")->capture_default_str();
  sc->callback([&] { action = [&] { return run_selfcheck_cmd(sc_font, out); }; });

  std::vector<std::string> storage{"clippo"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    return action ? action() : 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace clippo
