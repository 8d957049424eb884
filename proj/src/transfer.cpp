#include "clippo/transfer.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "clippo/errors.hpp"
#include "clippo/optim.hpp"
#include "clippo/schedule.hpp"

namespace clippo {

namespace {

using nn::Tensor;
using nn::Var;

Tensor<float> random_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng) {
  Tensor<float> t({rows, cols});
  for (auto& v : t.data()) v = static_cast<float>(rng.truncated_normal(std));
  return t;
}

int argmax_row(const Tensor<float>& logits, std::size_t r) {
  const std::size_t c = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (logits.at(r, j) > logits.at(r, best)) best = j;
  }
  return static_cast<int>(best);
}

// Encoder parameters without the contrastive projection and temperature, plus
// a classifier on the pooled features.
nn::ParamSet<float> vqa_params(const EncoderParams<float>& pretrained, std::size_t answers, std::uint64_t seed) {
  nn::ParamSet<float> ps;
  const std::string proj = head_prefix(pretrained.config, Modality::image) + "proj/kernel";
  for (std::size_t i = 0; i < pretrained.params.size(); ++i) {
    const auto& name = pretrained.params.names()[i];
    if (name == proj || name == kLogTemperature) continue;
    ps.add(name, pretrained.params.values()[i]);
  }
  Rng rng = Rng::substream(seed, "vqa-head");
  ps.add("vqa/kernel", random_matrix(static_cast<std::size_t>(pretrained.config.width), answers, 0.02, rng));
  ps.add("vqa/bias", Tensor<float>({answers}));
  return ps;
}

std::vector<RenderedImage> compose_all(const Featurizer& f, const VqaDataset& ds, TextPosition position) {
  std::vector<RenderedImage> out;
  out.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) {
    out.push_back(compose_question_image(f.prepare_image(ex.image), ex.question, f.render_config(), f.font(), position));
  }
  return out;
}

Var<float> vqa_logits(const nn::BoundParams<float>& p, const EncoderConfig& cfg, const Tensor<float>& patches) {
  Var<float> pooled = encode_pooled(p, cfg, image_input(patches));
  return nn::matmul(pooled, p("vqa/kernel")) + p("vqa/bias");
}

Tensor<float> gather_patches(const std::vector<RenderedImage>& images, std::span<const std::size_t> rows,
                             const EncoderConfig& cfg) {
  std::vector<RenderedImage> batch;
  batch.reserve(rows.size());
  for (auto r : rows) batch.push_back(images[r]);
  return patchify_batch<float>(batch, cfg);
}

double evaluate_vqa(const nn::ParamSet<float>& ps, const EncoderConfig& cfg, const std::vector<RenderedImage>& images,
                    const std::vector<int>& answers, std::size_t num_answers) {
  if (images.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t start = 0; start < images.size(); start += 64) {
    const std::size_t n = std::min<std::size_t>(64, images.size() - start);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), start);
    nn::Tape<float> tape;
    nn::BoundParams<float> p(tape, ps, false);
    const auto logits = vqa_logits(p, cfg, gather_patches(images, rows, cfg)).value();
    for (std::size_t i = 0; i < n; ++i) {
      const int truth = answers[start + i];
      if (truth >= 0 && static_cast<std::size_t>(truth) < num_answers && argmax_row(logits, i) == truth) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

nn::ParamSet<float> run_vqa_training(const EncoderParams<float>& pretrained, const std::vector<RenderedImage>& images,
                                     const std::vector<int>& answers, std::size_t num_answers, double lr,
                                     const VqaConfig& cfg) {
  const EncoderConfig& mc = pretrained.config;
  nn::ParamSet<float> ps = vqa_params(pretrained, num_answers, cfg.seed);
  std::vector<double> lr_mult(ps.size(), 1.0);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& name = ps.names()[i];
    if (name.rfind("vqa/", 0) == 0) lr_mult[i] = cfg.head_lr_mult;
    if (nn::is_position_param(name)) lr_mult[i] = cfg.pos_embed_lr_mult;
  }
  nn::MomentumSgd<float> opt(ps, cfg.momentum);
  Rng rng = Rng::substream(cfg.seed, "vqa-batches");
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t pos = order.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), images.size());

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> targets;
    while (rows.size() < bs) {
      if (pos == order.size()) {
        rng.shuffle(order.begin(), order.end());
        pos = 0;
      }
      const std::size_t r = order[pos++];
      if (answers[r] < 0 || static_cast<std::size_t>(answers[r]) >= num_answers) continue;
      rows.push_back(r);
      targets.push_back(static_cast<std::size_t>(answers[r]));
    }
    nn::Tape<float> tape;
    nn::BoundParams<float> p(tape, ps, true);
    Var<float> loss = nn::cross_entropy_rows(vqa_logits(p, mc, gather_patches(images, rows, mc)),
                                             std::span<const std::size_t>(targets));
    if (!std::isfinite(loss.value().item())) throw TrainingError("non-finite VQA loss at step " + std::to_string(step));
    tape.backward(loss);
    std::vector<Tensor<float>> grads;
    for (const auto& v : p.vars()) grads.push_back(tape.grad(v));
    nn::clip_global_norm(grads, cfg.grad_clip_norm);
    opt.step(ps, grads, cosine_lr_at(step, lr, cfg.warmup_steps, cfg.steps), lr_mult);
  }
  return ps;
}

std::vector<int> answers_of(const VqaDataset& ds) {
  std::vector<int> out;
  for (const auto& ex : ds.examples) out.push_back(ex.answer);
  return out;
}

}  // namespace

double majority_baseline(const VqaDataset& train, const VqaDataset& test) {
  if (test.examples.empty()) return 0.0;
  std::map<int, std::size_t> counts;
  for (const auto& ex : train.examples) ++counts[ex.answer];
  int majority = -1;
  std::size_t best = 0;
  for (const auto& [a, n] : counts) {
    if (n > best) {
      best = n;
      majority = a;
    }
  }
  std::size_t hits = 0;
  for (const auto& ex : test.examples) hits += ex.answer == majority ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(test.examples.size());
}

VqaResult vqa_finetune(const EncoderParams<float>& pretrained, const Featurizer& f, const VqaDataset& train,
                       const VqaDataset& test, const VqaConfig& cfg) {
  if (cfg.lr_grid.empty()) throw ConfigError("VQA learning-rate grid is empty");
  if (train.examples.empty()) throw DataError("empty VQA training set");
  if (cfg.batch_size <= 0 || cfg.steps < 0) throw ConfigError("invalid VQA schedule");
  if (pretrained.config.tokenized()) throw ContractError("VQA fine-tuning needs a pixel-input encoder");
  const std::size_t num_answers = train.answers.size();

  const auto train_images = compose_all(f, train, cfg.position);
  const auto train_answers = answers_of(train);
  const auto test_images = compose_all(f, test, cfg.position);
  const auto test_answers = answers_of(test);

  VqaResult result;
  result.majority_baseline = majority_baseline(train, test);
  result.chosen_lr = cfg.lr_grid.front();
  if (cfg.lr_grid.size() > 1) {
    const auto held = static_cast<std::size_t>(
        std::max(1.0, std::round(cfg.holdout_fraction * static_cast<double>(train_images.size()))));
    if (held >= train_images.size()) throw DataError("VQA training set too small for a held-out slice");
    const std::size_t fit = train_images.size() - held;
    const std::vector<RenderedImage> fit_images(train_images.begin(), train_images.begin() + static_cast<std::ptrdiff_t>(fit));
    const std::vector<int> fit_answers(train_answers.begin(), train_answers.begin() + static_cast<std::ptrdiff_t>(fit));
    const std::vector<RenderedImage> held_images(train_images.begin() + static_cast<std::ptrdiff_t>(fit), train_images.end());
    const std::vector<int> held_answers(train_answers.begin() + static_cast<std::ptrdiff_t>(fit), train_answers.end());
    double best = -1.0;
    for (double lr : cfg.lr_grid) {
      const auto ps = run_vqa_training(pretrained, fit_images, fit_answers, num_answers, lr, cfg);
      const double acc = evaluate_vqa(ps, pretrained.config, held_images, held_answers, num_answers);
      result.holdout_accuracy.push_back(acc);
      if (acc > best) {
        best = acc;
        result.chosen_lr = lr;
      }
    }
  }
  const auto ps = run_vqa_training(pretrained, train_images, train_answers, num_answers, result.chosen_lr, cfg);
  result.accuracy = evaluate_vqa(ps, pretrained.config, test_images, test_answers, num_answers);
  return result;
}

// ---------------------------------------------------------------------------
// Sentence tasks

SentenceTask load_sentence_task(const std::filesystem::path& path, std::string name, MetricKind metric) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  SentenceTask task;
  task.name = std::move(name);
  task.metric = metric;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 2 && fields.size() != 3) {
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": expected 2 or 3 tab-separated fields");
    }
    SentenceExample ex;
    ex.first = fields[0];
    if (fields.size() == 3) ex.second = fields[1];
    try {
      ex.label = std::stod(fields.back());
    } catch (const std::exception&) {
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": bad label '" + fields.back() + "'");
    }
    task.examples.push_back(std::move(ex));
  }
  return task;
}

namespace {

std::vector<Item> sentence_items(const SentenceTask& task) {
  std::vector<Item> items;
  items.reserve(task.examples.size());
  for (const auto& ex : task.examples) {
    items.push_back(Item::of_text(ex.second ? ex.first + " [SEP] " + *ex.second : ex.first));
  }
  return items;
}

int class_count(const SentenceTask& task) {
  int classes = 0;
  for (const auto& ex : task.examples) {
    const double r = std::round(ex.label);
    if (r != ex.label || r < 0) {
      throw ConfigError("metric " + std::string(to_string(task.metric)) + " needs non-negative integer labels");
    }
    classes = std::max(classes, static_cast<int>(r) + 1);
  }
  if ((task.metric == MetricKind::f1) && classes > 2) throw ConfigError("f1 needs binary labels");
  return classes;
}

Var<float> mlp_head(const nn::BoundParams<float>& p, Var<float> x) {
  Var<float> h = nn::gelu(nn::matmul(x, p("mlp/fc1/kernel")) + p("mlp/fc1/bias"));
  h = nn::gelu(nn::matmul(h, p("mlp/fc2/kernel")) + p("mlp/fc2/bias"));
  return nn::matmul(h, p("mlp/out/kernel")) + p("mlp/out/bias");
}

}  // namespace

MetricsRecord mlp_transfer(const EncoderParams<float>& model, const Featurizer& f, const SentenceTask& train,
                           const SentenceTask& test, const MlpHeadConfig& cfg) {
  if (train.metric != test.metric) throw ConfigError("train and test tasks use different metrics");
  if (train.metric == MetricKind::recall_at_k) throw ConfigError("recall@k is not a sentence-task metric");
  if (train.examples.empty() || test.examples.empty()) throw DataError("empty sentence task");
  if (cfg.hidden <= 0 || cfg.batch_size <= 0 || cfg.steps < 0) throw ConfigError("invalid MLP head config");
  const bool regression = train.metric == MetricKind::spearman;
  const int outputs = regression ? 1 : std::max(class_count(train), class_count(test));

  const auto train_items = sentence_items(train);
  const auto test_items = sentence_items(test);
  const std::size_t rep = static_cast<std::size_t>(model.config.rep_dim);
  const std::size_t hidden = static_cast<std::size_t>(cfg.hidden);

  nn::ParamSet<float> ps;
  if (cfg.finetune_encoder) {
    for (std::size_t i = 0; i < model.params.size(); ++i) ps.add(model.params.names()[i], model.params.values()[i]);
  }
  Rng rng = Rng::substream(cfg.seed, "mlp-head");
  ps.add("mlp/fc1/kernel", random_matrix(rep, hidden, std::sqrt(1.0 / static_cast<double>(rep)), rng));
  ps.add("mlp/fc1/bias", Tensor<float>({hidden}));
  ps.add("mlp/fc2/kernel", random_matrix(hidden, hidden, std::sqrt(1.0 / static_cast<double>(hidden)), rng));
  ps.add("mlp/fc2/bias", Tensor<float>({hidden}));
  ps.add("mlp/out/kernel", random_matrix(hidden, static_cast<std::size_t>(outputs), 0.02, rng));
  ps.add("mlp/out/bias", Tensor<float>({static_cast<std::size_t>(outputs)}));
  std::vector<double> lr_mult(ps.size(), 1.0);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps.names()[i].rfind("mlp/", 0) != 0) lr_mult[i] = cfg.encoder_lr_mult;
  }

  const auto item_ptrs = [](const std::vector<Item>& items, std::span<const std::size_t> rows) {
    std::vector<const Item*> out;
    for (auto r : rows) out.push_back(&items[r]);
    return out;
  };
  std::vector<std::size_t> all_train(train_items.size());
  std::iota(all_train.begin(), all_train.end(), std::size_t{0});
  std::optional<Tensor<float>> frozen;
  if (!cfg.finetune_encoder) {
    const auto ptrs = item_ptrs(train_items, all_train);
    frozen = embed_items(model, f, std::span<const Item* const>(ptrs));
  }

  const auto features = [&](const nn::BoundParams<float>& p, std::span<const std::size_t> rows) -> Var<float> {
    if (!cfg.finetune_encoder) {
      Tensor<float> x({rows.size(), rep});
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(frozen->data().begin() + static_cast<std::ptrdiff_t>(rows[i] * rep), rep,
                    x.data().begin() + static_cast<std::ptrdiff_t>(i * rep));
      }
      return p.tape().constant(std::move(x));
    }
    const auto ptrs = item_ptrs(train_items, rows);
    return encode_items(p, f, std::span<const Item* const>(ptrs));
  };

  nn::AdamW<float> opt(ps, {0.9, 0.999, 1e-8, 0.0, cfg.lr});
  Rng batches = Rng::substream(cfg.seed, "mlp-batches");
  std::size_t pos = all_train.size();
  std::vector<std::size_t> order = all_train;
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size());
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> rows;
    while (rows.size() < bs) {
      if (pos == order.size()) {
        batches.shuffle(order.begin(), order.end());
        pos = 0;
      }
      rows.push_back(order[pos++]);
    }
    nn::Tape<float> tape;
    nn::BoundParams<float> p(tape, ps, true);
    Var<float> out = mlp_head(p, features(p, rows));
    Var<float> loss;
    if (regression) {
      Tensor<float> y({rows.size(), 1});
      for (std::size_t i = 0; i < rows.size(); ++i) y[i] = static_cast<float>(train.examples[rows[i]].label);
      Var<float> diff = out - tape.constant(std::move(y));
      loss = nn::mean(diff * diff);
    } else {
      std::vector<std::size_t> targets;
      for (auto r : rows) targets.push_back(static_cast<std::size_t>(train.examples[r].label));
      loss = nn::cross_entropy_rows(out, std::span<const std::size_t>(targets));
    }
    if (!std::isfinite(loss.value().item())) throw TrainingError("non-finite loss at step " + std::to_string(step));
    tape.backward(loss);
    std::vector<Tensor<float>> grads;
    for (const auto& v : p.vars()) grads.push_back(tape.grad(v));
    nn::clip_global_norm(grads, 1.0);
    const double warm = cfg.warmup_steps > 0 ? std::min(1.0, static_cast<double>(step) / cfg.warmup_steps) : 1.0;
    const double decay = 1.0 - static_cast<double>(step - 1) / std::max(1, cfg.steps);
    opt.step(ps, grads, cfg.lr * warm * decay, lr_mult);
  }

  // Test-time features from the (possibly fine-tuned) encoder.
  EncoderParams<float> tuned = model;
  if (cfg.finetune_encoder) {
    for (std::size_t i = 0; i < tuned.params.size(); ++i) tuned.params.values()[i] = ps[tuned.params.names()[i]];
  }
  std::vector<std::size_t> all_test(test_items.size());
  std::iota(all_test.begin(), all_test.end(), std::size_t{0});
  const auto test_ptrs = item_ptrs(test_items, all_test);
  const Tensor<float> test_x = embed_items(tuned, f, std::span<const Item* const>(test_ptrs));
  nn::Tape<float> tape;
  nn::BoundParams<float> p(tape, ps, false);
  const Tensor<float> out = mlp_head(p, tape.constant(test_x)).value();

  MetricsRecord rec;
  rec.task = test.name;
  rec.kind = test.metric;
  rec.split = "test";
  if (regression) {
    std::vector<double> pred(out.data().begin(), out.data().end());
    std::vector<double> truth;
    for (const auto& ex : test.examples) truth.push_back(ex.label);
    rec.value = spearman(pred, truth);
  } else {
    std::vector<int> pred, truth;
    for (std::size_t i = 0; i < test.examples.size(); ++i) {
      pred.push_back(argmax_row(out, i));
      truth.push_back(static_cast<int>(test.examples[i].label));
    }
    rec.value = test.metric == MetricKind::f1         ? f1_score(pred, truth)
                : test.metric == MetricKind::matthews ? matthews_corrcoef(pred, truth)
                                                      : accuracy(pred, truth);
  }
  return rec;
}

}  // namespace clippo
