#include "clippo/trainer.hpp"

#include <cmath>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <fstream>
#include <iomanip>

#include "clippo/errors.hpp"
#include "clippo/optim.hpp"

namespace clippo {

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (base_steps < 0) throw ConfigError("base_steps must be non-negative");
  if (!(text_fraction >= 0.0 && text_fraction < 1.0)) throw ConfigError("text_fraction must lie in [0, 1)");
  if (peak_lr < 0.0 || weight_decay < 0.0 || grad_clip_norm < 0.0) throw ConfigError("negative optimizer setting");
  if (!(temperature_init > 0.0)) throw ConfigError("temperature_init must be positive");
  if (pos_embed_lr_mult < 0.0) throw ConfigError("pos_embed_lr_mult must be non-negative");
  if (log_every <= 0) throw ConfigError("log_every must be positive");
}

ScheduleConfig TrainConfig::schedule() const {
  ScheduleConfig s;
  s.peak_lr = peak_lr;
  s.total_steps = total_steps();
  const auto five_percent = static_cast<std::int64_t>(std::llround(0.05 * static_cast<double>(s.total_steps)));
  s.warmup_steps = warmup_steps >= 0 ? warmup_steps : five_percent;
  s.cooldown_steps = cooldown_steps >= 0 ? cooldown_steps : five_percent;
  return s;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},         {"base_steps", c.base_steps},
       {"text_fraction", c.text_fraction},   {"peak_lr", c.peak_lr},
       {"warmup_steps", c.warmup_steps},     {"cooldown_steps", c.cooldown_steps},
       {"weight_decay", c.weight_decay},     {"grad_clip_norm", c.grad_clip_norm},
       {"temperature_init", c.temperature_init}, {"pos_embed_lr_mult", c.pos_embed_lr_mult},
       {"beta1", c.beta1},                   {"beta2", c.beta2},
       {"log_every", c.log_every},           {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.base_steps = j.value("base_steps", d.base_steps);
  c.text_fraction = j.value("text_fraction", d.text_fraction);
  c.peak_lr = j.value("peak_lr", d.peak_lr);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.cooldown_steps = j.value("cooldown_steps", d.cooldown_steps);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.grad_clip_norm = j.value("grad_clip_norm", d.grad_clip_norm);
  c.temperature_init = j.value("temperature_init", d.temperature_init);
  c.pos_embed_lr_mult = j.value("pos_embed_lr_mult", d.pos_embed_lr_mult);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.log_every = j.value("log_every", d.log_every);
  c.seed = j.value("seed", d.seed);
}

// ---------------------------------------------------------------------------
// Featurizer

Featurizer::Featurizer(EncoderConfig model, const GlyphTable& font, const Vocab* vocab)
    : model_(std::move(model)), font_(&font), vocab_(vocab) {
  model_.validate();
  render_.width_px = model_.image_px;
  render_.height_px = model_.image_px;
  render_.channels = model_.channels;
  if (model_.tokenized()) {
    if (vocab_ == nullptr) throw ConfigError("tokenized variants need a vocabulary");
    if (static_cast<int>(vocab_->size()) > model_.vocab_size) {
      throw ConfigError("vocabulary of " + std::to_string(vocab_->size()) + " exceeds model vocab_size " +
                        std::to_string(model_.vocab_size));
    }
    pad_id_ = 0;
    for (std::size_t i = 0; i < vocab_->specials.size(); ++i) {
      if (vocab_->specials[i] == "<pad>") pad_id_ = static_cast<std::int32_t>(vocab_->pieces.size() + i);
    }
  }
}

Modality Featurizer::text_modality() const noexcept {
  return model_.tokenized() ? Modality::tokenized_text : Modality::rendered_text;
}

Modality Featurizer::modality_of(const Item& item) const noexcept {
  return item.is_image() ? Modality::image : text_modality();
}

RenderedImage Featurizer::render(std::string_view text) const { return render_text(text, render_, *font_); }

RenderedImage Featurizer::prepare_image(const RenderedImage& image) const {
  RenderedImage out = image;
  if (out.height != model_.image_px || out.width != model_.image_px) {
    out = resize_bilinear(out, model_.image_px, model_.image_px);
  }
  if (out.channels != model_.channels) out = convert_channels(out, model_.channels);
  return out;
}

std::vector<std::int32_t> Featurizer::tokenize(std::string_view text) const {
  if (vocab_ == nullptr) throw ContractError("featurizer has no vocabulary");
  const auto ids = bpe_encode(*vocab_, text);
  return pad_tokens(ids, model_.seq_len, pad_id_);
}

template <typename T>
EncoderInput<T> Featurizer::input(std::span<const Item* const> items, Modality modality) const {
  if (modality == Modality::tokenized_text) {
    std::vector<std::vector<std::int32_t>> tokens;
    tokens.reserve(items.size());
    for (const Item* it : items) tokens.push_back(tokenize(it->text));
    return token_input<T>(std::move(tokens));
  }
  std::vector<RenderedImage> images;
  images.reserve(items.size());
  for (const Item* it : items) images.push_back(it->is_image() ? prepare_image(*it->image) : render(it->text));
  return image_input<T>(patchify_batch<T>(images, model_), modality);
}

template <typename T>
nn::Var<T> encode_items(const nn::BoundParams<T>& p, const Featurizer& f, std::span<const Item* const> items) {
  if (items.empty()) throw ContractError("cannot encode an empty item list");
  std::vector<nn::Var<T>> parts;
  std::vector<std::size_t> order;
  for (Modality m : {Modality::image, Modality::rendered_text, Modality::tokenized_text}) {
    std::vector<const Item*> group;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (f.modality_of(*items[i]) == m) {
        group.push_back(items[i]);
        order.push_back(i);
      }
    }
    if (group.empty()) continue;
    parts.push_back(encode(p, f.model(), f.input<T>(group, m)));
  }
  nn::Var<T> stacked = parts.size() == 1 ? parts[0] : nn::concat(parts, 0);
  bool identity = true;
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    inverse[order[r]] = r;
    identity = identity && order[r] == r;
  }
  if (identity) return stacked;
  return nn::gather_rows(stacked, std::span<const std::size_t>(inverse));
}

template <typename T>
nn::Tensor<T> embed_items(const EncoderParams<T>& model, const Featurizer& f, std::span<const Item* const> items,
                          std::size_t chunk) {
  const std::size_t rep = static_cast<std::size_t>(model.config.rep_dim);
  nn::Tensor<T> out({items.size(), rep});
  for (std::size_t start = 0; start < items.size(); start += chunk) {
    const std::size_t n = std::min(chunk, items.size() - start);
    nn::Tape<T> tape;
    nn::BoundParams<T> p(tape, model.params, false);
    const auto v = encode_items(p, f, items.subspan(start, n)).value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * rep));
  }
  return out;
}

template EncoderInput<float> Featurizer::input<float>(std::span<const Item* const>, Modality) const;
template EncoderInput<double> Featurizer::input<double>(std::span<const Item* const>, Modality) const;
template nn::Var<float> encode_items(const nn::BoundParams<float>&, const Featurizer&, std::span<const Item* const>);
template nn::Var<double> encode_items(const nn::BoundParams<double>&, const Featurizer&,
                                      std::span<const Item* const>);
template nn::Tensor<float> embed_items(const EncoderParams<float>&, const Featurizer&, std::span<const Item* const>,
                                       std::size_t);
template nn::Tensor<double> embed_items(const EncoderParams<double>&, const Featurizer&, std::span<const Item* const>,
                                        std::size_t);

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Keeps freed tape buffers in the heap between steps.
void keep_freed_memory() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,loss,lr,temperature\n" << std::setprecision(9);
  for (const auto& r : rows) out << r.step << ',' << r.loss << ',' << r.lr << ',' << r.temperature << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void save_checkpoint(const EncoderParams<float>& model, const std::filesystem::path& manifest,
                     const nlohmann::json& extra) {
  auto c = to_container(model);
  for (const auto& [k, v] : extra.items()) c.metadata[k] = v;
  write_container(c, manifest);
}

EncoderParams<float> load_checkpoint(const std::filesystem::path& manifest) {
  return from_container<float>(nn::read_container(manifest));
}

TrainResult train(const TrainConfig& cfg, EncoderParams<float> init, MixedBatcher& data, const Featurizer& featurizer,
                  const TrainOptions& options) {
  cfg.validate();
  keep_freed_memory();
  if (!(init.config == featurizer.model())) throw ContractError("featurizer and model configs differ");
  const ScheduleConfig schedule = cfg.schedule();
  const std::int64_t total = schedule.total_steps;
  const std::int64_t run = options.max_steps >= 0 ? std::min(options.max_steps, total) : total;

  TrainResult result{std::move(init), {}, 0};
  auto& params = result.model.params;
  params[kLogTemperature][0] = static_cast<float>(std::log(cfg.temperature_init));

  nn::AdamW<float> opt(params, {cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay, cfg.peak_lr});
  std::vector<double> lr_mult(params.size(), 1.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (nn::is_position_param(params.names()[i])) lr_mult[i] = cfg.pos_embed_lr_mult;
  }

  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  for (std::int64_t step = 1; step <= run; ++step) {
    const std::vector<PairItem> batch = data.next();
    std::vector<const Item*> left;
    std::vector<const Item*> right;
    for (const auto& pair : batch) {
      left.push_back(&pair.left);
      right.push_back(&pair.right);
    }

    nn::Tape<float> tape;
    nn::BoundParams<float> p(tape, params, true);
    nn::Var<float> l = encode_items(p, featurizer, std::span<const Item* const>(left));
    nn::Var<float> r = encode_items(p, featurizer, std::span<const Item* const>(right));
    auto out = contrastive_loss(l, r, p(kLogTemperature));
    const double loss = out.loss.value().item();
    if (!std::isfinite(loss)) throw TrainingError("non-finite loss at step " + std::to_string(step));
    tape.backward(out.loss);

    std::vector<nn::Tensor<float>> grads;
    grads.reserve(params.size());
    for (const auto& v : p.vars()) grads.push_back(tape.grad(v));
    nn::clip_global_norm(grads, cfg.grad_clip_norm);

    const double lr = lr_at(step, schedule);
    opt.step(params, grads, lr, lr_mult);
    result.steps_run = step;

    if (step % cfg.log_every == 0 || step == run) {
      result.metrics.push_back({step, loss, lr, static_cast<double>(out.temperature)});
    }
    if (options.on_step && options.on_step(step, result.model)) {
      if (result.metrics.empty() || result.metrics.back().step != step) {
        result.metrics.push_back({step, loss, lr, static_cast<double>(out.temperature)});
      }
      break;
    }
  }

  if (options.out_dir) {
    write_metrics_csv(result.metrics, *options.out_dir / "metrics.csv");
    save_checkpoint(result.model, *options.out_dir / "checkpoint.json",
                    {{"train_config", cfg}, {"steps_run", result.steps_run}});
  }
  return result;
}

}  // namespace clippo
