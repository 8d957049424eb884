#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "clippo/bpe.hpp"
#include "clippo/contrastive.hpp"
#include "clippo/datasets.hpp"
#include "clippo/encoder.hpp"
#include "clippo/renderer.hpp"
#include "clippo/schedule.hpp"

namespace clippo {

struct TrainConfig {
  int batch_size = 64;
  std::int64_t base_steps = 2000;
  double text_fraction = 0.0;
  double peak_lr = 1e-3;
  // Negative means 5% of the total step count.
  std::int64_t warmup_steps = -1;
  std::int64_t cooldown_steps = -1;
  double weight_decay = 1e-4;
  double grad_clip_norm = 1.0;
  double temperature_init = 10.0;
  double pos_embed_lr_mult = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::int64_t log_every = 10;
  std::uint64_t seed = 0;

  void validate() const;
  std::int64_t total_steps() const { return scaled_step_count(base_steps, text_fraction); }
  ScheduleConfig schedule() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Turns dataset items into encoder inputs for one model: text is rendered at
// the model's input size (or tokenized for tokenized variants), images are
// resized and converted to the model's channel count.
class Featurizer {
 public:
  Featurizer(EncoderConfig model, const GlyphTable& font, const Vocab* vocab = nullptr);

  const EncoderConfig& model() const noexcept { return model_; }
  const RenderConfig& render_config() const noexcept { return render_; }
  RenderConfig& render_config() noexcept { return render_; }
  const GlyphTable& font() const noexcept { return *font_; }
  Modality text_modality() const noexcept;
  Modality modality_of(const Item& item) const noexcept;

  RenderedImage render(std::string_view text) const;
  RenderedImage prepare_image(const RenderedImage& image) const;
  std::vector<std::int32_t> tokenize(std::string_view text) const;

  // All items must share `modality`.
  template <typename T>
  EncoderInput<T> input(std::span<const Item* const> items, Modality modality) const;

 private:
  EncoderConfig model_;
  RenderConfig render_;
  const GlyphTable* font_;
  const Vocab* vocab_;
  std::int32_t pad_id_ = 0;
};

// Encodes a mixed list of items, grouping rows by modality, and returns the
// embeddings in the original order, [N, rep_dim].
template <typename T>
nn::Var<T> encode_items(const nn::BoundParams<T>& p, const Featurizer& f, std::span<const Item* const> items);

// Tape-free embeddings in chunks of `chunk` rows.
template <typename T>
nn::Tensor<T> embed_items(const EncoderParams<T>& model, const Featurizer& f, std::span<const Item* const> items,
                          std::size_t chunk = 64);

struct MetricRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double temperature = 0.0;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;
  // Called after every update with the 1-based step number; returning true
  // ends training after that step.
  std::function<bool(std::int64_t, const EncoderParams<float>&)> on_step;
  std::int64_t max_steps = -1;  // stop early (schedule still uses total_steps)
};

struct TrainResult {
  EncoderParams<float> model;
  std::vector<MetricRow> metrics;
  std::int64_t steps_run = 0;
};

// Contrastive training with AdamW, global-norm clipping, the warmup/rsqrt/
// cooldown schedule and an optional positional-embedding lr multiplier.
// Throws TrainingError with the step number on a non-finite loss. With an
// out_dir, writes metrics.csv, checkpoint.json/.bin and train_config.json.
TrainResult train(const TrainConfig& cfg, EncoderParams<float> init, MixedBatcher& data, const Featurizer& featurizer,
                  const TrainOptions& options = {});

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);

void save_checkpoint(const EncoderParams<float>& model, const std::filesystem::path& manifest,
                     const nlohmann::json& extra = nlohmann::json::object());
EncoderParams<float> load_checkpoint(const std::filesystem::path& manifest);

}  // namespace clippo
