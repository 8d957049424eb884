#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clippo/eval.hpp"
#include "clippo/shapes.hpp"

namespace clippo {

struct VqaConfig {
  int steps = 300;
  int warmup_steps = 30;
  int batch_size = 32;
  std::vector<double> lr_grid = {0.03, 0.1, 0.2};
  double head_lr_mult = 10.0;
  double pos_embed_lr_mult = 1.0;
  double momentum = 0.9;
  double grad_clip_norm = 1.0;
  double holdout_fraction = 0.1;
  TextPosition position = TextPosition::top;
  std::uint64_t seed = 0;
};

struct VqaResult {
  double accuracy = 0.0;
  double majority_baseline = 0.0;
  double chosen_lr = 0.0;
  std::vector<double> holdout_accuracy;  // one per grid entry, empty for a 1-entry grid
};

// Fine-tunes the image path on question-over-image composites with a fresh
// classifier in place of the projection. With several learning rates each is
// scored on a held-out slice of the training set and the best is retrained on
// the full set. Answers outside the label set always count as wrong. Throws
// ConfigError for an empty grid.
VqaResult vqa_finetune(const EncoderParams<float>& pretrained, const Featurizer& f, const VqaDataset& train,
                       const VqaDataset& test, const VqaConfig& cfg);

// Frequency of the most common training answer among the test answers.
double majority_baseline(const VqaDataset& train, const VqaDataset& test);

struct SentenceExample {
  std::string first;
  std::optional<std::string> second;  // rendered as "first [SEP] second"
  double label = 0.0;
};

struct SentenceTask {
  std::string name;
  MetricKind metric = MetricKind::accuracy;
  std::vector<SentenceExample> examples;
};

// `text<TAB>label` or `text1<TAB>text2<TAB>label` per line.
SentenceTask load_sentence_task(const std::filesystem::path& path, std::string name, MetricKind metric);

struct MlpHeadConfig {
  int hidden = 768;
  int steps = 500;
  int batch_size = 32;
  double lr = 1e-3;
  int warmup_steps = 50;
  bool finetune_encoder = false;
  double encoder_lr_mult = 0.1;
  std::uint64_t seed = 0;
};

// Two hidden GELU layers on the representation. Classification metrics train
// with cross-entropy on integer labels; spearman trains a regressor with
// squared error. Throws ConfigError when the labels do not suit the metric.
MetricsRecord mlp_transfer(const EncoderParams<float>& model, const Featurizer& f, const SentenceTask& train,
                           const SentenceTask& test, const MlpHeadConfig& cfg);

}  // namespace clippo
