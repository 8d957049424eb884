#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clippo/renderer.hpp"
#include "clippo/trainer.hpp"

namespace clippo {

enum class MetricKind { accuracy, recall_at_k, f1, matthews, spearman };

std::string_view to_string(MetricKind k);
MetricKind parse_metric(std::string_view name);

struct MetricsRecord {
  std::string task;
  MetricKind kind = MetricKind::accuracy;
  double value = 0.0;
  std::string split;
  std::string config_digest;
};

void write_metrics_records(const std::vector<MetricsRecord>& rows, const std::filesystem::path& path);

// --- scalar metrics -------------------------------------------------------

double accuracy(std::span<const int> predicted, std::span<const int> truth);
// Binary F1 with label 1 as the positive class.
double f1_score(std::span<const int> predicted, std::span<const int> truth);
// Matthews correlation (multi-class form, equal to the binary one for two
// classes). 0 when undefined, e.g. for constant predictions.
double matthews_corrcoef(std::span<const int> predicted, std::span<const int> truth);
// Pearson correlation of average ranks. 0 when either side is constant.
double spearman(std::span<const double> predicted, std::span<const double> truth);

// --- zero-shot and retrieval ---------------------------------------------

// Argmax of cosine similarity against each class embedding, lowest index on
// ties. Rows are expected to be unit-norm. Throws ContractError for no classes.
std::vector<int> zero_shot_predict(const nn::Tensor<double>& image_embs, const nn::Tensor<double>& class_embs);

struct ZeroShotResult {
  std::vector<int> predictions;
  double accuracy = 0.0;
};

// Renders each class name through `prompt_template` ("{}" is replaced by the
// name), encodes it as text and classifies the images.
ZeroShotResult zero_shot_classify(const EncoderParams<float>& model, const Featurizer& f,
                                  std::span<const RenderedImage> images, std::span<const int> labels,
                                  std::span<const std::string> class_names, const std::string& prompt_template = "{}");

struct RecallResult {
  double left_to_right = 0.0;
  double right_to_left = 0.0;
};

// Row i of left is paired with row i of right. Ties rank the lower index first.
// Throws ContractError for k outside [1, N] or unequal counts.
RecallResult retrieval_recall(const nn::Tensor<double>& left, const nn::Tensor<double>& right, std::size_t k);

// --- linear probe ---------------------------------------------------------

// Samples `shots` examples per class from the training rows (seeded), fits a
// ridge-regularized least-squares classifier to one-hot targets and reports
// accuracy on the test rows. Throws DataError when a class has fewer than
// `shots` training rows.
double few_shot_linear_probe(const nn::Tensor<double>& train_embs, std::span<const int> train_labels,
                             const nn::Tensor<double>& test_embs, std::span<const int> test_labels, int shots,
                             std::uint64_t seed, double ridge = 1e-3);

// --- typographic attack ---------------------------------------------------

struct AttackResult {
  TextPosition position = TextPosition::top;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  double drop = 0.0;  // clean - attacked
};

// Writes confounder text into each image at `position` (same compositor as
// question images) and reruns zero-shot classification. Throws DataError when
// a confounder names the image's true class.
AttackResult typographic_attack_eval(const EncoderParams<float>& model, const Featurizer& f,
                                     std::span<const RenderedImage> images, std::span<const int> labels,
                                     std::span<const std::string> confounders,
                                     std::span<const std::string> class_names, TextPosition position);

// Draws one confounder per image uniformly from the other classes.
std::vector<std::string> random_confounders(std::span<const int> labels, std::span<const std::string> class_names,
                                            std::uint64_t seed);

}  // namespace clippo
