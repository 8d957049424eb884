#include "clippo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "clippo/errors.hpp"

namespace clippo {

std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::accuracy:
      return "accuracy";
    case MetricKind::recall_at_k:
      return "recall@k";
    case MetricKind::f1:
      return "f1";
    case MetricKind::matthews:
      return "matthews";
    case MetricKind::spearman:
      return "spearman";
  }
  return "accuracy";
}

MetricKind parse_metric(std::string_view name) {
  for (auto k : {MetricKind::accuracy, MetricKind::recall_at_k, MetricKind::f1, MetricKind::matthews,
                 MetricKind::spearman}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

void write_metrics_records(const std::vector<MetricsRecord>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "task,metric,value,split,config_digest\n";
  out.precision(9);
  for (const auto& r : rows) {
    out << r.task << ',' << to_string(r.kind) << ',' << r.value << ',' << r.split << ',' << r.config_digest << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ContractError(std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b) + " items");
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double dot_row(const nn::Tensor<double>& a, std::size_t i, const nn::Tensor<double>& b, std::size_t j) {
  const std::size_t d = a.dim(1);
  const double* x = a.data().data() + i * d;
  const double* y = b.data().data() + j * d;
  double s = 0.0;
  for (std::size_t t = 0; t < d; ++t) s += x[t] * y[t];
  return s;
}

double recall_one_way(const nn::Tensor<double>& q, const nn::Tensor<double>& c, std::size_t k) {
  const std::size_t n = q.dim(0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = dot_row(q, i, c, i);
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s = dot_row(q, i, c, j);
      if (s > target || (s == target && j < i)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<Item> text_items(std::span<const std::string> texts) {
  std::vector<Item> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(Item::of_text(t));
  return out;
}

std::vector<const Item*> pointers(const std::vector<Item>& items) {
  std::vector<const Item*> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(&it);
  return out;
}

nn::Tensor<double> embed_texts(const EncoderParams<float>& model, const Featurizer& f,
                               std::span<const std::string> texts) {
  const auto items = text_items(texts);
  const auto ptrs = pointers(items);
  return embed_items(model, f, std::span<const Item* const>(ptrs)).cast<double>();
}

nn::Tensor<double> embed_images(const EncoderParams<float>& model, const Featurizer& f,
                                std::span<const RenderedImage> images) {
  std::vector<Item> items;
  items.reserve(images.size());
  for (const auto& img : images) items.push_back(Item::of_image(img));
  const auto ptrs = pointers(items);
  return embed_items(model, f, std::span<const Item* const>(ptrs)).cast<double>();
}

}  // namespace

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  check_same_size(predicted.size(), truth.size(), "accuracy");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double f1_score(std::span<const int> predicted, std::span<const int> truth) {
  check_same_size(predicted.size(), truth.size(), "f1");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    if (predicted[i] == 1 && truth[i] != 1) ++fp;
    if (predicted[i] != 1 && truth[i] == 1) ++fn;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

double matthews_corrcoef(std::span<const int> predicted, std::span<const int> truth) {
  check_same_size(predicted.size(), truth.size(), "matthews");
  std::map<int, double> p_count, t_count;
  double correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    p_count[predicted[i]] += 1;
    t_count[truth[i]] += 1;
    if (predicted[i] == truth[i]) ++correct;
  }
  const double s = static_cast<double>(truth.size());
  double pk_tk = 0, pk2 = 0, tk2 = 0;
  for (const auto& [k, p] : p_count) {
    const auto it = t_count.find(k);
    pk_tk += p * (it == t_count.end() ? 0.0 : it->second);
    pk2 += p * p;
  }
  for (const auto& [k, t] : t_count) tk2 += t * t;
  const double denom = std::sqrt((s * s - pk2) * (s * s - tk2));
  return denom == 0.0 ? 0.0 : (correct * s - pk_tk) / denom;
}

double spearman(std::span<const double> predicted, std::span<const double> truth) {
  check_same_size(predicted.size(), truth.size(), "spearman");
  const auto a = average_ranks(predicted);
  const auto b = average_ranks(truth);
  const double n = static_cast<double>(a.size());
  if (a.empty()) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa == 0.0 || sbb == 0.0 ? 0.0 : sab / std::sqrt(saa * sbb);
}

std::vector<int> zero_shot_predict(const nn::Tensor<double>& image_embs, const nn::Tensor<double>& class_embs) {
  if (class_embs.rank() != 2 || class_embs.dim(0) == 0) throw ContractError("zero-shot needs at least one class");
  if (image_embs.rank() != 2 || image_embs.dim(1) != class_embs.dim(1)) {
    throw ShapeError("zero-shot embeddings " + nn::shape_str(image_embs.shape()) + " vs classes " +
                     nn::shape_str(class_embs.shape()));
  }
  std::vector<int> out(image_embs.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    double best_s = dot_row(image_embs, i, class_embs, 0);
    for (std::size_t c = 1; c < class_embs.dim(0); ++c) {
      const double s = dot_row(image_embs, i, class_embs, c);
      if (s > best_s) {
        best_s = s;
        best = c;
      }
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

ZeroShotResult zero_shot_classify(const EncoderParams<float>& model, const Featurizer& f,
                                  std::span<const RenderedImage> images, std::span<const int> labels,
                                  std::span<const std::string> class_names, const std::string& prompt_template) {
  if (class_names.empty()) throw ContractError("zero-shot needs at least one class");
  check_same_size(images.size(), labels.size(), "zero-shot");
  std::vector<std::string> prompts;
  for (const auto& name : class_names) {
    std::string p = prompt_template;
    const auto at = p.find("{}");
    if (at == std::string::npos) {
      p = name;
    } else {
      p.replace(at, 2, name);
    }
    prompts.push_back(p);
  }
  const auto class_embs = embed_texts(model, f, prompts);
  const auto image_embs = embed_images(model, f, images);
  ZeroShotResult r;
  r.predictions = zero_shot_predict(image_embs, class_embs);
  r.accuracy = accuracy(r.predictions, labels);
  return r;
}

RecallResult retrieval_recall(const nn::Tensor<double>& left, const nn::Tensor<double>& right, std::size_t k) {
  if (left.rank() != 2 || right.rank() != 2 || left.dim(1) != right.dim(1)) {
    throw ShapeError("retrieval embeddings " + nn::shape_str(left.shape()) + " vs " + nn::shape_str(right.shape()));
  }
  check_same_size(left.dim(0), right.dim(0), "retrieval");
  const std::size_t n = left.dim(0);
  if (k < 1 || k > n) throw ContractError("recall@" + std::to_string(k) + " over " + std::to_string(n) + " pairs");
  return {recall_one_way(left, right, k), recall_one_way(right, left, k)};
}

double few_shot_linear_probe(const nn::Tensor<double>& train_embs, std::span<const int> train_labels,
                             const nn::Tensor<double>& test_embs, std::span<const int> test_labels, int shots,
                             std::uint64_t seed, double ridge) {
  check_same_size(train_embs.dim(0), train_labels.size(), "probe train");
  check_same_size(test_embs.dim(0), test_labels.size(), "probe test");
  if (shots <= 0) throw ContractError("shots must be positive");
  int classes = 0;
  for (int l : train_labels) {
    if (l < 0) throw DataError("negative class label");
    classes = std::max(classes, l + 1);
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < train_labels.size(); ++i) by_class[static_cast<std::size_t>(train_labels[i])].push_back(i);

  Rng rng = Rng::substream(seed, "probe");
  std::vector<std::size_t> chosen;
  for (int c = 0; c < classes; ++c) {
    auto& rows = by_class[static_cast<std::size_t>(c)];
    if (rows.size() < static_cast<std::size_t>(shots)) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(rows.size()) + " examples, need " +
                      std::to_string(shots));
    }
    rng.shuffle(rows.begin(), rows.end());
    chosen.insert(chosen.end(), rows.begin(), rows.begin() + shots);
  }

  const Eigen::Index d = static_cast<Eigen::Index>(train_embs.dim(1));
  const Eigen::Index n = static_cast<Eigen::Index>(chosen.size());
  Eigen::MatrixXd x(n, d + 1);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t src = chosen[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < d; ++c) x(r, c) = train_embs.at(src, static_cast<std::size_t>(c));
    x(r, d) = 1.0;
    y(r, train_labels[src]) = 1.0;
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += ridge;
  const Eigen::MatrixXd w = gram.ldlt().solve(x.transpose() * y);

  std::vector<int> predicted(test_labels.size());
  for (std::size_t i = 0; i < test_labels.size(); ++i) {
    Eigen::RowVectorXd row(d + 1);
    for (Eigen::Index c = 0; c < d; ++c) row(c) = test_embs.at(i, static_cast<std::size_t>(c));
    row(d) = 1.0;
    const Eigen::RowVectorXd scores = row * w;
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.size(); ++c) {
      if (scores(c) > scores(best)) best = c;
    }
    predicted[i] = static_cast<int>(best);
  }
  return accuracy(predicted, test_labels);
}

AttackResult typographic_attack_eval(const EncoderParams<float>& model, const Featurizer& f,
                                     std::span<const RenderedImage> images, std::span<const int> labels,
                                     std::span<const std::string> confounders,
                                     std::span<const std::string> class_names, TextPosition position) {
  check_same_size(images.size(), labels.size(), "typographic attack");
  check_same_size(images.size(), confounders.size(), "typographic attack");
  std::vector<RenderedImage> clean;
  std::vector<RenderedImage> attacked;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto label = static_cast<std::size_t>(labels[i]);
    if (label >= class_names.size()) throw DataError("label " + std::to_string(labels[i]) + " has no class name");
    if (confounders[i] == class_names[label]) {
      throw DataError("confounder for image " + std::to_string(i) + " equals its true label '" + confounders[i] + "'");
    }
    clean.push_back(f.prepare_image(images[i]));
    attacked.push_back(compose_question_image(clean.back(), confounders[i], f.render_config(), f.font(), position));
  }
  AttackResult r;
  r.position = position;
  r.clean_accuracy = zero_shot_classify(model, f, clean, labels, class_names).accuracy;
  r.attacked_accuracy = zero_shot_classify(model, f, attacked, labels, class_names).accuracy;
  r.drop = r.clean_accuracy - r.attacked_accuracy;
  return r;
}

std::vector<std::string> random_confounders(std::span<const int> labels, std::span<const std::string> class_names,
                                            std::uint64_t seed) {
  if (class_names.size() < 2) throw ContractError("confounders need at least two classes");
  Rng rng = Rng::substream(seed, "confounders");
  std::vector<std::string> out;
  for (int l : labels) {
    const auto other = (static_cast<std::size_t>(l) + 1 + rng.below(class_names.size() - 1)) % class_names.size();
    out.push_back(class_names[other]);
  }
  return out;
}

}  // namespace clippo
