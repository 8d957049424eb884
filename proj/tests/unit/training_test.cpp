#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "clippo/contrastive.hpp"
#include "clippo/datasets.hpp"
#include "clippo/errors.hpp"
#include "clippo/rng.hpp"
#include "clippo/schedule.hpp"
#include "clippo/selfcheck.hpp"
#include "clippo/shapes.hpp"
#include "clippo/trainer.hpp"

using namespace clippo;

namespace {

const GlyphTable& font() {
  static const GlyphTable t = load_glyph_table(std::filesystem::path(CLIPPO_DEFAULT_FONT));
  return t;
}

nn::Tensor<double> unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  nn::Tensor<double> t({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += (t.at(i, j) = rng.normal()) * t.at(i, j);
    for (std::size_t j = 0; j < d; ++j) t.at(i, j) /= std::sqrt(s);
  }
  return t;
}

// Direct evaluation of the symmetric loss, written out row by row.
double loss_oracle(const nn::Tensor<double>& a, const nn::Tensor<double>& b, double t) {
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<double> s(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += a.at(i, k) * b.at(j, k);
      s[i * n + j] = t * dot;
    }
  }
  double rows = 0, cols = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0, c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      r += std::exp(s[i * n + j]);
      c += std::exp(s[j * n + i]);
    }
    rows += std::log(r) - s[i * n + i];
    cols += std::log(c) - s[i * n + i];
  }
  return 0.5 * (rows + cols) / static_cast<double>(n);
}

std::vector<PairItem> numbered_pairs(int n) {
  std::vector<PairItem> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({Item::of_text("l" + std::to_string(i)), Item::of_text("r" + std::to_string(i)),
                   PairSource::image_alt_text});
  }
  return out;
}

}  // namespace

TEST_CASE("contrastive loss matches a direct evaluation") {
  Rng rng(1);
  for (std::size_t n : {1u, 2u, 5u, 16u}) {
    const auto a = unit_rows(n, 8, rng);
    const auto b = unit_rows(n, 8, rng);
    CHECK(contrastive_loss_value(a, b, 10.0) == doctest::Approx(loss_oracle(a, b, 10.0)).epsilon(1e-12));

    nn::Tape<double> tape;
    auto out = contrastive_loss(tape.constant(a), tape.constant(b), tape.constant(nn::Tensor<double>::scalar(std::log(3.0))));
    CHECK(out.loss.value().item() == doctest::Approx(loss_oracle(a, b, 3.0)).epsilon(1e-12));
    CHECK(out.temperature == doctest::Approx(3.0));
  }
}

TEST_CASE("contrastive loss edge cases") {
  Rng rng(2);
  const auto a = unit_rows(1, 4, rng);
  CHECK(std::abs(contrastive_loss_value(a, unit_rows(1, 4, rng), 10.0)) < 1e-12);
  CHECK_THROWS_AS(contrastive_loss_value(unit_rows(3, 4, rng), unit_rows(2, 4, rng), 10.0), ContractError);
}

TEST_CASE("the temperature receives a gradient") {
  Rng rng(3);
  const auto a = unit_rows(4, 4, rng);
  const auto b = unit_rows(4, 4, rng);
  const nn::Program f = [&](nn::Tape<double>&, const std::vector<nn::Var<double>>& v) {
    return contrastive_loss(v[0], v[1], v[2]).loss;
  };
  const auto r = nn::check_gradients(f, {a, b, nn::Tensor<double>::scalar(1.0)});
  CHECK(r.max_rel_error < 1e-6);
  CHECK(std::abs(nn::reverse_gradients(f, {a, b, nn::Tensor<double>::scalar(1.0)})[2].item()) > 0.0);
}

TEST_CASE("scaled step counts") {
  CHECK(scaled_step_count(250000, 0.5) == 500000);
  CHECK(scaled_step_count(100, 0.0) == 100);
  CHECK(scaled_step_count(100, 0.25) == 134);
  CHECK(scaled_step_count(300, 0.9) == 3000);
  CHECK_THROWS_AS(scaled_step_count(100, 1.0), ContractError);
  CHECK_THROWS_AS(scaled_step_count(100, -0.1), ContractError);
}

TEST_CASE("schedule examples") {
  ScheduleConfig s{1e-3, 100, 0, 1000};
  CHECK(lr_at(0, s) == 0.0);
  CHECK(lr_at(50, s) == doctest::Approx(5e-4));
  CHECK(lr_at(100, s) == doctest::Approx(1e-3));
  CHECK(lr_at(400, s) == doctest::Approx(5e-4));
  s.cooldown_steps = 100;
  CHECK(lr_at(1000, s) == 0.0);
  CHECK(lr_at(950, s) == doctest::Approx(1e-3 * std::sqrt(100.0 / 950.0) * 0.5));
  CHECK_THROWS_AS(lr_at(1001, s), ContractError);
  CHECK(cosine_lr_at(10, 0.1, 10, 110) == doctest::Approx(0.1));
  CHECK(cosine_lr_at(60, 0.1, 10, 110) == doctest::Approx(0.05));
  CHECK(cosine_lr_at(110, 0.1, 10, 110) == doctest::Approx(0.0));

  TrainConfig tc;
  tc.base_steps = 1000;
  tc.text_fraction = 0.5;
  CHECK(tc.total_steps() == 2000);
  CHECK(tc.schedule().warmup_steps == 100);
  CHECK(tc.schedule().cooldown_steps == 100);
}

TEST_CASE("text corpora and NSP pairs") {
  std::istringstream in("a1\na2\na3\n\nb1\n\nc1\nc2\n");
  const auto corpus = read_text_corpus(in);
  REQUIRE(corpus.size() == 3);
  NspSampler s(corpus, 4);
  CHECK(s.pair_count() == 3);
  std::set<std::string> seen;
  for (int i = 0; i < 200; ++i) {
    const auto p = s.next();
    CHECK(p.source == PairSource::text_text);
    seen.insert(p.left.text + ">" + p.right.text);
  }
  CHECK(seen == std::set<std::string>{"a1>a2", "a2>a3", "c1>c2"});

  std::istringstream lonely("x\n\ny\n");
  const auto single = read_text_corpus(lonely);
  CHECK_THROWS_AS(NspSampler(single, 1), DataError);
}

TEST_CASE("parallel pairs report the bad line") {
  std::istringstream good("hello\thallo\nyes\tja\n");
  CHECK(read_parallel_pairs(good).size() == 2);
  std::istringstream bad("hello\thallo\nbroken\n");
  try {
    read_parallel_pairs(bad);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("epoch sampler visits every item once per epoch") {
  auto sampler = epoch_sampler(numbered_pairs(7), 3);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::set<std::string> seen;
    for (int i = 0; i < 7; ++i) seen.insert(sampler().left.text);
    CHECK(seen.size() == 7);
  }
}

TEST_CASE("mixed batches hold round(pB) text pairs") {
  auto text = [] { return PairItem{Item::of_text("t"), Item::of_text("u"), PairSource::text_text}; };
  for (double p : {0.0, 0.25, 0.5, 0.33}) {
    MixedBatcher b(epoch_sampler(numbered_pairs(10), 1), text, p, 64, 2);
    const auto want = static_cast<std::size_t>(std::llround(p * 64));
    CHECK(b.text_pairs_per_batch() == want);
    std::size_t total_text = 0;
    for (int i = 0; i < 50; ++i) {
      const auto batch = b.next();
      CHECK(batch.size() == 64);
      for (const auto& item : batch) total_text += item.source == PairSource::text_text;
    }
    CHECK(std::abs(static_cast<double>(total_text) / (50.0 * 64.0) - p) <= 1.0 / 64.0);
  }
  CHECK_THROWS(MixedBatcher(epoch_sampler(numbered_pairs(3), 1), nullptr, 0.5, 8, 1));
}

TEST_CASE("synthetic shape classes") {
  const auto set = make_shape_classes(4, 64, 3, 1);
  CHECK(set.class_names.size() == kShapeClassCount);
  CHECK(set.images.size() == 40);
  std::set<std::string> captions(set.captions.begin(), set.captions.end());
  CHECK(captions.size() == 40);
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    CHECK(set.captions[i].rfind(set.class_names[static_cast<std::size_t>(set.labels[i])], 0) == 0);
    CHECK(set.images[i].height == 64);
  }
  const auto again = make_shape_classes(4, 64, 3, 1);
  CHECK(again.images[7].pixels == set.images[7].pixels);
}

TEST_CASE("synthetic VQA answers are consistent with the scene") {
  const auto ds = make_shapes_vqa(200, 64, 3, 5);
  CHECK(ds.answers.size() == 12);
  std::map<std::string, int> kinds;
  for (const auto& ex : ds.examples) {
    REQUIRE(ex.answer >= 0);
    REQUIRE(static_cast<std::size_t>(ex.answer) < ds.answers.size());
    const std::string& a = ds.answers[static_cast<std::size_t>(ex.answer)];
    if (ex.question.rfind("how many", 0) == 0) {
      CHECK((a == "1" || a == "2" || a == "3"));
    }
    kinds[ex.question.substr(0, 4)]++;
  }
  CHECK(kinds.size() >= 4);
}

TEST_CASE("featurizer renders text at the model input size") {
  const auto cfg = EncoderConfig::desk();
  Featurizer f(cfg, font());
  CHECK(f.text_modality() == Modality::rendered_text);
  const auto img = f.render("hello");
  CHECK(img.height == 64);
  CHECK(img.channels == 3);
  const auto gray = f.prepare_image(RenderedImage(32, 48, 1, 0.1f));
  CHECK(gray.height == 64);
  CHECK(gray.channels == 3);
  CHECK_THROWS_AS(Featurizer(EncoderConfig::desk(Variant::two_tower), font()), ConfigError);
}

TEST_CASE("training is deterministic and writes its outputs") {
  const auto cfg = tiny_config(Variant::clippo);
  Featurizer f(cfg, font());
  const auto set = make_shape_classes(2, cfg.image_px, cfg.channels, 3);
  std::vector<PairItem> pairs;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    pairs.push_back({Item::of_image(set.images[i]), Item::of_text(set.captions[i]), PairSource::image_alt_text});
  }
  TrainConfig tc;
  tc.batch_size = 4;
  tc.base_steps = 12;
  tc.log_every = 3;

  const auto run = [&](std::optional<std::filesystem::path> dir) {
    MixedBatcher b(epoch_sampler(pairs, 1), nullptr, 0.0, 4, 2);
    TrainOptions opt;
    opt.out_dir = dir;
    return train(tc, init_params<float>(cfg, 1), b, f, opt);
  };
  const auto dir = std::filesystem::temp_directory_path() / "clippo_training_test";
  std::filesystem::remove_all(dir);
  const auto a = run(dir);
  const auto b = run(std::nullopt);
  CHECK(a.metrics == b.metrics);
  CHECK(a.model.params == b.model.params);
  CHECK(a.metrics.size() == 4);
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  const auto loaded = load_checkpoint(dir / "checkpoint.json");
  CHECK(loaded.params == a.model.params);

  {
    MixedBatcher early(epoch_sampler(pairs, 1), nullptr, 0.0, 4, 2);
    TrainOptions opt;
    std::int64_t calls = 0;
    opt.on_step = [&](std::int64_t step, const EncoderParams<float>&) {
      ++calls;
      return step == 5;
    };
    const auto stopped = train(tc, init_params<float>(cfg, 1), early, f, opt);
    CHECK(calls == 5);
    CHECK(stopped.steps_run == 5);
    CHECK(stopped.metrics.back().step == 5);
  }

  tc.base_steps = 0;
  const auto zero = run(std::nullopt);
  CHECK(zero.model.params == init_params<float>(cfg, 1).params);
  CHECK(zero.steps_run == 0);
}

TEST_CASE("invalid train configs are rejected") {
  TrainConfig tc;
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.text_fraction = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}
