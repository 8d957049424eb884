#include "clippo/selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "clippo/contrastive.hpp"
#include "clippo/rng.hpp"

namespace clippo {

namespace {

RenderConfig canvas(int w, int h, int channels = 3, WrapMode wrap = WrapMode::word) {
  RenderConfig c;
  c.width_px = w;
  c.height_px = h;
  c.channels = channels;
  c.wrap_mode = wrap;
  return c;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

const std::vector<GoldenCase>& golden_render_cases() {
  static const std::vector<GoldenCase> cases = {
      {"empty", "", std::nullopt, canvas(224, 224), 0xF0C489465F680BA6ULL},
      {"single_A", "A", std::nullopt, canvas(224, 224), 0xA2D96FCB5743CBA6ULL},
      {"full_line_28", "abcdefghijklmnopqrstuvwxyz01", std::nullopt, canvas(224, 224), 0xEF6F3ADC369B95A6ULL},
      {"wrap_29", "abcdefghijklmnopqrstuvwxyz012", std::nullopt, canvas(224, 224), 0x714F5C1BC1BAA5C9ULL},
      {"newline", "Hello, world!\nSecond line", std::nullopt, canvas(224, 224), 0x9127081AE8E6E6B9ULL},
      {"sentence_pair", "The cat sat on the mat.", std::string("It was warm."), canvas(224, 224), 0x5B97A6049F5105F6ULL},
      {"char_wrap", "supercalifragilisticexpialidocious", std::nullopt, canvas(64, 64, 3, WrapMode::character),
       0xC65346B7967DD326ULL},
      {"word_fallback", "a supercalifragilisticexpialidocious b", std::nullopt, canvas(64, 64), 0x3C4DDE20F9DEC549ULL},
      {"wide_glyphs", "\xE3\x81\x82\xE3\x81\x84\xE3\x81\x86 \xE6\x97\xA5\xE6\x9C\xAC\xE8\xAA\x9E", std::nullopt,
       canvas(224, 224), 0x588624300F64F289ULL},
      {"truncated_gray", "the quick brown fox jumps over the lazy dog", std::nullopt, canvas(64, 32, 1), 0xCA4471E3129EA317ULL},
  };
  return cases;
}

RenderedImage render_golden(const GoldenCase& c, const GlyphTable& font) {
  return c.second ? render_sentence_pair(c.text, *c.second, c.cfg, font) : render_text(c.text, c.cfg, font);
}

EncoderConfig tiny_config(Variant v) {
  EncoderConfig c;
  c.patch_px = 8;
  c.image_px = 16;
  c.channels = 1;
  c.depth = 1;
  c.width = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.rep_dim = 4;
  c.variant = v;
  if (c.tokenized()) {
    c.vocab_size = 11;
    c.seq_len = 4;
  }
  return c;
}

nn::Program encoder_loss_program(const EncoderParams<double>& params, std::size_t batch, std::uint64_t seed) {
  const EncoderConfig cfg = params.config;
  Rng rng = Rng::substream(seed, "gradcheck-inputs");
  const auto n = static_cast<std::size_t>(cfg.num_patches());
  const auto d = static_cast<std::size_t>(cfg.patch_dim());
  nn::Tensor<double> images({batch, n, d});
  nn::Tensor<double> texts({batch, n, d});
  for (auto& v : images.data()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : texts.data()) v = rng.uniform(-1.0, 1.0);
  std::vector<std::vector<std::int32_t>> tokens(batch);
  for (auto& seq : tokens) {
    for (int i = 0; i < cfg.seq_len; ++i) seq.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size))));
  }
  auto shared = std::make_shared<const EncoderParams<double>>(params);
  return [shared, images, texts, tokens](nn::Tape<double>& tape, const std::vector<nn::Var<double>>& leaves) {
    const EncoderConfig& c = shared->config;
    nn::BoundParams<double> p(tape, shared->params, leaves);
    nn::Var<double> left = encode(p, c, image_input(images));
    nn::Var<double> right = c.tokenized() ? encode(p, c, token_input<double>(tokens))
                                          : encode(p, c, image_input(texts, Modality::rendered_text));
    return contrastive_loss(left, right, p(kLogTemperature)).loss;
  };
}

std::vector<CheckLine> run_selfcheck(const GlyphTable& font) {
  std::vector<CheckLine> lines;

  for (const auto& c : golden_render_cases()) {
    const auto got = pixel_digest(render_golden(c, font));
    lines.push_back({"render/" + c.name, got == c.digest, "digest " + hex64(got) + ", expected " + hex64(c.digest)});
  }
  {
    const auto img = render_text("A", RenderConfig{}, font);
    const int patches = (img.height / 16) * (img.width / 16);
    lines.push_back({"render/patch_count_224_16", patches == 196, std::to_string(patches) + " patches"});
  }

  int seed = 0;
  for (Variant v : {Variant::clippo, Variant::clippo_untied_both, Variant::one_tower_tokenized, Variant::two_tower}) {
    const auto params = init_params<double>(tiny_config(v), static_cast<std::uint64_t>(++seed));
    // Perturb away from the small init.
    EncoderParams<double> p = params;
    Rng rng(static_cast<std::uint64_t>(seed));
    for (auto& t : p.params.values()) {
      for (auto& x : t.data()) x += rng.uniform(-0.3, 0.3);
    }
    const auto report = nn::check_gradients(encoder_loss_program(p, 3, static_cast<std::uint64_t>(seed)),
                                            p.params.values(), 1e-5);
    lines.push_back({"gradcheck/" + std::string(to_string(v)), report.max_rel_error < 1e-3,
                     "max relative error " + sci(report.max_rel_error) + " at " +
                         p.params.names()[report.worst_param]});
  }

  {
    nn::Tensor<double> one({1, 4}, 0.5);
    const double loss = contrastive_loss_value(one, one, 10.0);
    lines.push_back({"loss/single_pair_zero", std::abs(loss) < 1e-12, "loss " + sci(loss)});
  }
  {
    const std::size_t n = 8;
    nn::Tensor<double> left({n, 2});
    nn::Tensor<double> right({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      left.at(i, 0) = 1.0;
      right.at(i, 1) = 1.0;
    }
    const double loss = contrastive_loss_value(left, right, 10.0);
    lines.push_back({"loss/identical_rows_log_n", std::abs(loss - std::log(static_cast<double>(n))) < 1e-9,
                     "loss " + sci(loss)});
  }
  return lines;
}

}  // namespace clippo
