#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "clippo/encoder.hpp"
#include "clippo/errors.hpp"
#include "clippo/rng.hpp"
#include "clippo/selfcheck.hpp"

using namespace clippo;

namespace {

const Variant kAll[] = {Variant::clippo,         Variant::one_tower_tokenized, Variant::two_tower,
                        Variant::clippo_untied_embed, Variant::clippo_untied_head,  Variant::clippo_untied_both};

EncoderInput<double> random_patches(const EncoderConfig& cfg, std::size_t batch, std::uint64_t seed,
                                    Modality m = Modality::image) {
  Rng rng(seed);
  nn::Tensor<double> t({batch, static_cast<std::size_t>(cfg.num_patches()), static_cast<std::size_t>(cfg.patch_dim())});
  for (auto& v : t.data()) v = rng.uniform(-1, 1);
  return image_input(std::move(t), m);
}

// Shape-level count of one tower: embeddings, blocks and final norm.
std::size_t tower_count(const EncoderConfig& c, bool patches, bool tokens) {
  const std::size_t d = c.width, h = c.width * c.mlp_ratio, n = c.num_patches();
  std::size_t total = 0;
  if (patches) total += c.patch_dim() * d + d + n * d;
  if (tokens) total += c.vocab_size * d + c.seq_len * d;
  const std::size_t block = 2 * d + (4 * d * d + 3 * d) + 2 * d + (d * h + h + h * d + d);
  total += c.depth * block + 2 * d;
  return total;
}

std::size_t head_count(const EncoderConfig& c) {
  const std::size_t d = c.width, h = c.width * c.mlp_ratio;
  return d + (4 * d * d + 3 * d) + 2 * d + (d * h + h + h * d + d) + d * c.rep_dim;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (Variant v : kAll) CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_variant("three_tower"), ConfigError);
  for (Modality m : {Modality::image, Modality::rendered_text, Modality::tokenized_text}) {
    CHECK(parse_modality(to_string(m)) == m);
  }
}

TEST_CASE("desk and B/16 presets") {
  const auto d = EncoderConfig::desk();
  CHECK(d.patch_px == 8);
  CHECK(d.image_px == 64);
  CHECK(d.depth == 4);
  CHECK(d.width == 64);
  CHECK(d.heads == 4);
  CHECK(d.rep_dim == 64);
  const auto b = EncoderConfig::b16(Variant::two_tower);
  CHECK(b.num_patches() == 196);
  CHECK(b.vocab_size == 32000);
  CHECK(b.seq_len == 196);
  auto bad = d;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = d;
  bad.image_px = 60;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("parameter counts match a shape-level oracle") {
  for (Variant v : kAll) {
    CAPTURE(to_string(v));
    auto c = EncoderConfig::desk(v);
    std::size_t want = 1;  // temperature
    switch (v) {
      case Variant::clippo:
        want += tower_count(c, true, false) + head_count(c);
        break;
      case Variant::one_tower_tokenized:
        want += tower_count(c, true, true) + head_count(c);
        break;
      case Variant::two_tower:
        want += tower_count(c, true, false) + tower_count(c, false, true) + 2 * head_count(c);
        break;
      case Variant::clippo_untied_embed:
        want += tower_count(c, true, false) + head_count(c) + c.patch_dim() * c.width + c.width;
        break;
      case Variant::clippo_untied_head:
        want += tower_count(c, true, false) + 2 * head_count(c);
        break;
      case Variant::clippo_untied_both:
        want += tower_count(c, true, false) + 2 * head_count(c) + c.patch_dim() * c.width + c.width;
        break;
    }
    CHECK(parameter_count(c) == want);
  }
}

TEST_CASE("parameter names are unique and every tensor is used") {
  for (Variant v : kAll) {
    CAPTURE(to_string(v));
    const auto cfg = tiny_config(v);
    auto model = init_params<double>(cfg, 3);
    std::set<std::string> names(model.params.names().begin(), model.params.names().end());
    CHECK(names.size() == model.params.size());
    Rng rng(9);
    for (auto& t : model.params.values()) {
      for (auto& x : t.data()) x += rng.uniform(-0.3, 0.3);
    }
    const auto grads = nn::reverse_gradients(encoder_loss_program(model, 3, 5), model.params.values());
    for (std::size_t i = 0; i < grads.size(); ++i) {
      double norm = 0;
      for (double g : grads[i].data()) norm += g * g;
      CAPTURE(model.params.names()[i]);
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("init is deterministic and follows the init rules") {
  const auto cfg = EncoderConfig::desk();
  const auto a = init_params<float>(cfg, 1);
  const auto b = init_params<float>(cfg, 1);
  const auto c = init_params<float>(cfg, 2);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == c.params);
  CHECK(a.params[kLogTemperature][0] == doctest::Approx(std::log(10.0)));
  for (float v : a.params["block0/ln1/scale"].data()) CHECK(v == 1.0f);
  for (float v : a.params["block0/attn/q/bias"].data()) CHECK(v == 0.0f);
  for (float v : a.params["patch/kernel"].data()) CHECK(std::abs(v) <= 0.04f);
}

TEST_CASE("patchify orders patches in raster order, channels last") {
  EncoderConfig cfg = tiny_config(Variant::clippo);
  cfg.channels = 3;
  RenderedImage img(16, 16, 3);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = static_cast<float>(y * 100 + x * 3 + ch);
    }
  }
  const auto p = patchify<double>(img, cfg);
  CHECK(p.shape() == nn::Shape{4, 192});
  CHECK(p.at(1, 0) == img.at(0, 8, 0));
  CHECK(p.at(2, 0) == img.at(8, 0, 0));
  CHECK(p.at(3, 3 * (8 * 2 + 1) + 2) == img.at(10, 9, 2));
  CHECK_THROWS_AS(patchify<double>(RenderedImage(12, 16, 3), cfg), ShapeError);
}

TEST_CASE("encode produces unit rows of rep_dim") {
  for (Variant v : kAll) {
    CAPTURE(to_string(v));
    const auto cfg = tiny_config(v);
    const auto model = init_params<double>(cfg, 4);
    const auto out = embed(model, random_patches(cfg, 3, 1));
    CHECK(out.shape() == nn::Shape{3, static_cast<std::size_t>(cfg.rep_dim)});
    for (std::size_t r = 0; r < 3; ++r) {
      double n = 0;
      for (std::size_t c = 0; c < out.dim(1); ++c) n += out.at(r, c) * out.at(r, c);
      CHECK(n == doctest::Approx(1.0));
    }
    const auto layers = layer_activations(model, random_patches(cfg, 2, 1));
    CHECK(layers.size() == static_cast<std::size_t>(cfg.depth));
  }
}

TEST_CASE("modality mismatches are contract errors") {
  const auto clippo = tiny_config(Variant::clippo);
  const auto m = init_params<double>(clippo, 1);
  CHECK_THROWS_AS(embed(m, token_input<double>({{1, 2, 3, 4}})), ContractError);

  const auto tok = tiny_config(Variant::one_tower_tokenized);
  const auto t = init_params<double>(tok, 1);
  CHECK_THROWS_AS(embed(t, random_patches(tok, 1, 1, Modality::rendered_text)), ContractError);
  CHECK(embed(t, token_input<double>({{1, 2, 3, 4}})).dim(0) == 1);
}

TEST_CASE("shared weights embed an image and its identical render identically") {
  const auto cfg = tiny_config(Variant::clippo);
  const auto model = init_params<double>(cfg, 6);
  const auto in = random_patches(cfg, 2, 3);
  auto as_text = in;
  as_text.modality = Modality::rendered_text;
  CHECK(embed(model, in) == embed(model, as_text));

  const auto untied = tiny_config(Variant::clippo_untied_both);
  auto um = init_params<double>(untied, 6);
  auto ut = in;
  ut.modality = Modality::rendered_text;
  CHECK_FALSE(embed(um, in) == embed(um, ut));
}

TEST_CASE("checkpoint containers round trip the model") {
  const auto cfg = tiny_config(Variant::two_tower);
  const auto model = init_params<float>(cfg, 8);
  const auto back = from_container<float>(to_container(model));
  CHECK(back.config == cfg);
  CHECK(back.params == model.params);

  auto broken = to_container(model);
  broken.entries.pop_back();
  CHECK_THROWS(from_container<float>(broken));
}

TEST_CASE("pad_tokens truncates and pads") {
  const std::vector<std::int32_t> ids{5, 6, 7};
  CHECK(pad_tokens(ids, 5, 0) == std::vector<std::int32_t>{5, 6, 7, 0, 0});
  CHECK(pad_tokens(ids, 2, 0) == std::vector<std::int32_t>{5, 6});
}

TEST_CASE("positional embeddings resize bilinearly to a new grid") {
  auto model = init_params<float>(tiny_config(Variant::clippo), 4);
  std::vector<std::string> grid_names;
  for (const auto& name : model.params.names()) {
    if (name.ends_with("pos")) grid_names.push_back(name);
  }
  REQUIRE(grid_names.size() == 1);
  for (const auto& name : grid_names) {
    auto& pos = model.params[name];
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < pos.dim(1); ++c) pos.at(r, c) = static_cast<float>(10 * (r / 2) + r % 2);
    }
  }
  const auto big = resize_positions(model, 32);
  CHECK(big.config.image_px == 32);
  CHECK(big.config.num_patches() == 16);
  const double w[] = {0.0, 0.25, 0.75, 1.0};
  for (const auto& name : grid_names) {
    const auto& pos = big.params[name];
    REQUIRE(pos.dim(0) == 16);
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) CHECK(pos.at(y * 4 + x, 1) == doctest::Approx(10 * w[y] + w[x]));
    }
  }
  for (const auto& name : model.params.names()) {
    if (!name.ends_with("pos")) CHECK(big.params[name] == model.params[name]);
  }
  CHECK(embed(big, image_input(nn::Tensor<float>({2, 16, 8 * 8 * 1}))).dim(1) == 4);
  CHECK(resize_positions(model, 16).params == model.params);
  CHECK_THROWS_AS(resize_positions(model, 20), ConfigError);
}
