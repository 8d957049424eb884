#include "clippo/encoder.hpp"

#include <cmath>

#include "clippo/errors.hpp"
#include "clippo/rng.hpp"

namespace clippo {

using nn::Shape;
using nn::Tensor;
using nn::Var;

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::clippo:
      return "clippo";
    case Variant::one_tower_tokenized:
      return "one_tower_tokenized";
    case Variant::two_tower:
      return "two_tower";
    case Variant::clippo_untied_embed:
      return "clippo_untied_embed";
    case Variant::clippo_untied_head:
      return "clippo_untied_head";
    case Variant::clippo_untied_both:
      return "clippo_untied_both";
  }
  return "clippo";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::clippo, Variant::one_tower_tokenized, Variant::two_tower, Variant::clippo_untied_embed,
                 Variant::clippo_untied_head, Variant::clippo_untied_both}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown encoder variant '" + std::string(name) + "'");
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::image:
      return "image";
    case Modality::rendered_text:
      return "rendered_text";
    case Modality::tokenized_text:
      return "tokenized_text";
  }
  return "image";
}

Modality parse_modality(std::string_view name) {
  for (auto m : {Modality::image, Modality::rendered_text, Modality::tokenized_text}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
  if (patch_px <= 0 || image_px <= 0 || depth < 0 || width <= 0 || heads <= 0 || mlp_ratio <= 0 || rep_dim <= 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  if (image_px % patch_px != 0) throw ConfigError("image_px must be divisible by patch_px");
  if (width % heads != 0) throw ConfigError("width must be divisible by heads");
  if (tokenized() && (vocab_size <= 0 || seq_len <= 0)) {
    throw ConfigError("tokenized variants need vocab_size and seq_len");
  }
}

EncoderConfig EncoderConfig::desk(Variant v) {
  EncoderConfig c;
  c.variant = v;
  if (c.tokenized()) {
    c.vocab_size = 1024;
    c.seq_len = c.num_patches();
  }
  return c;
}

EncoderConfig EncoderConfig::b16(Variant v) {
  EncoderConfig c;
  c.patch_px = 16;
  c.image_px = 224;
  c.depth = 12;
  c.width = 768;
  c.heads = 12;
  c.mlp_ratio = 4;
  c.rep_dim = 768;
  c.variant = v;
  if (c.tokenized()) {
    c.vocab_size = 32000;
    c.seq_len = 196;
  }
  return c;
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"patch_px", c.patch_px}, {"image_px", c.image_px}, {"channels", c.channels},
       {"depth", c.depth},       {"width", c.width},       {"heads", c.heads},
       {"mlp_ratio", c.mlp_ratio}, {"rep_dim", c.rep_dim},  {"variant", to_string(c.variant)},
       {"vocab_size", c.vocab_size}, {"seq_len", c.seq_len}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.patch_px = j.at("patch_px").get<int>();
  c.image_px = j.at("image_px").get<int>();
  c.channels = j.at("channels").get<int>();
  c.depth = j.at("depth").get<int>();
  c.width = j.at("width").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<int>();
  c.rep_dim = j.at("rep_dim").get<int>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.vocab_size = j.value("vocab_size", 0);
  c.seq_len = j.value("seq_len", 0);
}

// ---------------------------------------------------------------------------
// Parameter layout

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

std::string tower_prefix(const EncoderConfig& cfg, Modality m) {
  if (cfg.variant != Variant::two_tower) return "";
  return m == Modality::tokenized_text ? "text/" : "image/";
}

bool untied_embed(Variant v) { return v == Variant::clippo_untied_embed || v == Variant::clippo_untied_both; }
bool untied_head(Variant v) { return v == Variant::clippo_untied_head || v == Variant::clippo_untied_both; }

void check_modality(const EncoderConfig& cfg, Modality m) {
  if (m == Modality::tokenized_text && !cfg.tokenized()) {
    throw ContractError("variant " + std::string(to_string(cfg.variant)) + " has no token embedding");
  }
  if (m == Modality::rendered_text && cfg.tokenized()) {
    throw ContractError("variant " + std::string(to_string(cfg.variant)) + " encodes text from token ids");
  }
}

void add_linear(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t in, std::size_t outd,
                bool bias = true) {
  out.push_back({prefix + "kernel", {in, outd}});
  if (bias) out.push_back({prefix + "bias", {outd}});
}

void add_layernorm(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  out.push_back({prefix + "scale", {d}});
  out.push_back({prefix + "bias", {d}});
}

// The key projection has no bias.
void add_attention(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  add_linear(out, prefix + "q/", d, d);
  add_linear(out, prefix + "k/", d, d, false);
  add_linear(out, prefix + "v/", d, d);
  add_linear(out, prefix + "o/", d, d);
}

void add_mlp(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d, std::size_t hidden) {
  add_linear(out, prefix + "fc1/", d, hidden);
  add_linear(out, prefix + "fc2/", hidden, d);
}

void add_tower(std::vector<ParamSpec>& out, const EncoderConfig& cfg, const std::string& prefix, bool patches,
               bool tokens) {
  const std::size_t d = sz(cfg.width);
  if (patches) {
    add_linear(out, prefix + "patch/", sz(cfg.patch_dim()), d);
    out.push_back({prefix + "pos", {sz(cfg.num_patches()), d}});
  }
  if (tokens) {
    out.push_back({prefix + "token/table", {sz(cfg.vocab_size), d}});
    out.push_back({prefix + "token/pos", {sz(cfg.seq_len), d}});
  }
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string b = prefix + "block" + std::to_string(i) + "/";
    add_layernorm(out, b + "ln1/", d);
    add_attention(out, b + "attn/", d);
    add_layernorm(out, b + "ln2/", d);
    add_mlp(out, b + "mlp/", d, d * sz(cfg.mlp_ratio));
  }
  add_layernorm(out, prefix + "final_ln/", d);
}

void add_head(std::vector<ParamSpec>& out, const EncoderConfig& cfg, const std::string& prefix) {
  const std::size_t d = sz(cfg.width);
  out.push_back({prefix + "probe", {1, d}});
  add_attention(out, prefix + "attn/", d);
  add_layernorm(out, prefix + "ln/", d);
  add_mlp(out, prefix + "mlp/", d, d * sz(cfg.mlp_ratio));
  add_linear(out, prefix + "proj/", d, sz(cfg.rep_dim), false);
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string head_prefix(const EncoderConfig& cfg, Modality m) {
  if (cfg.variant == Variant::two_tower) return tower_prefix(cfg, m) + "head/";
  if (m == Modality::rendered_text && untied_head(cfg.variant)) return "text_head/";
  return "head/";
}

std::string embedding_prefix(const EncoderConfig& cfg, Modality m) {
  if (m == Modality::tokenized_text) return tower_prefix(cfg, m) + "token/";
  if (m == Modality::rendered_text && untied_embed(cfg.variant)) return "text_patch/";
  return tower_prefix(cfg, m) + "patch/";
}

std::string position_param(const EncoderConfig& cfg, Modality m) {
  if (m == Modality::tokenized_text) return tower_prefix(cfg, m) + "token/pos";
  return tower_prefix(cfg, m) + "pos";
}

std::vector<ParamSpec> param_specs(const EncoderConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  switch (cfg.variant) {
    case Variant::two_tower:
      add_tower(out, cfg, "image/", true, false);
      add_head(out, cfg, "image/head/");
      add_tower(out, cfg, "text/", false, true);
      add_head(out, cfg, "text/head/");
      break;
    case Variant::one_tower_tokenized:
      add_tower(out, cfg, "", true, true);
      add_head(out, cfg, "head/");
      break;
    default:
      add_tower(out, cfg, "", true, false);
      if (untied_embed(cfg.variant)) add_linear(out, "text_patch/", sz(cfg.patch_dim()), sz(cfg.width));
      add_head(out, cfg, "head/");
      if (untied_head(cfg.variant)) add_head(out, cfg, "text_head/");
      break;
  }
  out.push_back({std::string(kLogTemperature), {}});
  return out;
}

std::size_t parameter_count(const EncoderConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : param_specs(cfg)) n += nn::numel(s.shape);
  return n;
}

template <typename T>
EncoderParams<T> init_params(const EncoderConfig& cfg, std::uint64_t seed) {
  EncoderParams<T> model{cfg, {}};
  for (const auto& spec : param_specs(cfg)) {
    Tensor<T> t(spec.shape);
    if (spec.name == kLogTemperature) {
      t[0] = static_cast<T>(std::log(10.0));
    } else if (ends_with(spec.name, "/scale")) {
      for (auto& v : t.data()) v = T(1);
    } else if (!ends_with(spec.name, "/bias")) {
      Rng rng = Rng::substream(seed, "init/" + spec.name);
      for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(0.02));
    }
    model.params.add(spec.name, std::move(t));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Inputs

template <typename T>
Tensor<T> patchify(const RenderedImage& image, const EncoderConfig& cfg) {
  const int ps = cfg.patch_px;
  if (ps <= 0 || image.height % ps != 0 || image.width % ps != 0) {
    throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is not divisible into " + std::to_string(ps) + "-px patches");
  }
  const int gh = image.height / ps;
  const int gw = image.width / ps;
  const int c = image.channels;
  Tensor<T> out({sz(gh * gw), sz(ps * ps * c)});
  std::size_t o = 0;
  for (int py = 0; py < gh; ++py) {
    for (int px = 0; px < gw; ++px) {
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          for (int ch = 0; ch < c; ++ch) out[o++] = static_cast<T>(image.at(py * ps + y, px * ps + x, ch));
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> patchify_batch(std::span<const RenderedImage> images, const EncoderConfig& cfg) {
  const std::size_t n = sz(cfg.num_patches());
  const std::size_t d = sz(cfg.patch_dim());
  Tensor<T> out({images.size(), n, d});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& img = images[b];
    if (img.height != cfg.image_px || img.width != cfg.image_px || img.channels != cfg.channels) {
      throw ShapeError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
                       std::to_string(img.channels) + " does not match encoder input " +
                       std::to_string(cfg.image_px) + "x" + std::to_string(cfg.image_px) + "x" +
                       std::to_string(cfg.channels));
    }
    const Tensor<T> p = patchify<T>(img, cfg);
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * n * d));
  }
  return out;
}

std::vector<std::int32_t> pad_tokens(std::span<const std::int32_t> ids, int seq_len, std::int32_t pad_id) {
  std::vector<std::int32_t> out(ids.begin(), ids.begin() + std::min<std::ptrdiff_t>(ids.size(), seq_len));
  out.resize(sz(seq_len), pad_id);
  return out;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

template <typename T>
using Bound = nn::BoundParams<T>;

template <typename T>
Var<T> linear(const Bound<T>& p, const std::string& prefix, Var<T> x) {
  Var<T> y = nn::matmul(x, p(prefix + "kernel"));
  if (p.params().contains(prefix + "bias")) y = y + p(prefix + "bias");
  return y;
}

template <typename T>
Var<T> layer_norm(const Bound<T>& p, const std::string& prefix, Var<T> x) {
  return nn::layernorm_lastdim(x) * p(prefix + "scale") + p(prefix + "bias");
}

// [B, N, D] -> [B, H, N, D/H]
template <typename T>
Var<T> split_heads(Var<T> x, std::size_t heads) {
  const auto& s = x.shape();
  const std::size_t b = s[0], n = s[1], d = s[2];
  return nn::permute(nn::reshape(x, {b, n, heads, d / heads}), {0, 2, 1, 3});
}

template <typename T>
Var<T> merge_heads(Var<T> x) {
  const auto& s = x.shape();
  const std::size_t b = s[0], h = s[1], n = s[2], dh = s[3];
  return nn::reshape(nn::permute(x, {0, 2, 1, 3}), {b, n, h * dh});
}

template <typename T>
Var<T> attention(const Bound<T>& p, const std::string& prefix, Var<T> queries, Var<T> keys_values,
                 std::size_t heads) {
  const std::size_t dh = queries.shape()[2] / heads;
  Var<T> q = split_heads(linear(p, prefix + "q/", queries), heads);
  Var<T> k = split_heads(linear(p, prefix + "k/", keys_values), heads);
  Var<T> v = split_heads(linear(p, prefix + "v/", keys_values), heads);
  Var<T> scores = nn::scale(nn::matmul(q, nn::transpose(k)), T(1) / std::sqrt(static_cast<T>(dh)));
  Var<T> mixed = nn::matmul(nn::softmax_lastdim(scores), v);
  return linear(p, prefix + "o/", merge_heads(mixed));
}

template <typename T>
Var<T> mlp(const Bound<T>& p, const std::string& prefix, Var<T> x) {
  return linear(p, prefix + "fc2/", nn::gelu(linear(p, prefix + "fc1/", x)));
}

template <typename T>
Var<T> embed_input(const Bound<T>& p, const EncoderConfig& cfg, const EncoderInput<T>& input) {
  check_modality(cfg, input.modality);
  nn::Tape<T>& tape = p.tape();
  const std::string embed = embedding_prefix(cfg, input.modality);
  const std::string pos = position_param(cfg, input.modality);
  if (input.modality == Modality::tokenized_text) {
    const std::size_t b = input.tokens.size();
    if (b == 0) throw ContractError("empty token batch");
    std::vector<std::size_t> flat;
    flat.reserve(b * sz(cfg.seq_len));
    for (const auto& seq : input.tokens) {
      if (seq.size() != sz(cfg.seq_len)) {
        throw ContractError("token sequence of length " + std::to_string(seq.size()) + ", expected " +
                            std::to_string(cfg.seq_len));
      }
      for (auto id : seq) {
        if (id < 0 || id >= cfg.vocab_size) throw ContractError("token id " + std::to_string(id) + " out of range");
        flat.push_back(static_cast<std::size_t>(id));
      }
    }
    Var<T> x = nn::gather_rows(p(embed + "table"), std::span<const std::size_t>(flat));
    return nn::reshape(x, {b, sz(cfg.seq_len), sz(cfg.width)}) + p(pos);
  }
  const auto& s = input.patches.shape();
  if (s.size() != 3 || s[1] != sz(cfg.num_patches()) || s[2] != sz(cfg.patch_dim()) || s[0] == 0) {
    throw ShapeError("patch input " + nn::shape_str(s) + " does not match [B, " + std::to_string(cfg.num_patches()) +
                     ", " + std::to_string(cfg.patch_dim()) + "]");
  }
  Var<T> patches = tape.constant(input.patches);
  return linear(p, embed, patches) + p(pos);
}

template <typename T>
Var<T> run_tower(const Bound<T>& p, const EncoderConfig& cfg, const EncoderInput<T>& input,
                 std::vector<Var<T>>* layers) {
  const std::string tower = tower_prefix(cfg, input.modality);
  Var<T> x = embed_input(p, cfg, input);
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string b = tower + "block" + std::to_string(i) + "/";
    Var<T> h = layer_norm(p, b + "ln1/", x);
    x = x + attention(p, b + "attn/", h, h, sz(cfg.heads));
    x = x + mlp(p, b + "mlp/", layer_norm(p, b + "ln2/", x));
    if (layers != nullptr) layers->push_back(x);
  }
  return layer_norm(p, tower + "final_ln/", x);
}

}  // namespace

template <typename T>
std::vector<Var<T>> encode_layers(const Bound<T>& p, const EncoderConfig& cfg, const EncoderInput<T>& input) {
  std::vector<Var<T>> layers;
  run_tower(p, cfg, input, &layers);
  return layers;
}

template <typename T>
Var<T> encode_pooled(const Bound<T>& p, const EncoderConfig& cfg, const EncoderInput<T>& input) {
  Var<T> x = run_tower<T>(p, cfg, input, nullptr);
  const std::string head = head_prefix(cfg, input.modality);
  const std::size_t b = x.shape()[0];
  Var<T> probe = nn::tile_leading(p(head + "probe"), b);
  Var<T> y = attention(p, head + "attn/", probe, x, sz(cfg.heads));
  y = y + mlp(p, head + "mlp/", layer_norm(p, head + "ln/", y));
  return nn::reshape(y, {b, sz(cfg.width)});
}

template <typename T>
Var<T> encode(const Bound<T>& p, const EncoderConfig& cfg, const EncoderInput<T>& input) {
  Var<T> pooled = encode_pooled(p, cfg, input);
  return nn::l2_normalize_lastdim(nn::matmul(pooled, p(head_prefix(cfg, input.modality) + "proj/kernel")));
}

template <typename T>
Tensor<T> embed(const EncoderParams<T>& model, const EncoderInput<T>& input) {
  nn::Tape<T> tape;
  Bound<T> p(tape, model.params, false);
  return encode(p, model.config, input).value();
}

template <typename T>
std::vector<Tensor<T>> layer_activations(const EncoderParams<T>& model, const EncoderInput<T>& input) {
  nn::Tape<T> tape;
  Bound<T> p(tape, model.params, false);
  std::vector<Tensor<T>> out;
  for (auto v : encode_layers(p, model.config, input)) out.push_back(v.value());
  return out;
}

template <typename T>
nn::TensorContainer to_container(const EncoderParams<T>& model, nn::DType dtype) {
  nn::TensorContainer c;
  c.metadata["kind"] = "encoder";
  c.metadata["config"] = model.config;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    c.add(model.params.names()[i], model.params.values()[i], dtype);
  }
  return c;
}

template <typename T>
EncoderParams<T> from_container(const nn::TensorContainer& container) {
  if (!container.metadata.contains("config")) throw DataError("checkpoint has no encoder config");
  EncoderParams<T> model{container.metadata.at("config").get<EncoderConfig>(), {}};
  for (const auto& spec : param_specs(model.config)) {
    const auto& e = container.at(spec.name);
    if (e.value.shape() != spec.shape) {
      throw DataError("checkpoint tensor '" + spec.name + "' has shape " + nn::shape_str(e.value.shape()) +
                      ", expected " + nn::shape_str(spec.shape));
    }
    model.params.add(spec.name, e.value.template cast<T>());
  }
  return model;
}

EncoderParams<float> resize_positions(const EncoderParams<float>& model, int image_px) {
  EncoderConfig cfg = model.config;
  cfg.image_px = image_px;
  if (image_px <= 0 || image_px % cfg.patch_px != 0) {
    throw ConfigError("image_px " + std::to_string(image_px) + " is not a multiple of patch_px");
  }
  cfg.validate();
  const int from = model.config.grid(), to = cfg.grid();
  EncoderParams<float> out{cfg, {}};
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& name = model.params.names()[i];
    const auto& value = model.params.values()[i];
    const bool grid_pos = name.ends_with("pos") && !name.ends_with("token/pos");
    if (!grid_pos || from == to) {
      out.params.add(name, value);
      continue;
    }
    const int d = static_cast<int>(value.dim(1));
    RenderedImage grid(from, from, d);
    std::copy(value.data().begin(), value.data().end(), grid.pixels.begin());
    const auto resized = resize_bilinear(grid, to, to);
    out.params.add(name, nn::Tensor<float>({sz(cfg.num_patches()), static_cast<std::size_t>(d)}, resized.pixels));
  }
  return out;
}

#define CLIPPO_INSTANTIATE_ENCODER(T)                                                                   \
  template EncoderParams<T> init_params<T>(const EncoderConfig&, std::uint64_t);                        \
  template Tensor<T> patchify<T>(const RenderedImage&, const EncoderConfig&);                           \
  template Tensor<T> patchify_batch<T>(std::span<const RenderedImage>, const EncoderConfig&);           \
  template std::vector<Var<T>> encode_layers<T>(const Bound<T>&, const EncoderConfig&,                  \
                                                const EncoderInput<T>&);                                \
  template Var<T> encode_pooled<T>(const Bound<T>&, const EncoderConfig&, const EncoderInput<T>&);      \
  template Var<T> encode<T>(const Bound<T>&, const EncoderConfig&, const EncoderInput<T>&);             \
  template Tensor<T> embed<T>(const EncoderParams<T>&, const EncoderInput<T>&);                         \
  template std::vector<Tensor<T>> layer_activations<T>(const EncoderParams<T>&, const EncoderInput<T>&); \
  template nn::TensorContainer to_container<T>(const EncoderParams<T>&, nn::DType);                     \
  template EncoderParams<T> from_container<T>(const nn::TensorContainer&);

CLIPPO_INSTANTIATE_ENCODER(float)
CLIPPO_INSTANTIATE_ENCODER(double)

#undef CLIPPO_INSTANTIATE_ENCODER

}  // namespace clippo
