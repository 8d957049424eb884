#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clippo/checkpoint.hpp"
#include "clippo/image.hpp"
#include "clippo/params.hpp"

namespace clippo {

enum class Variant {
  clippo,
  one_tower_tokenized,
  two_tower,
  clippo_untied_embed,
  clippo_untied_head,
  clippo_untied_both,
};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

enum class Modality { image, rendered_text, tokenized_text };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view name);

struct EncoderConfig {
  int patch_px = 8;
  int image_px = 64;
  int channels = 3;
  int depth = 4;
  int width = 64;
  int heads = 4;
  int mlp_ratio = 4;
  int rep_dim = 64;
  Variant variant = Variant::clippo;
  int vocab_size = 0;  // tokenized variants only
  int seq_len = 0;     // tokenized variants only

  // Throws ConfigError.
  void validate() const;

  int grid() const { return image_px / patch_px; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_px * patch_px * channels; }
  bool tokenized() const { return variant == Variant::one_tower_tokenized || variant == Variant::two_tower; }

  // Desk-scale default: structurally a B/16 at CPU size.
  static EncoderConfig desk(Variant v = Variant::clippo);
  // ViT-B/16 at 224 px with a 768-d representation; tokenized variants use
  // vocab 32000 and sequence length 196.
  static EncoderConfig b16(Variant v = Variant::clippo);

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

struct ParamSpec {
  std::string name;
  nn::Shape shape;
};

// Every parameter of the configured variant, in a fixed order.
std::vector<ParamSpec> param_specs(const EncoderConfig& cfg);
std::size_t parameter_count(const EncoderConfig& cfg);

template <typename T>
struct EncoderParams {
  EncoderConfig config;
  nn::ParamSet<T> params;
};

// Truncated normal (std 0.02) weights, zero biases, unit layernorm scales and
// the log-temperature at log(10). Each tensor draws from its own substream of
// `seed`, so the result is bit-identical per seed.
template <typename T>
EncoderParams<T> init_params(const EncoderConfig& cfg, std::uint64_t seed);

inline constexpr std::string_view kLogTemperature = "temperature/log";

// [N, patch_dim]: non-overlapping patches in raster order, each flattened
// row-major with channels last.
template <typename T>
nn::Tensor<T> patchify(const RenderedImage& image, const EncoderConfig& cfg);

// [B, N, patch_dim].
template <typename T>
nn::Tensor<T> patchify_batch(std::span<const RenderedImage> images, const EncoderConfig& cfg);

std::vector<std::int32_t> pad_tokens(std::span<const std::int32_t> ids, int seq_len, std::int32_t pad_id);

// Model input for one forward pass: patches [B, N, patch_dim] for image and
// rendered-text modalities, token ids (each exactly seq_len) for tokenized
// text.
template <typename T>
struct EncoderInput {
  Modality modality = Modality::image;
  nn::Tensor<T> patches;
  std::vector<std::vector<std::int32_t>> tokens;

  std::size_t batch() const {
    return modality == Modality::tokenized_text ? tokens.size() : (patches.rank() == 3 ? patches.dim(0) : 0);
  }
};

template <typename T>
EncoderInput<T> image_input(nn::Tensor<T> patches, Modality modality = Modality::image) {
  return {modality, std::move(patches), {}};
}

template <typename T>
EncoderInput<T> token_input(std::vector<std::vector<std::int32_t>> tokens) {
  return {Modality::tokenized_text, nn::Tensor<T>(), std::move(tokens)};
}

// Token outputs after every transformer block, each [B, tokens, width].
template <typename T>
std::vector<nn::Var<T>> encode_layers(const nn::BoundParams<T>& p, const EncoderConfig& cfg,
                                      const EncoderInput<T>& input);

// MAP-head output before the projection, [B, width].
template <typename T>
nn::Var<T> encode_pooled(const nn::BoundParams<T>& p, const EncoderConfig& cfg, const EncoderInput<T>& input);

// L2-normalized representation, [B, rep_dim]. Throws ContractError when the
// modality does not fit the variant.
template <typename T>
nn::Var<T> encode(const nn::BoundParams<T>& p, const EncoderConfig& cfg, const EncoderInput<T>& input);

// Tape-free conveniences for inference.
template <typename T>
nn::Tensor<T> embed(const EncoderParams<T>& model, const EncoderInput<T>& input);

template <typename T>
std::vector<nn::Tensor<T>> layer_activations(const EncoderParams<T>& model, const EncoderInput<T>& input);

// Prefix of the parameters that produce the representation for a modality's
// head (e.g. "head/"), and of its patch/token embedding.
std::string head_prefix(const EncoderConfig& cfg, Modality m);
std::string embedding_prefix(const EncoderConfig& cfg, Modality m);
// The positional embedding used for a modality.
std::string position_param(const EncoderConfig& cfg, Modality m);

// Same model at a new input resolution: every patch-grid positional embedding
// is resized bilinearly over the grid. Throws ConfigError when image_px is not
// a positive multiple of patch_px.
EncoderParams<float> resize_positions(const EncoderParams<float>& model, int image_px);

template <typename T>
nn::TensorContainer to_container(const EncoderParams<T>& model, nn::DType dtype = nn::dtype_of<T>());

template <typename T>
EncoderParams<T> from_container(const nn::TensorContainer& container);

}  // namespace clippo
