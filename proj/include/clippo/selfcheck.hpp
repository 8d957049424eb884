#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clippo/encoder.hpp"
#include "clippo/gradcheck.hpp"
#include "clippo/renderer.hpp"

namespace clippo {

struct GoldenCase {
  std::string name;
  std::string text;
  std::optional<std::string> second;  // sentence pair when set
  RenderConfig cfg;
  std::uint64_t digest = 0;
};

// Fixed renders whose pixel digests were derived from an independent decoder
// and layout simulation over the bundled font.
const std::vector<GoldenCase>& golden_render_cases();
RenderedImage render_golden(const GoldenCase& c, const GlyphTable& font);

// Contrastive loss of a small encoder over fixed random inputs: `batch` image
// rows against `batch` rendered-text (or token) rows. Leaves follow
// params.params order.
nn::Program encoder_loss_program(const EncoderParams<double>& params, std::size_t batch, std::uint64_t seed);

// Tiny configuration for gradient checks: 16 px images, patch 8, depth 1.
EncoderConfig tiny_config(Variant v);

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckLine> run_selfcheck(const GlyphTable& font);

}  // namespace clippo
