#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "clippo/image.hpp"
#include "clippo/tensor.hpp"

namespace clippo {

// Euclidean distance between the two row means. Throws ContractError when
// either set is empty and ShapeError when the widths differ.
double modality_gap(const nn::Tensor<double>& image_embs, const nn::Tensor<double>& text_embs);

struct PcaResult {
  nn::Tensor<double> components;   // [k, d], one principal direction per row
  nn::Tensor<double> projections;  // [N, k]
  std::vector<double> variances;   // eigenvalues of the covariance, descending
  std::vector<double> explained_ratio;
  double total_variance = 0.0;
  std::vector<std::string> warnings;
};

// Mean-centres the rows and projects onto the top principal directions of the
// covariance (divided by N). Each direction is signed so that its largest
// magnitude coordinate is positive. Only components with non-negligible
// variance are returned; dropping any adds a warning.
PcaResult pca_project(const nn::Tensor<double>& data, std::size_t components = 2);

// Stacks two row sets (image rows first).
nn::Tensor<double> stack_rows(const nn::Tensor<double>& a, const nn::Tensor<double>& b);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
};

// Distances between paired rows, binned uniformly over [0, 2]; values on the
// right edge go to the last bin.
Histogram pairwise_distance_hist(const nn::Tensor<double>& image_embs, const nn::Tensor<double>& text_embs,
                                 std::size_t bins = 50);
std::vector<double> paired_distances(const nn::Tensor<double>& a, const nn::Tensor<double>& b);

struct CkaResult {
  double value = 0.0;
  bool degenerate = false;  // zero variance on one side
};

// Linear CKA of column-centred activations.
CkaResult linear_cka(const nn::Tensor<double>& x, const nn::Tensor<double>& y);

struct PatchPcaResult {
  std::vector<double> spectrum;          // all eigenvalues, descending
  std::vector<RenderedImage> component_images;  // patch_px x patch_px x channels, scaled to [-1, 1]
  std::vector<std::string> warnings;
};

// PCA over the kernel's columns (each a patch_px^2 * channels vector).
PatchPcaResult patch_kernel_pca(const nn::Tensor<double>& kernel, int patch_px, int channels,
                                std::size_t components = 30);

// Component images side by side in rows of `per_row`, with a 1-px gap.
RenderedImage tile_images(const std::vector<RenderedImage>& images, int per_row);

}  // namespace clippo
