#pragma once

#include <functional>
#include <vector>

#include "clippo/autograd.hpp"

namespace clippo::nn {

// A deterministic scalar-valued program of trainable leaves.
using Program = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::vector<double> per_param;
};

std::vector<Tensor<double>> reverse_gradients(const Program& f, const std::vector<Tensor<double>>& params);

std::vector<Tensor<double>> central_differences(const Program& f, const std::vector<Tensor<double>>& params,
                                                double eps);

// Per parameter tensor: |g_rev - g_fd|_2 / max(|g_rev|_2 + |g_fd|_2, 1e-6).
GradCheckReport check_gradients(const Program& f, const std::vector<Tensor<double>>& params, double eps = 1e-5);

}  // namespace clippo::nn
