#pragma once

#include <vector>

#include "clippo/autograd.hpp"

namespace clippo {

template <typename T>
struct ContrastiveOutput {
  nn::Var<T> loss;
  nn::Var<T> logits;  // [N, N], logits[i][j] = t * <left_i, right_j>
  T temperature;
};

// Symmetric cross-entropy over the full batch similarity matrix with the
// matching pairs on the diagonal. The temperature enters as its logarithm.
// Throws ContractError when the row counts differ.
template <typename T>
ContrastiveOutput<T> contrastive_loss(nn::Var<T> left, nn::Var<T> right, nn::Var<T> log_temperature);

// Same value without a tape.
template <typename T>
T contrastive_loss_value(const nn::Tensor<T>& left, const nn::Tensor<T>& right, T temperature);

}  // namespace clippo
