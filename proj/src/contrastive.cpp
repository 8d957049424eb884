#include "clippo/contrastive.hpp"

#include <cmath>
#include <numeric>

#include "clippo/errors.hpp"

namespace clippo {

namespace {

template <typename T>
void check_pair(const nn::Tensor<T>& left, const nn::Tensor<T>& right) {
  if (left.rank() != 2 || right.rank() != 2 || left.dim(1) != right.dim(1)) {
    throw ShapeError("contrastive loss needs [N, D] inputs, got " + nn::shape_str(left.shape()) + " and " +
                     nn::shape_str(right.shape()));
  }
  if (left.dim(0) != right.dim(0)) {
    throw ContractError("contrastive loss over " + std::to_string(left.dim(0)) + " left and " +
                        std::to_string(right.dim(0)) + " right rows");
  }
  if (left.dim(0) == 0) throw ContractError("contrastive loss over an empty batch");
}

}  // namespace

template <typename T>
ContrastiveOutput<T> contrastive_loss(nn::Var<T> left, nn::Var<T> right, nn::Var<T> log_temperature) {
  check_pair(left.value(), right.value());
  const std::size_t n = left.value().dim(0);
  std::vector<std::size_t> diagonal(n);
  std::iota(diagonal.begin(), diagonal.end(), std::size_t{0});

  nn::Var<T> t = nn::exp(log_temperature);
  nn::Var<T> logits = nn::matmul(left, nn::transpose(right)) * t;
  nn::Var<T> rows = nn::cross_entropy_rows(logits, std::span<const std::size_t>(diagonal));
  nn::Var<T> cols = nn::cross_entropy_rows(nn::transpose(logits), std::span<const std::size_t>(diagonal));
  return {nn::scale(rows + cols, T(0.5)), logits, t.value().item()};
}

template <typename T>
T contrastive_loss_value(const nn::Tensor<T>& left, const nn::Tensor<T>& right, T temperature) {
  nn::Tape<T> tape;
  auto out = contrastive_loss(tape.constant(left), tape.constant(right),
                              tape.constant(nn::Tensor<T>::scalar(std::log(temperature))));
  return out.loss.value().item();
}

template ContrastiveOutput<float> contrastive_loss(nn::Var<float>, nn::Var<float>, nn::Var<float>);
template ContrastiveOutput<double> contrastive_loss(nn::Var<double>, nn::Var<double>, nn::Var<double>);
template float contrastive_loss_value(const nn::Tensor<float>&, const nn::Tensor<float>&, float);
template double contrastive_loss_value(const nn::Tensor<double>&, const nn::Tensor<double>&, double);

}  // namespace clippo
