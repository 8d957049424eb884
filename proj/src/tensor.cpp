#include "clippo/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>

#include "clippo/errors.hpp"

namespace clippo::nn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
void gemm_accumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::Map<Mat>(c, mi, ni).noalias() += Eigen::Map<const Mat>(a, mi, ki) * Eigen::Map<const Mat>(b, ki, ni);
}

template <typename T>
void gemm_accumulate_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::Map<Mat>(c, mi, ni).noalias() +=
      Eigen::Map<const Mat>(a, mi, ki) * Eigen::Map<const Mat>(b, ni, ki).transpose();
}

template <typename T>
void gemm_accumulate_at(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::Map<Mat>(c, mi, ni).noalias() +=
      Eigen::Map<const Mat>(a, ki, mi).transpose() * Eigen::Map<const Mat>(b, ki, ni);
}

template <typename T>
void transpose_block(const T* src, T* dst, std::size_t rows, std::size_t cols) {
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t r1 = std::min(rows, r0 + tile);
      const std::size_t c1 = std::min(cols, c0 + tile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void gemm_accumulate<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_accumulate<double>(const double*, const double*, double*, std::size_t, std::size_t,
                                      std::size_t);
template void gemm_accumulate_bt<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_accumulate_bt<double>(const double*, const double*, double*, std::size_t, std::size_t,
                                         std::size_t);
template void gemm_accumulate_at<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_accumulate_at<double>(const double*, const double*, double*, std::size_t, std::size_t,
                                         std::size_t);
template void transpose_block<float>(const float*, float*, std::size_t, std::size_t);
template void transpose_block<double>(const double*, double*, std::size_t, std::size_t);

}  // namespace clippo::nn
