#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace clippo::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor. A rank-0 shape holds one element.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2-D access, row-major.
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

  T item() const;

  // Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{0};
  std::vector<T> data_;
};

// C[M,N] += A[M,K] * B[K,N], all row-major and contiguous.
template <typename T>
void gemm_accumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// C[M,N] += A[M,K] * B[N,K]^T.
template <typename T>
void gemm_accumulate_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// C[M,N] += A[K,M]^T * B[K,N].
template <typename T>
void gemm_accumulate_at(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// Materialized transpose of a row-major [rows, cols] block.
template <typename T>
void transpose_block(const T* src, T* dst, std::size_t rows, std::size_t cols);

}  // namespace clippo::nn
