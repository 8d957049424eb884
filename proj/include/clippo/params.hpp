#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clippo/autograd.hpp"
#include "clippo/errors.hpp"

namespace clippo::nn {

// Named tensors in insertion order.
template <typename T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
  }

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

  Tensor<T>& operator[](std::string_view name) { return values_[position(name)]; }
  const Tensor<T>& operator[](std::string_view name) const { return values_[position(name)]; }

  std::size_t position(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Tensor<T>>& values() noexcept { return values_; }
  const std::vector<Tensor<T>>& values() const noexcept { return values_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters placed on a tape as leaves, looked up by name.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamSet<T>& params, bool trainable = true) : tape_(&tape), params_(&params) {
    vars_.reserve(params.size());
    for (const auto& v : params.values()) vars_.push_back(tape.leaf(v, trainable));
  }

  // Binds existing leaves, one per parameter in order.
  BoundParams(Tape<T>& tape, const ParamSet<T>& params, std::vector<Var<T>> vars)
      : tape_(&tape), params_(&params), vars_(std::move(vars)) {
    if (vars_.size() != params.size()) throw ContractError("leaf count does not match the parameter set");
  }

  Var<T> operator()(std::string_view name) const { return vars_[params_->position(name)]; }
  const std::vector<Var<T>>& vars() const noexcept { return vars_; }
  const ParamSet<T>& params() const noexcept { return *params_; }
  Tape<T>& tape() const noexcept { return *tape_; }

 private:
  Tape<T>* tape_;
  const ParamSet<T>* params_;
  std::vector<Var<T>> vars_;
};

}  // namespace clippo::nn
