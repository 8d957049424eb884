#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clippo/tensor.hpp"

namespace clippo::nn {

enum class DType { f32, f64 };

std::string_view to_string(DType dtype);
DType parse_dtype(std::string_view name);

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::f32 : DType::f64;
}

struct ContainerEntry {
  std::string name;
  DType dtype = DType::f32;
  // Values are held in double; f32 entries round-trip exactly.
  Tensor<double> value;
};

// Named-tensor container: a JSON manifest (name, shape, dtype, byte offset)
// plus a raw little-endian buffer next to it (`<stem>.bin`).
struct TensorContainer {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<ContainerEntry> entries;

  const ContainerEntry* find(std::string_view name) const;
  const ContainerEntry& at(std::string_view name) const;

  template <typename T>
  void add(std::string name, const Tensor<T>& t, DType dtype = dtype_of<T>()) {
    entries.push_back({std::move(name), dtype, t.template cast<double>()});
  }
};

// `manifest` is the JSON path; the buffer goes to manifest with extension .bin.
void write_container(const TensorContainer& container, const std::filesystem::path& manifest);
TensorContainer read_container(const std::filesystem::path& manifest);

}  // namespace clippo::nn
