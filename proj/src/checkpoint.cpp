#include "clippo/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "clippo/errors.hpp"

namespace clippo::nn {

std::string_view to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(std::string_view name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw ConfigError("unknown dtype '" + std::string(name) + "'");
}

const ContainerEntry* TensorContainer::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const ContainerEntry& TensorContainer::at(std::string_view name) const {
  const auto* e = find(name);
  if (e == nullptr) throw DataError("container has no tensor named '" + std::string(name) + "'");
  return *e;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void append_le(std::string& buf, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  buf.append(bytes, sizeof(U));
}

template <typename U>
U read_le(const char* p) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U v;
  std::memcpy(&v, bytes, sizeof(U));
  return v;
}

std::filesystem::path buffer_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void write_container(const TensorContainer& container, const std::filesystem::path& manifest) {
  std::string buffer;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : container.entries) {
    const std::size_t offset = buffer.size();
    for (double v : e.value.data()) {
      if (e.dtype == DType::f32) {
        append_le(buffer, static_cast<float>(v));
      } else {
        append_le(buffer, v);
      }
    }
    tensors.push_back({{"name", e.name},
                       {"shape", e.value.shape()},
                       {"dtype", to_string(e.dtype)},
                       {"offset", offset},
                       {"nbytes", buffer.size() - offset}});
  }
  const auto bin = buffer_path(manifest);
  nlohmann::json doc = {{"format", "clippo-tensors"},
                        {"version", 1},
                        {"byte_order", "little"},
                        {"buffer", bin.filename().string()},
                        {"tensors", tensors},
                        {"metadata", container.metadata}};
  {
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw IoError("cannot write " + bin.string());
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (!out) throw IoError("failed writing " + bin.string());
  }
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + manifest.string());
}

TensorContainer read_container(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + manifest.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "clippo-tensors") throw IoError("not a tensor container: " + manifest.string());

  const auto bin = manifest.parent_path() / doc.at("buffer").get<std::string>();
  std::ifstream bin_in(bin, std::ios::binary);
  if (!bin_in) throw IoError("cannot open " + bin.string());
  const std::string buffer((std::istreambuf_iterator<char>(bin_in)), std::istreambuf_iterator<char>());

  TensorContainer c;
  c.metadata = doc.value("metadata", nlohmann::json::object());
  for (const auto& t : doc.at("tensors")) {
    ContainerEntry e;
    e.name = t.at("name").get<std::string>();
    e.dtype = parse_dtype(t.at("dtype").get<std::string>());
    const auto shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::size_t>();
    const std::size_t width = e.dtype == DType::f32 ? 4 : 8;
    const std::size_t n = numel(shape);
    if (offset + n * width > buffer.size()) throw IoError("tensor '" + e.name + "' overruns " + bin.string());
    Tensor<double> value(shape);
    for (std::size_t i = 0; i < n; ++i) {
      const char* p = buffer.data() + offset + i * width;
      value[i] = e.dtype == DType::f32 ? static_cast<double>(read_le<float>(p)) : read_le<double>(p);
    }
    e.value = std::move(value);
    c.entries.push_back(std::move(e));
  }
  return c;
}

}  // namespace clippo::nn
