#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace clippo {

// Flat key/value configuration. Files use a TOML subset: `key = value` lines,
// `#` comments, optional double quotes around strings and `[section]` headers
// that prefix the following keys with "section.".
class RunConfig {
 public:
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool contains(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  // Throws ConfigError for a missing key or a value of the wrong type.
  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, std::string fallback) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // Later layers win.
  void merge(const RunConfig& over);

  // FNV-1a over the sorted "key=value" lines, as 16 hex digits.
  std::string digest() const;
  std::string to_toml() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  std::map<std::string, std::string> values_;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
// Writes `resolved_config.toml` (with the digest in a comment) into dir.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace clippo
