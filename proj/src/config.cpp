#include "clippo/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "clippo/errors.hpp"
#include "clippo/rng.hpp"

namespace clippo {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

std::string unquote(const std::string& v, std::size_t line_no) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        const char n = v[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += v[i];
      }
    }
    return out;
  }
  if (!v.empty() && v.front() == '"') throw ParseError(line_no, "unterminated string");
  return v;
}

}  // namespace

std::string RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::string RunConfig::get_or(const std::string& key, std::string fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const auto r = std::stoll(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
}

void RunConfig::merge(const RunConfig& over) {
  for (const auto& [k, v] : over.values_) values_[k] = v;
}

std::string RunConfig::digest() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& [k, v] : values_) {
    h = fnv1a64(k, h);
    h = fnv1a64("=", h);
    h = fnv1a64(v, h);
    h = fnv1a64("\n", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::to_toml() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) {
    out << k << " = \"";
    for (char c : v) {
      if (c == '"' || c == '\\') out << '\\';
      if (c == '\n') {
        out << "\\n";
        continue;
      }
      out << c;
    }
    out << "\"\n";
  }
  return out.str();
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError(line_no, "unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (!valid_key(section)) throw ParseError(line_no, "bad section name '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (!valid_key(key)) throw ParseError(line_no, "bad key '" + key + "'");
    if (!value.empty() && value.front() != '"') {
      const auto hash = value.find(" #");
      if (hash != std::string::npos) value = trim(std::string_view(value).substr(0, hash));
    }
    cfg.set(section.empty() ? key : section + "." + key, unquote(value, line_no));
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in);
}

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "resolved_config.toml";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# digest " << cfg.digest() << '\n' << cfg.to_toml();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace clippo
