#include "tfe/config.hpp"

#include <cstdlib>
#include <fstream>

namespace tfe {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& is) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(lineno) +
                        ": expected key=value");
    const std::string key = trim(text.substr(0, eq));
    if (key.empty())
      throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    cfg.set(key, trim(text.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open config file " + path);
  return parse(is);
}

bool KeyValueConfig::has(const std::string& key) const {
  return index_.count(key) != 0;
}

void KeyValueConfig::set(const std::string& key, std::string value) {
  auto it = index_.find(key);
  if (it != index_.end()) {
    entries_[it->second].second = std::move(value);
  } else {
    index_.emplace(key, entries_.size());
    entries_.emplace_back(key, std::move(value));
  }
}

void KeyValueConfig::set_line(const std::string& line) {
  const std::size_t eq = line.find('=');
  if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
    throw ValidationError("override must look like key=value, got '" + line + "'");
  set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end())
    throw ValidationError("missing required config key '" + key + "'");
  return entries_[it->second].second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto it = index_.find(key);
  return it == index_.end() ? fallback : entries_[it->second].second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  char* end = nullptr;
  const double parsed = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ValidationError("config key '" + key + "' is not a number: '" + v + "'");
  return parsed;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || v.front() == '-')
    throw ValidationError("config key '" + key +
                          "' is not an unsigned integer: '" + v + "'");
  return parsed;
}

std::size_t KeyValueConfig::get_size(const std::string& key,
                                     std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config key '" + key + "' is not a boolean: '" + v + "'");
}

}  // namespace tfe
