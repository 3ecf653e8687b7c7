#include "dctx/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace dctx {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

FlatConfig FlatConfig::parse_string(const std::string& text) {
  FlatConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    if (cfg.kv_.count(key))
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": duplicate key " + key);
    cfg.kv_[key] = value;
  }
  return cfg;
}

FlatConfig FlatConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

bool FlatConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string FlatConfig::get_str(const std::string& key,
                                const std::string& dflt) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  consumed_[key] = true;
  return it->second;
}

std::string FlatConfig::require_str(const std::string& key) {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing required key: " + key);
  consumed_[key] = true;
  return it->second;
}

int FlatConfig::get_int(const std::string& key, int dflt) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  consumed_[key] = true;
  try {
    return std::stoi(it->second);
  } catch (...) {
    throw ConfigError("key " + key + ": not an integer: " + it->second);
  }
}

double FlatConfig::get_double(const std::string& key, double dflt) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  consumed_[key] = true;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw ConfigError("key " + key + ": not a number: " + it->second);
  }
}

bool FlatConfig::get_bool(const std::string& key, bool dflt) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  consumed_[key] = true;
  if (it->second == "true" || it->second == "1" || it->second == "yes")
    return true;
  if (it->second == "false" || it->second == "0" || it->second == "no")
    return false;
  throw ConfigError("key " + key + ": not a boolean: " + it->second);
}

uint64_t FlatConfig::get_u64(const std::string& key, uint64_t dflt) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  consumed_[key] = true;
  try {
    return std::stoull(it->second);
  } catch (...) {
    throw ConfigError("key " + key + ": not an integer: " + it->second);
  }
}

std::vector<std::string> FlatConfig::group_indices(
    const std::string& prefix) const {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (const auto& [k, v] : kv_) {
    if (k.rfind(prefix, 0) != 0) continue;
    std::string rest = k.substr(prefix.size());
    std::string idx = rest.substr(0, rest.find('.'));
    if (seen.insert(idx).second) out.push_back(idx);
  }
  std::sort(out.begin(), out.end(), [](const std::string& a,
                                       const std::string& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return out;
}

std::vector<std::string> FlatConfig::unconsumed() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv_) {
    auto it = consumed_.find(k);
    if (it == consumed_.end() || !it->second) out.push_back(k);
  }
  return out;
}

void FlatConfig::reject_unconsumed() const {
  auto leftover = unconsumed();
  if (leftover.empty()) return;
  std::string msg = "unknown config key(s):";
  for (const auto& k : leftover) msg += " " + k;
  throw ConfigError(msg);
}

}  // namespace dctx
