#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dctx {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Flat dotted-key configuration ("model.classifier = bclstm"). '#' starts a
/// comment; blank lines ignored. Reads are tracked so callers can reject
/// unknown keys after consuming everything they understand.
class FlatConfig {
 public:
  static FlatConfig parse_file(const std::string& path);
  static FlatConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt);
  std::string require_str(const std::string& key);
  int get_int(const std::string& key, int dflt);
  double get_double(const std::string& key, double dflt);
  bool get_bool(const std::string& key, bool dflt);
  uint64_t get_u64(const std::string& key, uint64_t dflt);

  /// Keys sharing a prefix ("probe.test.") grouped by the segment after it.
  std::vector<std::string> group_indices(const std::string& prefix) const;

  std::vector<std::string> unconsumed() const;
  void reject_unconsumed() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
  mutable std::map<std::string, bool> consumed_;
};

}  // namespace dctx
