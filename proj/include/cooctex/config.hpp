#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cooctex {

/// Flat `key = value` settings with `#` comments. Keys are checked against
/// an allow-list so typos fail loudly instead of being ignored.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  /// Applies `key=value` overrides on top of the current values.
  void apply_overrides(const std::vector<std::string>& overrides);

  /// Throws InvalidArgument naming the first key not in `allowed`.
  void reject_unknown(const std::set<std::string>& allowed) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Sorted `key = value` lines.
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cooctex
