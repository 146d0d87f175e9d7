#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace invreg {

/// Flat "key = value" configuration with '#' comments.
///
/// Every key must be declared by the consumer before use; parsing against a
/// schema rejects anything else with ConfigError.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text, const std::set<std::string>& allowed);
  static Config load(const std::string& path, const std::set<std::string>& allowed);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  int get(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_words(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Path value resolved against the directory of the config file.
  std::string path(const std::string& key, const std::string& fallback = "") const;

  /// FNV-1a over the sorted "key=value" lines.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string base_dir_;
};

}  // namespace invreg
