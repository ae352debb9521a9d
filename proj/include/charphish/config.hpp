#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace charphish {

// Flat dotted-key view over an INI-style config file ([section] headers,
// key = value lines, # or ; comments) merged with --section.key flag
// overrides. The resolved map is hashed into every output artifact.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig load_file(const std::string& path);

  void set(const std::string& dotted_key, const std::string& value);
  bool has(const std::string& dotted_key) const;

  std::string get(const std::string& dotted_key, const std::string& fallback) const;
  long long get_int(const std::string& dotted_key, long long fallback) const;
  double get_double(const std::string& dotted_key, double fallback) const;
  bool get_bool(const std::string& dotted_key, bool fallback) const;
  uint64_t get_seed(const std::string& dotted_key, uint64_t fallback) const;

  // SHA-256 over the sorted key=value lines.
  std::string digest() const;
  nlohmann::json to_json() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace charphish
