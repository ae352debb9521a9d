#include "charphish/config.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include "charphish/hash.hpp"

namespace charphish {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  RunConfig cfg;
  std::string line, section;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments, but not inside values with '#'? keep simple: # and ;
    // start a comment only at start or after whitespace
    for (size_t i = 0; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') &&
          (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
        line.resize(i);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty key");
    }
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
  return cfg;
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  values_[dotted_key] = value;
}

bool RunConfig::has(const std::string& dotted_key) const {
  return values_.count(dotted_key) > 0;
}

std::string RunConfig::get(const std::string& dotted_key, const std::string& fallback) const {
  auto it = values_.find(dotted_key);
  return it == values_.end() ? fallback : it->second;
}

long long RunConfig::get_int(const std::string& dotted_key, long long fallback) const {
  auto it = values_.find(dotted_key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + dotted_key + " is not an integer: " + it->second);
  }
}

double RunConfig::get_double(const std::string& dotted_key, double fallback) const {
  auto it = values_.find(dotted_key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + dotted_key + " is not a number: " + it->second);
  }
}

bool RunConfig::get_bool(const std::string& dotted_key, bool fallback) const {
  auto it = values_.find(dotted_key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error("config key " + dotted_key + " is not a boolean: " + v);
}

uint64_t RunConfig::get_seed(const std::string& dotted_key, uint64_t fallback) const {
  auto it = values_.find(dotted_key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + dotted_key + " is not a seed: " + it->second);
  }
}

std::string RunConfig::digest() const {
  std::string canon;
  for (const auto& [k, v] : values_) {
    canon += k;
    canon.push_back('=');
    canon += v;
    canon.push_back('\n');
  }
  return sha256_hex(canon);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

}  // namespace charphish
