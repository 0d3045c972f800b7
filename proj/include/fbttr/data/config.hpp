#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fbttr/tensor.hpp"

namespace fbttr::data {

// Flat key=value settings. '#' starts a comment; blank lines are ignored.
// Later assignments (and set()) override earlier ones.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "config");
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  // "key=value"
  void set_assignment(const std::string& assignment);
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated
  Extents get_extents(const std::string& key) const;                // "8x10" or "8,10"
  // "a:b:step" or "v1,v2,..."
  std::vector<double> get_range(const std::string& key, const std::vector<double>& fallback) const;

  // Throws on any key outside `known`.
  void check_keys(const std::set<std::string>& known) const;

  std::string dump() const;
  void write(const std::string& path) const;

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& expected) const;
  std::map<std::string, std::string> values_;
};

}  // namespace fbttr::data
