#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fbttr/data/config.hpp"
#include "fbttr/errors.hpp"

namespace fbttr::data {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool to_double(const std::string& s, double& out) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "inf" || lower == "+inf") {
    out = INFINITY;
    return true;
  }
  const char* b = s.data();
  if (!s.empty() && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, s.data() + s.size(), out);
  return !s.empty() && ec == std::errc() && p == s.data() + s.size() && !std::isnan(out);
}

bool to_u64(const std::string& s, std::uint64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& source) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected key=value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path);
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::bad(const std::string& key, const std::string& expected) const {
  throw ConfigError("key '" + key + "': expected " + expected + ", got '" + values_.at(key) + "'");
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  double v = 0.0;
  if (!to_double(values_.at(key), v)) bad(key, "a number");
  return v;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  if (!has(key)) return fallback;
  std::uint64_t v = 0;
  if (!to_u64(values_.at(key), v)) bad(key, "a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  std::uint64_t v = 0;
  if (!to_u64(values_.at(key), v)) bad(key, "an unsigned 64-bit integer");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = values_.at(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, "true or false");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  std::stringstream in(values_.at(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Extents Config::get_extents(const std::string& key) const {
  Extents out;
  if (!has(key)) return out;
  std::string v = values_.at(key);
  std::replace(v.begin(), v.end(), 'x', ',');
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::uint64_t e = 0;
    if (!to_u64(trim(item), e) || e == 0) bad(key, "positive extents such as 8x10");
    out.push_back(static_cast<std::size_t>(e));
  }
  if (out.empty()) bad(key, "positive extents such as 8x10");
  return out;
}

std::vector<double> Config::get_range(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  const std::string v = values_.at(key);
  std::vector<double> out;
  if (v.find(':') != std::string::npos) {
    std::stringstream in(v);
    std::string part;
    std::vector<double> abc;
    while (std::getline(in, part, ':')) {
      double d = 0.0;
      if (!to_double(trim(part), d) || !std::isfinite(d)) bad(key, "start:stop:step");
      abc.push_back(d);
    }
    if (abc.size() != 3 || !(abc[2] > 0.0) || abc[1] < abc[0]) bad(key, "start:stop:step with step > 0");
    const auto count = static_cast<std::size_t>(std::floor((abc[1] - abc[0]) / abc[2] + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) out.push_back(abc[0] + static_cast<double>(i) * abc[2]);
    return out;
  }
  for (const auto& item : get_list(key)) {
    double d = 0.0;
    if (!to_double(item, d)) bad(key, "a comma separated list of numbers");
    out.push_back(d);
  }
  if (out.empty()) bad(key, "at least one value");
  return out;
}

void Config::check_keys(const std::set<std::string>& known) const {
  for (const auto& [k, v] : values_) {
    if (!known.contains(k)) throw ConfigError("unknown config key '" + k + "'");
  }
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void Config::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << dump();
}

}  // namespace fbttr::data
