#pragma once

// Flat `key = value` configuration files.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tomo/errors.hpp"
#include "tomo/io.hpp"

namespace tomo {

/// Parsed key/value pairs. '#' starts a comment; blank lines are ignored;
/// a repeated key is an error. Getters mark keys as used so that
/// `reject_unused` can report keys nobody asked for.
class Config {
 public:
  Config() = default;

  static Config parse(std::istream& in, const std::string& source = "config") {
    Config c;
    c.source_ = source;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = io::trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ParseError(source + ":" + std::to_string(lineno) + ": expected `key = value`");
      const std::string key = io::trim(t.substr(0, eq));
      if (key.empty()) throw ParseError(source + ":" + std::to_string(lineno) + ": empty key");
      if (c.values_.count(key)) throw ParseError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      c.values_[key] = io::trim(t.substr(eq + 1));
      c.order_.push_back(key);
    }
    return c;
  }

  static Config parse_string(const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    return parse(in, source);
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config '" + path + "'");
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : io::parse_double(it->second, context(key));
  }

  int get_int(const std::string& key, int fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_int(it->second, key);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    const std::string& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      throw ParseError(context(key) + ": expected a nonnegative integer, got '" + s + "'");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& s = it->second;
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ParseError(context(key) + ": expected true or false, got '" + s + "'");
  }

  /// Comma-separated list; an empty value is an empty list.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second.empty()) return {};
    return io::split(it->second, ',');
  }

  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    std::vector<double> out;
    for (const auto& s : get_list(key, {})) out.push_back(io::parse_double(s, context(key)));
    return out;
  }

  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    std::vector<int> out;
    for (const auto& s : get_list(key, {})) out.push_back(parse_int(s, key));
    return out;
  }

  /// Throws on the first key that no getter consumed.
  void reject_unused() const {
    for (const auto& key : order_)
      if (!used_.count(key)) throw ParseError(source_ + ": unknown config key '" + key + "'");
  }

  /// Keys in file order with their raw values.
  std::vector<std::pair<std::string, std::string>> entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : order_) out.emplace_back(k, values_.at(k));
    return out;
  }

 private:
  std::string context(const std::string& key) const { return source_ + ": key '" + key + "'"; }

  int parse_int(const std::string& s, const std::string& key) const {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      throw ParseError(context(key) + ": expected an integer, got '" + s + "'");
    return v;
  }

  std::string source_ = "config";
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  mutable std::set<std::string> used_;
};

}  // namespace tomo
