#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thicken/errors.hpp"
#include "thicken/rational.hpp"

namespace thicken::lab {

struct ExperimentReport {
  std::string id;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  std::uint64_t samples = 0;
  nlohmann::ordered_json statistics = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, bool>> criteria;
  std::vector<std::string> notes;
  double wall_clock_seconds = 0;

  void criterion(const std::string& name, bool pass) { criteria.emplace_back(name, pass); }

  bool passed() const {
    for (const auto& [name, ok] : criteria)
      if (!ok) return false;
    return true;
  }

  // Everything but the timing; identical config and seed give identical bodies.
  nlohmann::ordered_json body() const {
    nlohmann::ordered_json crit = nlohmann::ordered_json::object();
    for (const auto& [name, ok] : criteria) crit[name] = ok ? "pass" : "fail";
    nlohmann::ordered_json j;
    j["experiment"] = id;
    j["config"] = config;
    j["seed"] = seed;
    j["samples"] = samples;
    j["statistics"] = statistics;
    j["criteria"] = crit;
    if (!notes.empty()) j["notes"] = notes;
    j["passed"] = passed();
    return j;
  }

  std::string body_text() const { return body().dump(2); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = body();
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
  }
};

// Flat key=value text. The first bare word names the experiment; '#' starts a
// comment; tokens may share a line or sit on separate lines.
class ExperimentSpec {
 public:
  static ExperimentSpec parse(const std::string& text) {
    ExperimentSpec spec;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream words(line);
      std::string tok;
      while (words >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) {
          if (!spec.name_.empty()) throw ConfigError(line_no, "unexpected word '" + tok + "' (expected key=value)");
          spec.name_ = tok;
          continue;
        }
        std::string key = canonical_key(tok.substr(0, eq)), value = tok.substr(eq + 1);
        if (key.empty()) throw ConfigError(line_no, "missing key before '='");
        if (value.empty()) throw ConfigError(line_no, "missing value for '" + key + "'");
        if (key == "experiment") {
          if (!spec.name_.empty()) throw ConfigError(line_no, "experiment named twice");
          spec.name_ = value;
          continue;
        }
        if (spec.values_.count(key)) throw ConfigError(line_no, "duplicate key '" + key + "'");
        spec.values_[key] = {value, line_no};
      }
    }
    if (spec.name_.empty()) throw ConfigError(0, "spec names no experiment");
    return spec;
  }

  static ExperimentSpec make(std::string name) {
    ExperimentSpec spec;
    spec.name_ = std::move(name);
    return spec;
  }

  void set(const std::string& key, const std::string& value) { values_[canonical_key(key)] = {value, 0}; }

  const std::string& name() const { return name_; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void allow(std::initializer_list<std::string> keys) const {
    std::set<std::string> ok(keys);
    for (const auto& [k, v] : values_)
      if (!ok.count(k)) throw ConfigError(v.second, "unknown key '" + k + "' for experiment '" + name_ + "'");
  }

  Rational rational(const std::string& key, const Rational& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return Rational::parse(it->second.first);
    } catch (const InvalidArgument& e) {
      throw ConfigError(it->second.second, key + ": " + e.what());
    }
  }

  // accepts plain integers and forms like 1e5
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second.first;
    auto bad = [&]() { return ConfigError(it->second.second, key + ": expected a non-negative integer, got '" + v + "'"); };
    auto digits = [&](const std::string& s) {
      if (s.empty() || s.size() > 19) throw bad();
      for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) throw bad();
      return std::stoull(s);
    };
    auto e = v.find_first_of("eE");
    if (e == std::string::npos) return digits(v);
    std::uint64_t mant = digits(v.substr(0, e)), exp = digits(v.substr(e + 1));
    if (exp > 18) throw bad();
    for (std::uint64_t i = 0; i < exp; ++i) mant *= 10;
    return mant;
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second.first;
  }

  std::vector<Rational> rationals(const std::string& key, const std::vector<Rational>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<Rational> out;
    std::istringstream in(it->second.first);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        out.push_back(Rational::parse(item));
      } catch (const InvalidArgument& e) {
        throw ConfigError(it->second.second, key + ": " + e.what());
      }
    }
    if (out.empty()) throw ConfigError(it->second.second, key + ": empty list");
    return out;
  }

  std::size_t line_of(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? 0 : it->second.second;
  }

 private:
  static std::string canonical_key(std::string key) {
    static const std::map<std::string, std::string> alias = {
        {"p'", "pprime"},         {"p_prime", "pprime"},           {"N", "samples"},
        {"n", "samples"},         {"lambda'", "lambdaprime"},      {"lambda_prime", "lambdaprime"},
        {"eps", "epsilon"},       {"max-level", "max_level"},      {"gap-bits", "gap_bits"}};
    auto it = alias.find(key);
    return it == alias.end() ? key : it->second;
  }

  std::string name_;
  std::map<std::string, std::pair<std::string, std::size_t>> values_;
};

}  // namespace thicken::lab
