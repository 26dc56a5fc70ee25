#pragma once

// Line-oriented run configuration:
//
//   # comment
//   key = value
//   key = another value   (repeated keys form a list)
//
// Keys are checked against the set a command accepts; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lopt/problems.hpp"

namespace lopt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  Config() = default;

  /// Throws ConfigError naming the line for syntax errors and unknown keys.
  /// An empty `known` set accepts every key.
  static Config parse(std::string_view text, std::span<const std::string> known = {});
  static Config load(const std::filesystem::path& path, std::span<const std::string> known = {});

  void add(const std::string& key, const std::string& value);
  /// Replaces every value of `key`.
  void set(const std::string& key, std::vector<std::string> values);
  /// Values of `other` replace those of the same key here.
  void merge(const Config& other);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::vector<std::string> keys() const;
  const std::vector<std::string>& list(const std::string& key) const;
  /// Single-valued access; throws ConfigError when the key repeats.
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> numbers(const std::string& key) const;

  /// Keys in sorted order, one line per value.
  std::string str() const;
  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::vector<std::string>> values_;
};

double parse_number(const std::string& text, const std::string& what);
std::int64_t parse_integer(const std::string& text, const std::string& what);

/// Keys describing a ProblemSpec under `prefix`.
std::vector<std::string> problem_keys(const std::string& prefix = "problem.");
/// Transformation values read "sparse 0.1", "rescale", "power 2" or
/// "multi_task rosenbrock booth".
ProblemSpec problem_spec_from_config(const Config& config, const std::string& prefix = "problem.");
Config problem_spec_to_config(const ProblemSpec& spec, const std::string& prefix = "problem.");

}  // namespace lopt
