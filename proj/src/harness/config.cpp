#include "lopt/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "lopt/io.hpp"

namespace lopt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

Config Config::parse(std::string_view text, std::span<const std::string> known) {
  Config config;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + content + "'");
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (!known.empty() && std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(where + "unknown key '" + key + "'");
    }
    config.add(key, value);
    if (end == text.size()) break;
  }
  return config;
}

Config Config::load(const std::filesystem::path& path, std::span<const std::string> known) {
  try {
    return parse(read_file(path), known);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void Config::add(const std::string& key, const std::string& value) { values_[key].push_back(value); }

void Config::set(const std::string& key, std::vector<std::string> values) { values_[key] = std::move(values); }

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  for (const auto& kv : values_) out.push_back(kv.first);
  return out;
}

const std::vector<std::string>& Config::list(const std::string& key) const {
  static const std::vector<std::string> empty;
  const auto it = values_.find(key);
  return it == values_.end() ? empty : it->second;
}

std::optional<std::string> Config::get(const std::string& key) const {
  const auto& v = list(key);
  if (v.empty()) return std::nullopt;
  if (v.size() > 1) throw ConfigError("key '" + key + "' given " + std::to_string(v.size()) + " times");
  return v.front();
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError(what + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::int64_t parse_integer(const std::string& text, const std::string& what) {
  std::int64_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError(what + ": expected an integer, got '" + text + "'");
  }
  return v;
}

double Config::number(const std::string& key, double fallback) const {
  const auto v = get(key);
  return v ? parse_number(*v, key) : fallback;
}

std::int64_t Config::integer(const std::string& key, std::int64_t fallback) const {
  const auto v = get(key);
  return v ? parse_integer(*v, key) : fallback;
}

bool Config::flag(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
}

std::vector<double> Config::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : list(key)) {
    for (const std::string& w : split_words(s)) out.push_back(parse_number(w, key));
  }
  return out;
}

std::string Config::str() const {
  std::string out;
  for (const auto& [k, vs] : values_) {
    for (const auto& v : vs) out += k + " = " + v + "\n";
  }
  return out;
}

std::vector<std::string> problem_keys(const std::string& prefix) {
  std::vector<std::string> keys;
  for (const char* k : {"family", "dim", "seed", "transform", "minibatch", "noise_std", "num_examples", "separable"}) {
    keys.push_back(prefix + k);
  }
  return keys;
}

ProblemSpec problem_spec_from_config(const Config& config, const std::string& prefix) {
  ProblemSpec spec;
  const auto family = config.get(prefix + "family");
  if (!family) throw ConfigError("missing '" + prefix + "family'");
  try {
    spec.family = parse_family(*family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  spec.dim = config.integer(prefix + "dim", 0);
  spec.seed = static_cast<std::uint64_t>(config.integer(prefix + "seed", 0));
  spec.minibatch = config.integer(prefix + "minibatch", 0);
  spec.noise_std = config.number(prefix + "noise_std", 0.0);
  spec.num_examples = config.integer(prefix + "num_examples", 0);
  spec.separable = static_cast<int>(config.integer(prefix + "separable", -1));
  for (const std::string& t : config.list(prefix + "transform")) {
    const auto words = split_words(t);
    if (words.empty()) throw ConfigError(prefix + "transform: empty value");
    TransformSpec ts;
    const std::string& kind = words[0];
    if (kind == "sparse" || kind == "power") {
      ts.kind = kind == "sparse" ? TransformKind::kSparseGradient : TransformKind::kMonotonic;
      if (words.size() > 2) throw ConfigError(prefix + "transform: '" + t + "' takes at most one value");
      if (words.size() == 2) ts.value = parse_number(words[1], prefix + "transform");
    } else if (kind == "rescale") {
      ts.kind = TransformKind::kRescale;
      if (words.size() != 1) throw ConfigError(prefix + "transform: rescale takes no value");
    } else if (kind == "multi_task") {
      ts.kind = TransformKind::kMultiTask;
      try {
        for (std::size_t i = 1; i < words.size(); ++i) ts.tasks.push_back(parse_family(words[i]));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else {
      throw ConfigError(prefix + "transform: unknown kind '" + kind + "' (known: sparse, rescale, power, multi_task)");
    }
    spec.transforms.push_back(ts);
  }
  return spec;
}

Config problem_spec_to_config(const ProblemSpec& spec, const std::string& prefix) {
  Config c;
  c.add(prefix + "family", family_name(spec.family));
  c.add(prefix + "dim", std::to_string(spec.dim));
  c.add(prefix + "seed", std::to_string(spec.seed));
  c.add(prefix + "minibatch", std::to_string(spec.minibatch));
  c.add(prefix + "noise_std", format_double(spec.noise_std));
  c.add(prefix + "num_examples", std::to_string(spec.num_examples));
  c.add(prefix + "separable", std::to_string(spec.separable));
  for (const TransformSpec& t : spec.transforms) {
    std::string v = transform_name(t.kind);
    if (t.kind == TransformKind::kSparseGradient || t.kind == TransformKind::kMonotonic) {
      if (t.value != 0.0) v += " " + format_double(t.value);
    } else if (t.kind == TransformKind::kMultiTask) {
      for (Family f : t.tasks) v += std::string(" ") + family_name(f);
    }
    c.add(prefix + "transform", v);
  }
  return c;
}

}  // namespace lopt
