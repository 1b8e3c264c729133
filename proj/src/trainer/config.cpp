#include "auxvae/trainer/config.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "auxvae/error.hpp"
#include "auxvae/io.hpp"

namespace auxvae::trainer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const char* expected) {
  throw ConfigError("config [" + section + "] " + key + " = '" + value + "': expected " + expected);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const Schema& schema, const std::string& origin) {
  ConfigFile cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!schema.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!schema.at(section).count(key)) {
      throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    }
    if (cfg.has(section, key)) throw ConfigError(where + "duplicate key '" + key + "'");
    cfg.data_[section][key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path, const Schema& schema) {
  return parse(io::read_text(path), schema, path);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto s = data_.find(section);
  return s != data_.end() && s->second.count(key);
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  return has(section, key) ? data_.at(section).at(key) : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key, double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = data_.at(section).at(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    bad_value(section, key, v, "a finite number");
  }
}

std::uint64_t ConfigFile::get_u64(const std::string& section, const std::string& key,
                                  std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = data_.at(section).at(key);
  try {
    std::size_t used = 0;
    if (v.empty() || v.front() == '-') throw std::invalid_argument(v);
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    bad_value(section, key, v, "a nonnegative integer");
  }
}

std::size_t ConfigFile::get_size(const std::string& section, const std::string& key,
                                 std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(section, key, fallback));
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = data_.at(section).at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(section, key, v, "true or false");
}

std::vector<std::string> ConfigFile::get_list(const std::string& section, const std::string& key,
                                              const std::vector<std::string>& fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = data_.at(section).at(key);
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(section, key, v, "a comma separated list");
    out.push_back(item);
  }
  if (out.empty() || v.back() == ',') bad_value(section, key, v, "a comma separated list");
  return out;
}

std::vector<double> ConfigFile::get_doubles(const std::string& section, const std::string& key,
                                            const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<double> out;
  for (const auto& item : get_list(section, key, {})) {
    try {
      std::size_t used = 0;
      const double d = std::stod(item, &used);
      if (used != item.size() || !std::isfinite(d)) throw std::invalid_argument(item);
      out.push_back(d);
    } catch (const std::exception&) {
      bad_value(section, key, data_.at(section).at(key), "a list of finite numbers");
    }
  }
  return out;
}

void ConfigFile::set(const std::string& section, const std::string& key, const std::string& value) {
  data_[section][key] = value;
}

std::string ConfigFile::to_text() const {
  std::string out;
  for (const auto& [section, keys] : data_) {
    if (!out.empty()) out += '\n';
    out += "[" + section + "]\n";
    for (const auto& [k, v] : keys) out += k + " = " + v + "\n";
  }
  return out;
}

const ConfigFile::Schema& full_schema() {
  static const ConfigFile::Schema schema{
      {"data", {"kind", "n", "seed", "workers", "path", "split_seed"}},
      {"render", {"size", "pixel_scale", "oversample", "psf_truncation", "normalization"}},
      {"model", {"objective", "case", "arch", "d_z"}},
      {"loss", {"beta", "lambda1", "lambda2", "k_max", "samples", "eps", "aux_variance", "corr_mode"}},
      {"train", {"batch", "lr", "epochs", "seed", "clip_norm"}},
      {"grid", {"beta", "lambda1", "lambda2"}},
      {"traverse", {"latent", "steps", "base", "range_sigmas"}},
      {"perturb", {"target", "samples", "noise_scale"}},
      {"attack", {"eps", "samples"}},
  };
  return schema;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest text that parses back to the same value.
  for (int p = 1; p <= 17; ++p) {
    char shorter[40];
    std::snprintf(shorter, sizeof shorter, "%.*g", p, v);
    if (std::stod(shorter) == v) return shorter;
  }
  return buf;
}

}  // namespace auxvae::trainer
