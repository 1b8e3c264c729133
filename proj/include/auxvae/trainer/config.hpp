#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace auxvae::trainer {

// Flat "key = value" text with "[section]" headers. '#' starts a comment.
// Every section and key must appear in the schema; anything else is a
// ConfigError naming the offending line.
class ConfigFile {
 public:
  using Schema = std::map<std::string, std::set<std::string>>;

  ConfigFile() = default;
  static ConfigFile parse(const std::string& text, const Schema& schema,
                          const std::string& origin = "config");
  static ConfigFile load(const std::string& path, const Schema& schema);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& section, const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  // Comma separated; empty items are rejected.
  std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return data_; }

  // Canonical text: sections and keys in sorted order.
  std::string to_text() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> data_;
};

// Every section and key understood by the command-line tool.
const ConfigFile::Schema& full_schema();

// Number formatting that round-trips doubles exactly.
std::string format_double(double v);

}  // namespace auxvae::trainer
