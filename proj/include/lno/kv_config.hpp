#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lno {

/// Canonical key=value text used for generator configs, model configs,
/// manifests and checkpoint headers.
///
/// Serialization sorts keys and writes doubles in shortest round-trip decimal
/// form, so equal configs always produce equal bytes.
class KvConfig {
 public:
  KvConfig() = default;

  /// Lines are `key=value`; blank lines and lines starting with '#' are skipped.
  /// Throws ParseError naming the offending line.
  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::string& path);

  std::string serialize() const;
  void save(const std::string& path) const;

  void set(const std::string& key, std::string value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, bool value);

  /// Applies a single `key=value` override (ConfigError when malformed).
  void apply_override(std::string_view assignment);
  /// Copies every entry of `other`, replacing existing keys.
  void merge(const KvConfig& other);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void erase(const std::string& key) { entries_.erase(key); }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list of decimals.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_uints(const std::string& key, const std::vector<std::uint64_t>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  bool operator==(const KvConfig&) const = default;

 private:
  std::map<std::string, std::string> entries_;
};

std::string format_double(double value);
double parse_double(std::string_view text);
std::uint64_t parse_uint(std::string_view text);
std::int64_t parse_int(std::string_view text);

}  // namespace lno
