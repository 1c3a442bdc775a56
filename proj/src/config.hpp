#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ranopt {

// Flat experiment document: one `key = value` per line, blank lines and #
// comments ignored. Values are scalars or comma-separated lists; integer
// lists also accept a..b spans (inclusive). set() rebinds a key after
// parsing, which is how CLI flags and sweep variables override the file.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);  // exact round-trip text

  // Required-key getters throw std::invalid_argument naming the key; the
  // fallback overloads return it when the key is absent. Malformed values
  // always throw.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  std::vector<std::string> keys() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace ranopt
