#include "config.hpp"

#include <cctype>
#include <sstream>
#include <stdexcept>

#include "csv.hpp"

namespace ranopt {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string token;
  std::istringstream in(value);
  while (std::getline(in, token, ',')) out.push_back(trim(token));
  if (out.empty()) out.push_back("");
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* want) {
  throw std::invalid_argument("config key '" + key + "': expected " + want +
                              ", got '" + value + "'");
}

std::uint64_t parse_u64_token(const std::string& key, const std::string& tok) {
  if (tok.empty()) bad_value(key, tok, "an unsigned integer");
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    bad_value(key, tok, "an unsigned integer");
  }
  if (pos != tok.size()) bad_value(key, tok, "an unsigned integer");
  return v;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key");
    if (cfg.kv_.count(key))
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": duplicate key '" + key + "'");
    cfg.kv_[key] = value;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  return parse(read_text_file(path));
}

bool Config::has(const std::string& key) const { return kv_.count(key) != 0; }

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

void Config::set(const std::string& key, double value) { kv_[key] = g17(value); }

std::string Config::get_string(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end())
    throw std::invalid_argument("config: missing key '" + key + "'");
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string raw = get_string(key);
  try {
    return parse_double(raw);
  } catch (const std::exception&) {
    bad_value(key, raw, "a number");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  return parse_u64_token(key, get_string(key));
}

std::uint64_t Config::get_u64(const std::string& key,
                              std::uint64_t fallback) const {
  return has(key) ? get_u64(key) : fallback;
}

std::size_t Config::get_size(const std::string& key,
                             std::size_t fallback) const {
  return has(key) ? static_cast<std::size_t>(get_u64(key)) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = get_string(key);
  if (raw == "true" || raw == "yes" || raw == "1") return true;
  if (raw == "false" || raw == "no" || raw == "0") return false;
  bad_value(key, raw, "a boolean");
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<double> out;
  for (const std::string& tok : split_list(raw)) {
    try {
      out.push_back(parse_double(tok));
    } catch (const std::exception&) {
      bad_value(key, raw, "a comma-separated list of numbers");
    }
  }
  return out;
}

std::vector<double> Config::get_double_list(
    const std::string& key, const std::vector<double>& fallback) const {
  return has(key) ? get_double_list(key) : fallback;
}

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<std::uint64_t> out;
  for (const std::string& tok : split_list(raw)) {
    const std::size_t dots = tok.find("..");
    if (dots != std::string::npos) {
      const std::uint64_t lo = parse_u64_token(key, trim(tok.substr(0, dots)));
      const std::uint64_t hi =
          parse_u64_token(key, trim(tok.substr(dots + 2)));
      if (hi < lo) bad_value(key, raw, "a span with lo <= hi");
      for (std::uint64_t v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(parse_u64_token(key, tok));
    }
  }
  return out;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  out.reserve(kv_.size());
  for (const auto& [k, v] : kv_) out.push_back(k);
  return out;
}

}  // namespace ranopt
