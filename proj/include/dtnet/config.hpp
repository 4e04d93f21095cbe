#ifndef DTNET_CONFIG_HPP
#define DTNET_CONFIG_HPP

// Flat key=value configuration text. Blank lines and lines starting with '#'
// are ignored; keys outside the allowed set are rejected.

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dtnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::set<std::string, std::less<>>& allowed);
  static KeyValueConfig load(const std::string& path, const std::set<std::string, std::less<>>& allowed);

  bool has(std::string_view key) const { return values_.find(key) != values_.end(); }
  const std::string& str(std::string_view key) const;

  std::string get_string(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace dtnet

#endif  // DTNET_CONFIG_HPP
