#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vflow::kv {

/// Ordered `key=value` lines. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& source);
  static KeyValues read(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

double parse_double(const std::string& text, const std::string& field);
std::int64_t parse_int(const std::string& text, const std::string& field);
std::uint64_t parse_uint(const std::string& text, const std::string& field);
bool parse_bool(const std::string& text, const std::string& field);

/// Shortest text that reads back to the same double.
std::string format_double(double v);

/// Writes to a sibling temp file then renames over the target.
void write_atomic(const std::filesystem::path& path, std::span<const char> bytes);
void write_atomic(const std::filesystem::path& path, const std::string& text);

std::vector<char> read_bytes(const std::filesystem::path& path);

}  // namespace vflow::kv
