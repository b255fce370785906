#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace resseg {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses flat `key=value` lines. Blank lines and lines starting with '#'
/// are skipped; surrounding whitespace is trimmed. Throws ConfigError on a
/// line without '=' or with an empty key.
KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

bool parse_bool(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace resseg
