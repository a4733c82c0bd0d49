#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ren::text {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
/// Splits on runs of spaces and tabs.
std::vector<std::string> split_ws(std::string_view s);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);

/// Flat "key = value" text: blank lines and lines starting with '#' are skipped.
/// Duplicate keys are an error.
std::map<std::string, std::string> parse_key_values(std::string_view content, std::string_view source);
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);
std::string format_key_values(const std::map<std::string, std::string>& kv);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace ren::text
