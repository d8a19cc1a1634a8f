#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace trajgnn {

/// Shortest decimal form that parses back to the identical double
/// (locale-independent, '.' separator).
std::string format_double(double v);

/// Strict full-token parse; throws with `context` on failure.
double parse_double(std::string_view token, const std::string& context);
std::int64_t parse_int(std::string_view token, const std::string& context);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view line, char sep);

/// Reads a whole file into LF-separated lines (CR stripped).
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::vector<std::string> split_lines(std::string_view text);

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Flat key=value file ('#' starts a comment line). Keys must be unique.
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_value_text(std::string_view text);

}  // namespace trajgnn
