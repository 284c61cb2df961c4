// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace coslearn {

/// Whole file as a string; throws IoError naming the path.
std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories as needed; throws IoError naming the path.
void write_text_file(const std::filesystem::path& path, std::string_view contents);

/// Shortest representation that parses back to the same double; `nan`,
/// `inf` and `-inf` for non-finite values.
std::string format_double(double v);

/// Strict parse of a whole field; throws FormatError naming `what`.
double parse_double(std::string_view field, std::string_view what = "value");

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

/// Splits text into lines, dropping a trailing `\r` from each.
std::vector<std::string_view> lines_of(std::string_view text);

}  // namespace coslearn
