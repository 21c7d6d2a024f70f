#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spatialdr::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row
};

/// Reads a comma-separated file with a header row. Double-quoted fields may
/// contain commas and doubled quotes. A leading UTF-8 BOM is skipped.
Table read(const std::filesystem::path& path);

std::vector<std::string> split_line(std::string_view line);

std::string escape(std::string_view field);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Parses the whole of `text` as a double; returns false on any trailing junk.
bool parse_double(std::string_view text, double& out);

/// Writes `content` to a sibling temp file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace spatialdr::csv
