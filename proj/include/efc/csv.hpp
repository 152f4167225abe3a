#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace efc::csv {

using Row = std::vector<std::string>;

/// A parsed CSV file. Line numbers are 1-based and refer to physical lines
/// of the source, so diagnostics can point at the offending line.
struct Table {
    Row header;
    std::vector<Row> rows;
    std::vector<std::size_t> line_numbers;
};

// Splits one record. Double-quoted fields may contain commas and "" escapes.
Row split_line(std::string_view line);

Table read(std::istream& in, const std::string& source_name);
Table read_file(const std::filesystem::path& path);

/// Writes a field, quoting it only when it contains a comma, quote or newline.
void write_field(std::ostream& out, std::string_view field);
void write_row(std::ostream& out, const Row& row);

/// Shortest decimal string that parses back to the identical double.
std::string format_number(double value);

/// Strict decimal parse: the whole field must be consumed.
std::optional<double> parse_number(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

std::string trim(std::string_view text);

}  // namespace efc::csv
