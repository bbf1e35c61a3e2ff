#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace yieldcast::csv {

struct Row {
    std::size_t line = 0;  // 1-based line number in the source file
    std::vector<std::string> fields;
};

struct Table {
    std::vector<std::string> header;
    std::vector<Row> rows;
};

/// Reads a comma-separated file with a header line. Blank lines are skipped.
Table read(const std::filesystem::path& path);

/// Reads a headerless numeric matrix (all rows must have equal length).
std::vector<std::vector<double>> read_matrix(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

double parse_double(std::string_view s, const std::string& context);
long long parse_int(std::string_view s, const std::string& context);
std::optional<double> parse_optional_double(std::string_view s, const std::string& context);

/// Shortest representation that round-trips to the same double.
std::string format(double v);
std::string format_fixed(double v, int decimals);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace yieldcast::csv
