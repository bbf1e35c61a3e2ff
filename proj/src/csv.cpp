#include "csv.hpp"

#include "error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace yieldcast::csv {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(trim(line.substr(start)));
            break;
        }
        out.emplace_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    Table table;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        if (!have_header) {
            table.header = split(line);
            have_header = true;
            continue;
        }
        Row row{lineno, split(line)};
        if (row.fields.size() != table.header.size()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed row (expected " +
                                  std::to_string(table.header.size()) + " fields, got " +
                                  std::to_string(row.fields.size()) + ")");
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw ValidationError(path.string() + ": empty file");
    return table;
}

std::vector<std::vector<double>> read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<std::vector<double>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<double> row;
        const std::string ctx = path.string() + ":" + std::to_string(lineno);
        for (const auto& f : split(line)) row.push_back(parse_double(f, ctx));
        if (!out.empty() && row.size() != out.front().size())
            throw ValidationError(ctx + ": ragged matrix row");
        out.push_back(std::move(row));
    }
    return out;
}

double parse_double(std::string_view s, const std::string& context) {
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ValidationError(context + ": malformed number '" + std::string(s) + "'");
    if (!std::isfinite(v)) throw ValidationError(context + ": non-finite value '" + std::string(s) + "'");
    return v;
}

long long parse_int(std::string_view s, const std::string& context) {
    s = trim(s);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ValidationError(context + ": malformed integer '" + std::string(s) + "'");
    return v;
}

std::optional<double> parse_optional_double(std::string_view s, const std::string& context) {
    if (trim(s).empty()) return std::nullopt;
    return parse_double(s, context);
}

std::string format(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

}  // namespace yieldcast::csv
