#include "grid.hpp"

#include "csv.hpp"
#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

namespace yieldcast {

std::string GridGeometry::describe() const {
    return std::to_string(n_rows) + "x" + std::to_string(n_cols) + " cells of " + csv::format(cell_size) +
           " m at (" + csv::format(origin_x) + ", " + csv::format(origin_y) + ")";
}

FieldRaster::FieldRaster(std::string variable_name, std::string time_label, GridGeometry geometry,
                         std::vector<double> values, std::vector<std::uint8_t> present)
    : variable_name_(std::move(variable_name)),
      time_label_(std::move(time_label)),
      geometry_(geometry),
      values_(std::move(values)),
      present_(std::move(present)) {
    if (!(geometry_.cell_size > 0.0)) throw ValidationError("raster '" + variable_name_ + "': cell size must be positive");
    if (geometry_.n_cells() != values_.size() || present_.size() != values_.size())
        throw ValidationError("raster '" + variable_name_ + "': value count does not match grid dimensions");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!present_[i]) {
            values_[i] = 0.0;
        } else if (!std::isfinite(values_[i])) {
            throw ValidationError("raster '" + variable_name_ + "': non-finite value at cell " + std::to_string(i));
        }
    }
}

FieldRaster::FieldRaster(std::string variable_name, std::string time_label, GridGeometry geometry,
                         std::vector<double> values)
    : FieldRaster(std::move(variable_name), std::move(time_label), geometry, values,
                  std::vector<std::uint8_t>(values.size(), 1)) {}

std::size_t FieldRaster::count_present() const {
    return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), std::uint8_t{1}));
}

FieldRaster FieldRaster::renamed(std::string variable_name, std::string time_label) const {
    FieldRaster copy = *this;
    copy.variable_name_ = std::move(variable_name);
    copy.time_label_ = std::move(time_label);
    return copy;
}

const FieldRaster& YieldPanel::raster_for(int year) const {
    auto it = std::find(years.begin(), years.end(), year);
    if (it == years.end()) throw ValidationError("panel has no raster for year " + std::to_string(year));
    return rasters[static_cast<std::size_t>(it - years.begin())];
}

bool YieldPanel::has_year(int year) const {
    return std::find(years.begin(), years.end(), year) != years.end();
}

std::vector<int> YieldPanel::all_years() const {
    std::vector<int> out;
    if (years.empty()) return out;
    for (int y = years.front(); y <= years.back(); ++y) out.push_back(y);
    return out;
}

const WeatherRow& WeatherTable::row(int year) const {
    auto it = rows_.find(year);
    if (it == rows_.end()) throw ValidationError("weather table has no row for year " + std::to_string(year));
    return it->second;
}

void WeatherTable::require_years(const std::vector<int>& years) const {
    for (int y : years) (void)row(y);
}

namespace {

// Distinct coordinate values, merging values that differ only by rounding noise.
std::vector<double> distinct_coordinates(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double span = v.empty() ? 0.0 : v.back() - v.front();
    const double tol = 1e-9 * std::max(1.0, span);
    std::vector<double> out;
    for (double x : v)
        if (out.empty() || x - out.back() > tol) out.push_back(x);
    return out;
}

std::optional<double> min_spacing(const std::vector<double>& distinct) {
    if (distinct.size() < 2) return std::nullopt;
    double best = distinct[1] - distinct[0];
    for (std::size_t i = 2; i < distinct.size(); ++i) best = std::min(best, distinct[i] - distinct[i - 1]);
    return best;
}

}  // namespace

FieldRaster load_raster(const std::filesystem::path& path, const std::string& variable_name) {
    const auto table = csv::read(path);
    const std::string where = path.string();
    if (table.header.size() != 3 || table.header[0] != "x" || table.header[1] != "y")
        throw ValidationError(where + ":1: expected header x,y,<value>");
    if (table.rows.empty()) throw ValidationError(where + ": no cells");

    struct Parsed {
        double x, y;
        std::optional<double> v;
        std::size_t line;
    };
    std::vector<Parsed> parsed;
    parsed.reserve(table.rows.size());
    std::vector<double> xs, ys;
    for (const auto& row : table.rows) {
        const std::string ctx = where + ":" + std::to_string(row.line);
        Parsed p{csv::parse_double(row.fields[0], ctx), csv::parse_double(row.fields[1], ctx),
                 csv::parse_optional_double(row.fields[2], ctx), row.line};
        xs.push_back(p.x);
        ys.push_back(p.y);
        parsed.push_back(p);
    }

    const auto dx = distinct_coordinates(xs);
    const auto dy = distinct_coordinates(ys);
    auto sx = min_spacing(dx);
    auto sy = min_spacing(dy);
    double cell = 0.0;
    if (sx && sy) {
        if (std::abs(*sx - *sy) > 1e-9 * std::max(*sx, *sy))
            throw ValidationError(where + ": non-square cells (x spacing " + csv::format(*sx) + ", y spacing " +
                                  csv::format(*sy) + ")");
        cell = *sx;
    } else if (sx) {
        cell = *sx;
    } else if (sy) {
        cell = *sy;
    } else {
        throw ValidationError(where + ": cannot infer cell size from a single cell");
    }

    GridGeometry g;
    g.origin_x = dx.front();
    g.origin_y = dy.front();
    g.cell_size = cell;
    g.n_cols = static_cast<std::size_t>(std::llround((dx.back() - dx.front()) / cell)) + 1;
    g.n_rows = static_cast<std::size_t>(std::llround((dy.back() - dy.front()) / cell)) + 1;

    std::vector<double> values(g.n_cells(), 0.0);
    std::vector<std::uint8_t> present(g.n_cells(), 0);
    std::vector<std::size_t> seen_line(g.n_cells(), 0);
    const double tol = 1e-6 * cell;
    for (const auto& p : parsed) {
        const double fc = (p.x - g.origin_x) / cell;
        const double fr = (p.y - g.origin_y) / cell;
        const auto col = static_cast<std::size_t>(std::llround(fc));
        const auto row = static_cast<std::size_t>(std::llround(fr));
        if (std::abs(p.x - g.x(col)) > tol || std::abs(p.y - g.y(row)) > tol)
            throw ValidationError(where + ":" + std::to_string(p.line) +
                                  ": inconsistent coordinates (not on the inferred grid)");
        const auto idx = g.index(row, col);
        if (seen_line[idx] != 0)
            throw ValidationError(where + ":" + std::to_string(p.line) + ": duplicate cell (first seen on line " +
                                  std::to_string(seen_line[idx]) + ")");
        seen_line[idx] = p.line;
        if (p.v) {
            values[idx] = *p.v;
            present[idx] = 1;
        }
    }
    if (parsed.size() != g.n_cells()) {
        std::size_t missing_idx = static_cast<std::size_t>(
            std::find(seen_line.begin(), seen_line.end(), std::size_t{0}) - seen_line.begin());
        throw ValidationError(where + ": non-rectangular grid: " + std::to_string(parsed.size()) + " rows for a " +
                              std::to_string(g.n_rows) + "x" + std::to_string(g.n_cols) +
                              " grid (no row for cell x=" + csv::format(g.x(missing_idx % g.n_cols)) +
                              ", y=" + csv::format(g.y(missing_idx / g.n_cols)) + ")");
    }
    return FieldRaster(variable_name, path.stem().string(), g, std::move(values), std::move(present));
}

std::string format_raster(const FieldRaster& raster, const std::string& value_column) {
    const auto& g = raster.geometry();
    std::string out = "x,y," + value_column + "\n";
    out.reserve(out.size() + g.n_cells() * 24);
    for (std::size_t r = 0; r < g.n_rows; ++r) {
        for (std::size_t c = 0; c < g.n_cols; ++c) {
            const auto idx = g.index(r, c);
            out += csv::format(g.x(c));
            out += ',';
            out += csv::format(g.y(r));
            out += ',';
            if (raster.present(idx)) out += csv::format(raster.value(idx));
            out += '\n';
        }
    }
    return out;
}

void write_raster(const FieldRaster& raster, const std::filesystem::path& path, const std::string& value_column) {
    csv::write_text(path, format_raster(raster, value_column));
}

YieldPanel align_panel(std::vector<FieldRaster> rasters) {
    if (rasters.size() < 2) throw ValidationError("a panel needs at least two rasters");
    std::vector<std::pair<int, std::size_t>> order;
    for (std::size_t i = 0; i < rasters.size(); ++i) {
        const auto& label = rasters[i].time_label();
        int year = static_cast<int>(csv::parse_int(label, "raster '" + rasters[i].variable_name() + "' time label"));
        order.emplace_back(year, i);
    }
    std::sort(order.begin(), order.end());
    YieldPanel panel;
    panel.geometry = rasters[order.front().second].geometry();
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto [year, idx] = order[k];
        if (k > 0 && order[k - 1].first == year)
            throw ValidationError("duplicate raster for year " + std::to_string(year));
        const auto& r = rasters[idx];
        if (!(r.geometry() == panel.geometry))
            throw ValidationError("geometry mismatch: raster '" + r.variable_name() + "' year " +
                                  std::to_string(year) + " is " + r.geometry().describe() + ", expected " +
                                  panel.geometry.describe());
        panel.years.push_back(year);
        panel.rasters.push_back(r);
    }
    for (int y = panel.years.front(); y <= panel.years.back(); ++y)
        if (!panel.has_year(y)) panel.gap_years.push_back(y);
    return panel;
}

YieldPanel log_transform(const YieldPanel& panel) {
    YieldPanel out = panel;
    out.rasters.clear();
    for (std::size_t k = 0; k < panel.rasters.size(); ++k) {
        const auto& r = panel.rasters[k];
        std::vector<double> v(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (!r.present(i)) continue;
            if (!(r.value(i) > 0.0)) {
                const auto& g = r.geometry();
                throw ValidationError("nonpositive yield " + csv::format(r.value(i)) + " at cell x=" +
                                      csv::format(g.x(i % g.n_cols)) + ", y=" + csv::format(g.y(i / g.n_cols)) +
                                      " in year " + std::to_string(panel.years[k]));
            }
            v[i] = std::log(r.value(i));
        }
        out.rasters.emplace_back("log_" + r.variable_name(), r.time_label(), r.geometry(), std::move(v), r.presence());
    }
    return out;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    if (table.header.size() != 2 || table.header[0] != "year" || table.header[1] != "path")
        throw ValidationError(path.string() + ":1: expected header year,path");
    std::vector<ManifestEntry> out;
    for (const auto& row : table.rows) {
        const std::string ctx = path.string() + ":" + std::to_string(row.line);
        ManifestEntry e{static_cast<int>(csv::parse_int(row.fields[0], ctx)), row.fields[1]};
        if (e.path.is_relative()) e.path = path.parent_path() / e.path;
        out.push_back(std::move(e));
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
    std::string out = "year,path\n";
    for (const auto& e : entries) out += std::to_string(e.year) + "," + e.path.generic_string() + "\n";
    csv::write_text(path, out);
}

YieldPanel load_panel(const std::vector<ManifestEntry>& entries, const std::string& variable_name) {
    std::vector<FieldRaster> rasters;
    for (const auto& e : entries)
        rasters.push_back(load_raster(e.path, variable_name).renamed(variable_name, std::to_string(e.year)));
    return align_panel(std::move(rasters));
}

WeatherTable load_weather(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const std::vector<std::string> expected{"year", "rt", "pet", "sd", "sa"};
    if (table.header != expected) throw ValidationError(path.string() + ":1: expected header year,rt,pet,sd,sa");
    std::map<int, WeatherRow> rows;
    for (const auto& row : table.rows) {
        const std::string ctx = path.string() + ":" + std::to_string(row.line);
        int year = static_cast<int>(csv::parse_int(row.fields[0], ctx));
        WeatherRow w{csv::parse_double(row.fields[1], ctx), csv::parse_double(row.fields[2], ctx),
                     csv::parse_double(row.fields[3], ctx), csv::parse_double(row.fields[4], ctx)};
        if (!rows.emplace(year, w).second) throw ValidationError(ctx + ": duplicate weather year");
    }
    return WeatherTable(std::move(rows));
}

void write_weather(const WeatherTable& table, const std::filesystem::path& path) {
    std::string out = "year,rt,pet,sd,sa\n";
    for (const auto& [year, w] : table.rows())
        out += std::to_string(year) + "," + csv::format(w.rt) + "," + csv::format(w.pet) + "," + csv::format(w.sd) +
               "," + csv::format(w.sa) + "\n";
    csv::write_text(path, out);
}

}  // namespace yieldcast
