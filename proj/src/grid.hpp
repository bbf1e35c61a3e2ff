#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace yieldcast {

/// Regular grid of square cells. Cell (row, col) is centred at
/// (origin_x + col * cell_size, origin_y + row * cell_size); rows run south to north.
struct GridGeometry {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell_size = 1.0;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;

    std::size_t n_cells() const { return n_rows * n_cols; }
    std::size_t index(std::size_t row, std::size_t col) const { return row * n_cols + col; }
    double x(std::size_t col) const { return origin_x + static_cast<double>(col) * cell_size; }
    double y(std::size_t row) const { return origin_y + static_cast<double>(row) * cell_size; }

    bool operator==(const GridGeometry&) const = default;
    std::string describe() const;
};

/// One variable on a grid at one time. Missing cells carry an explicit flag;
/// their stored value is unspecified and never read.
class FieldRaster {
public:
    FieldRaster() = default;
    FieldRaster(std::string variable_name, std::string time_label, GridGeometry geometry,
                std::vector<double> values, std::vector<std::uint8_t> present);
    /// Fully observed raster.
    FieldRaster(std::string variable_name, std::string time_label, GridGeometry geometry,
                std::vector<double> values);

    const std::string& variable_name() const { return variable_name_; }
    const std::string& time_label() const { return time_label_; }
    const GridGeometry& geometry() const { return geometry_; }
    std::size_t size() const { return values_.size(); }

    bool present(std::size_t cell) const { return present_[cell] != 0; }
    double value(std::size_t cell) const { return values_[cell]; }
    std::optional<double> at(std::size_t cell) const {
        if (!present(cell)) return std::nullopt;
        return values_[cell];
    }
    std::size_t count_present() const;

    const std::vector<double>& values() const { return values_; }
    const std::vector<std::uint8_t>& presence() const { return present_; }

    FieldRaster renamed(std::string variable_name, std::string time_label) const;

private:
    std::string variable_name_;
    std::string time_label_;
    GridGeometry geometry_;
    std::vector<double> values_;
    std::vector<std::uint8_t> present_;
};

/// Yield rasters sharing one geometry, one per year, with the interior years
/// that have no raster recorded as gap years.
struct YieldPanel {
    GridGeometry geometry;
    std::vector<int> years;
    std::vector<int> gap_years;
    std::vector<FieldRaster> rasters;

    const FieldRaster& raster_for(int year) const;
    bool has_year(int year) const;
    /// Every year from first to last, observed or gap.
    std::vector<int> all_years() const;
};

struct WeatherRow {
    double rt = 0.0;   // rainfall total, mm
    double pet = 0.0;  // potential evapotranspiration, mm
    double sd = 0.0;   // average storm depth, mm/storm
    double sa = 0.0;   // average inter-storm arrival rate, storms/day
};

class WeatherTable {
public:
    WeatherTable() = default;
    explicit WeatherTable(std::map<int, WeatherRow> rows) : rows_(std::move(rows)) {}

    bool has(int year) const { return rows_.count(year) != 0; }
    const WeatherRow& row(int year) const;
    const std::map<int, WeatherRow>& rows() const { return rows_; }
    /// Throws unless every listed year has a row.
    void require_years(const std::vector<int>& years) const;

private:
    std::map<int, WeatherRow> rows_;
};

FieldRaster load_raster(const std::filesystem::path& path, const std::string& variable_name);
void write_raster(const FieldRaster& raster, const std::filesystem::path& path, const std::string& value_column = "value");
std::string format_raster(const FieldRaster& raster, const std::string& value_column = "value");

YieldPanel align_panel(std::vector<FieldRaster> rasters);
YieldPanel log_transform(const YieldPanel& panel);

struct ManifestEntry {
    int year = 0;
    std::filesystem::path path;
};

/// Panel manifest: CSV with header `year,path`; relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
YieldPanel load_panel(const std::vector<ManifestEntry>& entries, const std::string& variable_name = "yield");

WeatherTable load_weather(const std::filesystem::path& path);
void write_weather(const WeatherTable& table, const std::filesystem::path& path);

}  // namespace yieldcast
