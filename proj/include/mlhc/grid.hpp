/**
 * @file grid.hpp
 * @brief Lat-lon grid with ocean mask, monthly field series and the masked
 *        reductions built on them (basin means, climatologies, anomalies).
 *
 * Land cells hold a quiet NaN in memory. Every reduction walks the ocean mask
 * and never looks at the sentinel, so a missed mask shows up as NaN output.
 */
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mlhc {

inline constexpr double land_value = std::numeric_limits<double>::quiet_NaN();

struct YearMonth {
    int year = 0;
    int month = 1;  // 1..12

    friend bool operator==(const YearMonth&, const YearMonth&) = default;
};

/// Consecutive months starting at `start`.
class TimeAxis {
public:
    TimeAxis() = default;
    TimeAxis(YearMonth start, int length);

    YearMonth start() const noexcept { return start_; }
    int length() const noexcept { return length_; }

    YearMonth at(int t) const;
    int month_of(int t) const { return at(t).month; }
    /// Index of a calendar month on this axis; may fall outside [0, length).
    int index_of(YearMonth ym) const noexcept;
    TimeAxis slice(int first, int count) const;

    friend bool operator==(const TimeAxis&, const TimeAxis&) = default;

private:
    YearMonth start_{};
    int length_ = 0;
};

/// Half-open range of time indices [first, first + count).
struct MonthRange {
    int first = 0;
    int count = 0;

    int end() const noexcept { return first + count; }
    bool contains(int t) const noexcept { return t >= first && t < end(); }

    friend bool operator==(const MonthRange&, const MonthRange&) = default;
};

class GeoGrid {
public:
    /// Throws mlhc::Error when lat/lon are not strictly monotonic, out of
    /// range, the mask has the wrong size or holds no ocean cell.
    GeoGrid(std::vector<double> lat, std::vector<double> lon, std::vector<std::uint8_t> ocean_mask);

    std::size_t n_lat() const noexcept { return lat_.size(); }
    std::size_t n_lon() const noexcept { return lon_.size(); }
    std::size_t n_cells() const noexcept { return lat_.size() * lon_.size(); }
    std::size_t n_ocean() const noexcept { return ocean_cells_.size(); }

    const std::vector<double>& lat() const noexcept { return lat_; }
    const std::vector<double>& lon() const noexcept { return lon_; }
    const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }

    bool is_ocean(std::size_t cell) const noexcept { return mask_[cell] != 0; }
    bool is_ocean(std::size_t i, std::size_t j) const noexcept { return mask_[i * n_lon() + j] != 0; }
    std::size_t index(std::size_t i, std::size_t j) const noexcept { return i * n_lon() + j; }
    /// Row-major flat indices of the ocean cells, ascending.
    const std::vector<std::size_t>& ocean_cells() const noexcept { return ocean_cells_; }

    friend bool operator==(const GeoGrid& a, const GeoGrid& b);

private:
    std::vector<double> lat_;
    std::vector<double> lon_;
    std::vector<std::uint8_t> mask_;
    std::vector<std::size_t> ocean_cells_;
};

using GridPtr = std::shared_ptr<const GeoGrid>;

bool same_grid(const GridPtr& a, const GridPtr& b);

/// Regular grid helper: n_lat x n_lon cell centres spanning the given extent.
GeoGrid make_regular_grid(std::size_t n_lat, std::size_t n_lon, double lat0, double lat1, double lon0,
                          double lon1, std::vector<std::uint8_t> ocean_mask);

/// Monthly stack of one 2D variable, values laid out [t][lat][lon].
class FieldSeries {
public:
    FieldSeries() = default;
    /// Zero on ocean, sentinel on land.
    FieldSeries(GridPtr grid, TimeAxis time, std::string name, std::string units);
    /// Adopts `values`; land cells are overwritten with the sentinel. Throws if
    /// the size is wrong or an ocean value is not finite.
    FieldSeries(GridPtr grid, TimeAxis time, std::string name, std::string units, std::vector<double> values);

    const GridPtr& grid() const noexcept { return grid_; }
    const TimeAxis& time() const noexcept { return time_; }
    const std::string& name() const noexcept { return name_; }
    const std::string& units() const noexcept { return units_; }
    void rename(std::string name, std::string units);

    int length() const noexcept { return time_.length(); }
    std::size_t cells() const noexcept { return grid_->n_cells(); }

    std::span<double> slice(int t) noexcept { return {values_.data() + static_cast<std::size_t>(t) * cells(), cells()}; }
    std::span<const double> slice(int t) const noexcept
    {
        return {values_.data() + static_cast<std::size_t>(t) * cells(), cells()};
    }
    double& at(int t, std::size_t cell) noexcept { return values_[static_cast<std::size_t>(t) * cells() + cell]; }
    double at(int t, std::size_t cell) const noexcept { return values_[static_cast<std::size_t>(t) * cells() + cell]; }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    /// Sub-series over time indices [first, first + count).
    FieldSeries slice_time(int first, int count) const;

    /// Re-imposes the land sentinel and checks ocean values are finite.
    void validate() const;
    void apply_land_sentinel() noexcept;

private:
    GridPtr grid_;
    TimeAxis time_;
    std::string name_;
    std::string units_;
    std::vector<double> values_;
};

/// True when both series carry identical metadata and bitwise-identical values.
bool bitwise_equal(const FieldSeries& a, const FieldSeries& b);

struct Climatology {
    GridPtr grid;
    MonthRange period;
    /// [12][cell], month m at index m-1; land holds the sentinel.
    std::vector<double> means;

    std::span<const double> month(int m) const
    {
        return {means.data() + static_cast<std::size_t>(m - 1) * grid->n_cells(), grid->n_cells()};
    }
};

enum class Weighting { unweighted, cos_lat };

/// Per-time-step mean over ocean cells.
std::vector<double> basin_mean(const FieldSeries& series, Weighting weighting = Weighting::unweighted);

/// Mean of each calendar month over `period`, per ocean cell. Every calendar
/// month must occur at least once in the period.
Climatology monthly_climatology(const FieldSeries& series, MonthRange period);
Climatology monthly_climatology(const FieldSeries& series);

/// series(t) - clim(month(t)) on ocean cells.
FieldSeries anomalies(const FieldSeries& series, const Climatology& clim);

/// Normalised 1-D Gaussian weights for offsets -r..r, r = ceil(4 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian filter of a single 2D field. Cells with mask == 0 are
/// excluded from both the weighted sum and the weight total, as are cells
/// outside the grid. Output on masked cells is the land sentinel. An empty
/// mask means every cell participates.
void masked_gaussian_filter(std::span<const double> in, std::span<double> out, std::size_t n_lat,
                            std::size_t n_lon, std::span<const std::uint8_t> mask, double sigma);

} // namespace mlhc
