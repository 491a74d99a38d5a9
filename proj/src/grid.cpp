#include "mlhc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "mlhc/error.hpp"

namespace mlhc {

// ---------------------------------------------------------------------------
// TimeAxis
// ---------------------------------------------------------------------------

TimeAxis::TimeAxis(YearMonth start, int length) : start_(start), length_(length)
{
    if (start.month < 1 || start.month > 12)
        throw Error("TimeAxis: start month must be in 1..12, got " + std::to_string(start.month));
    if (length < 1)
        throw Error("TimeAxis: length must be >= 1");
}

YearMonth TimeAxis::at(int t) const
{
    const int months = start_.year * 12 + (start_.month - 1) + t;
    // floor division keeps negative offsets well defined
    const int year = months >= 0 ? months / 12 : -((-months + 11) / 12);
    return {year, months - year * 12 + 1};
}

int TimeAxis::index_of(YearMonth ym) const noexcept
{
    return (ym.year - start_.year) * 12 + (ym.month - start_.month);
}

TimeAxis TimeAxis::slice(int first, int count) const
{
    if (first < 0 || count < 1 || first + count > length_)
        throw Error("TimeAxis::slice out of range");
    return {at(first), count};
}

// ---------------------------------------------------------------------------
// GeoGrid
// ---------------------------------------------------------------------------

namespace {

bool strictly_monotonic(const std::vector<double>& v)
{
    if (v.size() < 2)
        return true;
    const bool up = v[1] > v[0];
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (up ? !(v[i] > v[i - 1]) : !(v[i] < v[i - 1]))
            return false;
    }
    return true;
}

} // namespace

GeoGrid::GeoGrid(std::vector<double> lat, std::vector<double> lon, std::vector<std::uint8_t> ocean_mask)
    : lat_(std::move(lat)), lon_(std::move(lon)), mask_(std::move(ocean_mask))
{
    if (lat_.empty() || lon_.empty())
        throw Error("GeoGrid: empty axis");
    if (!strictly_monotonic(lat_) || !strictly_monotonic(lon_))
        throw Error("GeoGrid: lat/lon must be strictly monotonic");
    for (double v : lat_)
        if (!(v >= -90.0 && v <= 90.0))
            throw Error("GeoGrid: latitude outside [-90, 90]");
    for (double v : lon_)
        if (!(v >= -180.0 && v < 360.0))
            throw Error("GeoGrid: longitude outside [-180, 360)");
    if (mask_.size() != lat_.size() * lon_.size())
        throw Error("GeoGrid: mask shape does not match (n_lat, n_lon)");
    for (std::size_t c = 0; c < mask_.size(); ++c) {
        mask_[c] = mask_[c] ? 1 : 0;
        if (mask_[c])
            ocean_cells_.push_back(c);
    }
    if (ocean_cells_.empty())
        throw Error("GeoGrid: no ocean cell");
}

bool operator==(const GeoGrid& a, const GeoGrid& b)
{
    return a.lat_ == b.lat_ && a.lon_ == b.lon_ && a.mask_ == b.mask_;
}

bool same_grid(const GridPtr& a, const GridPtr& b)
{
    if (!a || !b)
        return false;
    return a == b || *a == *b;
}

GeoGrid make_regular_grid(std::size_t n_lat, std::size_t n_lon, double lat0, double lat1, double lon0,
                          double lon1, std::vector<std::uint8_t> ocean_mask)
{
    if (n_lat == 0 || n_lon == 0)
        throw Error("make_regular_grid: degenerate grid");
    std::vector<double> lat(n_lat), lon(n_lon);
    const double dlat = (lat1 - lat0) / static_cast<double>(n_lat);
    const double dlon = (lon1 - lon0) / static_cast<double>(n_lon);
    for (std::size_t i = 0; i < n_lat; ++i)
        lat[i] = lat0 + (static_cast<double>(i) + 0.5) * dlat;
    for (std::size_t j = 0; j < n_lon; ++j)
        lon[j] = lon0 + (static_cast<double>(j) + 0.5) * dlon;
    return GeoGrid(std::move(lat), std::move(lon), std::move(ocean_mask));
}

// ---------------------------------------------------------------------------
// FieldSeries
// ---------------------------------------------------------------------------

FieldSeries::FieldSeries(GridPtr grid, TimeAxis time, std::string name, std::string units)
    : grid_(std::move(grid)), time_(time), name_(std::move(name)), units_(std::move(units))
{
    if (!grid_)
        throw Error("FieldSeries: null grid");
    values_.assign(static_cast<std::size_t>(time_.length()) * grid_->n_cells(), 0.0);
    apply_land_sentinel();
}

FieldSeries::FieldSeries(GridPtr grid, TimeAxis time, std::string name, std::string units,
                         std::vector<double> values)
    : grid_(std::move(grid)), time_(time), name_(std::move(name)), units_(std::move(units)),
      values_(std::move(values))
{
    if (!grid_)
        throw Error("FieldSeries: null grid");
    if (values_.size() != static_cast<std::size_t>(time_.length()) * grid_->n_cells())
        throw Error("FieldSeries '" + name_ + "': value count does not match grid and time axis");
    apply_land_sentinel();
    validate();
}

void FieldSeries::rename(std::string name, std::string units)
{
    name_ = std::move(name);
    units_ = std::move(units);
}

FieldSeries FieldSeries::slice_time(int first, int count) const
{
    TimeAxis axis = time_.slice(first, count);
    const auto n = cells();
    std::vector<double> v(values_.begin() + static_cast<std::ptrdiff_t>(first * n),
                          values_.begin() + static_cast<std::ptrdiff_t>((first + count) * n));
    FieldSeries out;
    out.grid_ = grid_;
    out.time_ = axis;
    out.name_ = name_;
    out.units_ = units_;
    out.values_ = std::move(v);
    return out;
}

void FieldSeries::validate() const
{
    const auto n = cells();
    for (int t = 0; t < length(); ++t) {
        for (std::size_t c : grid_->ocean_cells()) {
            if (!std::isfinite(values_[static_cast<std::size_t>(t) * n + c]))
                throw NumericalError("FieldSeries '" + name_ + "': non-finite ocean value at t=" +
                                     std::to_string(t) + " cell=" + std::to_string(c));
        }
    }
}

void FieldSeries::apply_land_sentinel() noexcept
{
    const auto n = cells();
    const auto& mask = grid_->mask();
    for (int t = 0; t < length(); ++t)
        for (std::size_t c = 0; c < n; ++c)
            if (!mask[c])
                values_[static_cast<std::size_t>(t) * n + c] = land_value;
}

bool bitwise_equal(const FieldSeries& a, const FieldSeries& b)
{
    if (a.name() != b.name() || a.units() != b.units() || !(a.time() == b.time()) ||
        !same_grid(a.grid(), b.grid()))
        return false;
    if (a.values().size() != b.values().size())
        return false;
    return std::memcmp(a.values().data(), b.values().data(), a.values().size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

std::vector<double> basin_mean(const FieldSeries& series, Weighting weighting)
{
    const GeoGrid& g = *series.grid();
    const auto& ocean = g.ocean_cells();
    if (ocean.empty())
        throw Error("basin_mean: no ocean cell");

    std::vector<double> weight(ocean.size(), 1.0);
    if (weighting == Weighting::cos_lat) {
        for (std::size_t k = 0; k < ocean.size(); ++k)
            weight[k] = std::cos(g.lat()[ocean[k] / g.n_lon()] * std::numbers::pi / 180.0);
    }
    double wsum = 0.0;
    for (double w : weight)
        wsum += w;

    std::vector<double> out(static_cast<std::size_t>(series.length()));
    for (int t = 0; t < series.length(); ++t) {
        const auto s = series.slice(t);
        double acc = 0.0;
        for (std::size_t k = 0; k < ocean.size(); ++k)
            acc += weight[k] * s[ocean[k]];
        out[static_cast<std::size_t>(t)] = acc / wsum;
    }
    return out;
}

Climatology monthly_climatology(const FieldSeries& series, MonthRange period)
{
    if (period.first < 0 || period.count < 1 || period.end() > series.length())
        throw Error("monthly_climatology: period outside the series");
    const auto n = series.cells();
    const auto& ocean = series.grid()->ocean_cells();

    Climatology clim{series.grid(), period, std::vector<double>(12 * n, 0.0)};
    std::array<int, 12> count{};
    for (int t = period.first; t < period.end(); ++t) {
        const int m = series.time().month_of(t) - 1;
        ++count[static_cast<std::size_t>(m)];
        double* dst = clim.means.data() + static_cast<std::size_t>(m) * n;
        const auto s = series.slice(t);
        for (std::size_t c : ocean)
            dst[c] += s[c];
    }
    for (int m = 0; m < 12; ++m) {
        if (count[static_cast<std::size_t>(m)] == 0)
            throw Error("monthly_climatology: calendar month " + std::to_string(m + 1) +
                        " missing from the period");
        double* dst = clim.means.data() + static_cast<std::size_t>(m) * n;
        const double k = count[static_cast<std::size_t>(m)];
        for (std::size_t c = 0; c < n; ++c)
            dst[c] = series.grid()->is_ocean(c) ? dst[c] / k : land_value;
    }
    return clim;
}

Climatology monthly_climatology(const FieldSeries& series)
{
    return monthly_climatology(series, MonthRange{0, series.length()});
}

FieldSeries anomalies(const FieldSeries& series, const Climatology& clim)
{
    if (!same_grid(series.grid(), clim.grid))
        throw Error("anomalies: grid mismatch between series '" + series.name() + "' and climatology");
    FieldSeries out = series;
    const auto& ocean = series.grid()->ocean_cells();
    for (int t = 0; t < series.length(); ++t) {
        const auto ref = clim.month(series.time().month_of(t));
        auto s = out.slice(t);
        for (std::size_t c : ocean)
            s[c] -= ref[c];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian filter
// ---------------------------------------------------------------------------

std::vector<double> gaussian_kernel(double sigma)
{
    if (!(sigma > 0.0))
        throw Error("gaussian_kernel: sigma must be positive");
    const int r = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int k = -r; k <= r; ++k) {
        const double v = std::exp(-0.5 * (k * k) / (sigma * sigma));
        w[static_cast<std::size_t>(k + r)] = v;
        sum += v;
    }
    for (double& v : w)
        v /= sum;
    return w;
}

void masked_gaussian_filter(std::span<const double> in, std::span<double> out, std::size_t n_lat,
                            std::size_t n_lon, std::span<const std::uint8_t> mask, double sigma)
{
    const auto w = gaussian_kernel(sigma);
    const int r = static_cast<int>(w.size() / 2);
    const std::size_t n = n_lat * n_lon;
    if (in.size() != n || out.size() != n || (!mask.empty() && mask.size() != n))
        throw Error("masked_gaussian_filter: size mismatch");
    auto active = [&](std::size_t c) { return mask.empty() || mask[c] != 0; };

    // Filtering deviations from one reference value keeps constant fields
    // exact fixed points (the deviations are all exactly zero).
    double ref = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        if (active(c)) {
            ref = in[c];
            break;
        }
    }

    // numerator and weight totals, filtered along lon then lat
    std::vector<double> num(n, 0.0), den(n, 0.0), num2(n, 0.0), den2(n, 0.0);
    for (std::size_t i = 0; i < n_lat; ++i) {
        for (std::size_t j = 0; j < n_lon; ++j) {
            double a = 0.0, b = 0.0;
            for (int k = -r; k <= r; ++k) {
                const auto jj = static_cast<std::ptrdiff_t>(j) + k;
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(n_lon))
                    continue;
                const std::size_t c = i * n_lon + static_cast<std::size_t>(jj);
                if (!active(c))
                    continue;
                const double wk = w[static_cast<std::size_t>(k + r)];
                a += wk * (in[c] - ref);
                b += wk;
            }
            num[i * n_lon + j] = a;
            den[i * n_lon + j] = b;
        }
    }
    for (std::size_t i = 0; i < n_lat; ++i) {
        for (std::size_t j = 0; j < n_lon; ++j) {
            double a = 0.0, b = 0.0;
            for (int k = -r; k <= r; ++k) {
                const auto ii = static_cast<std::ptrdiff_t>(i) + k;
                if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(n_lat))
                    continue;
                const std::size_t c = static_cast<std::size_t>(ii) * n_lon + j;
                const double wk = w[static_cast<std::size_t>(k + r)];
                a += wk * num[c];
                b += wk * den[c];
            }
            num2[i * n_lon + j] = a;
            den2[i * n_lon + j] = b;
        }
    }
    for (std::size_t c = 0; c < n; ++c)
        out[c] = active(c) ? ref + num2[c] / den2[c] : land_value;
}

} // namespace mlhc
