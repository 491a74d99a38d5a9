// Shared fixtures for the unit tests.
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "mlhc/grid.hpp"
#include "mlhc/preprocess.hpp"

namespace mlhc::testing {

/// Regular grid; `land` lists flat cell indices to mark as land.
inline GridPtr make_grid(std::size_t n_lat, std::size_t n_lon, std::vector<std::size_t> land = {})
{
    std::vector<std::uint8_t> mask(n_lat * n_lon, 1);
    for (auto c : land)
        mask[c] = 0;
    return std::make_shared<const GeoGrid>(make_regular_grid(n_lat, n_lon, 10.0, 50.0, -70.0, -10.0, mask));
}

/// Grid with a pseudo-random coastline (about `land_frac` of cells are land).
inline GridPtr make_coastal_grid(std::size_t n_lat, std::size_t n_lon, double land_frac, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution land(land_frac);
    std::vector<std::uint8_t> mask(n_lat * n_lon);
    for (auto& m : mask)
        m = land(rng) ? 0 : 1;
    mask[0] = 1;
    return std::make_shared<const GeoGrid>(make_regular_grid(n_lat, n_lon, 10.0, 50.0, -70.0, -10.0, mask));
}

inline FieldSeries random_series(const GridPtr& grid, int months, std::uint64_t seed, double lo = -1.0,
                                 double hi = 1.0, YearMonth start = {2000, 1}, const char* name = "x")
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(months) * grid->n_cells());
    for (auto& x : v)
        x = u(rng);
    return FieldSeries(grid, TimeAxis(start, months), name, "1", std::move(v));
}

inline FieldSeries constant_series(const GridPtr& grid, int months, double c, YearMonth start = {2000, 1})
{
    std::vector<double> v(static_cast<std::size_t>(months) * grid->n_cells(), c);
    return FieldSeries(grid, TimeAxis(start, months), "c", "1", std::move(v));
}

/// Normalised-space data with one member of standard normal fields.
inline std::shared_ptr<PreparedData> random_prepared(int months, int n_lat, int n_lon, int context, std::uint64_t seed,
                                          std::vector<std::size_t> land = {})
{
    auto d = std::make_shared<PreparedData>();
    d->grid = make_grid(std::size_t(n_lat), std::size_t(n_lon), std::move(land));
    d->time = TimeAxis({1990, 1}, months);
    d->cfg.context_months = context;
    d->splits = temporal_split(months, d->cfg.split);
    const std::size_t n = d->grid->n_cells();
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd;
    auto& pm = d->members.emplace_back();
    pm.inputs.resize(std::size_t(months) * 12 * n);
    pm.concepts.resize(std::size_t(months) * 4 * n);
    pm.target.resize(std::size_t(months) * n);
    for (auto* v : {&pm.inputs, &pm.concepts, &pm.target})
        for (auto& x : *v)
            x = nd(rng);
    return d;
}

inline double rel_err(double a, double b)
{
    const double d = std::abs(a - b);
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? d : d / s;
}

} // namespace mlhc::testing
