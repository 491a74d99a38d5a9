#include "mlhc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mlhc/bytes.hpp"
#include "mlhc/error.hpp"

namespace mlhc {

ContributionVector bottleneck_contributions(std::span<const double> weights, std::vector<std::string> labels)
{
    if (weights.size() != labels.size())
        throw Error("bottleneck_contributions: " + std::to_string(weights.size()) + " weights for " +
                    std::to_string(labels.size()) + " labels");
    double total = 0.0;
    for (double w : weights)
        total += std::abs(w);
    if (!(total > 0.0))
        throw NumericalError("bottleneck_contributions: all combine weights are zero");
    ContributionVector v;
    v.labels = std::move(labels);
    v.weights.assign(weights.begin(), weights.end());
    for (double w : weights)
        v.contributions.push_back(std::abs(w) / total);
    return v;
}

ContributionVector bottleneck_contributions(nn::Network<float>& net)
{
    const auto& w = net.combine().weight().value;
    std::vector<double> wd(w.begin(), w.end());
    return bottleneck_contributions(wd, net.config().channel_labels());
}

ContributionSpread contribution_spread(const std::vector<ContributionVector>& members)
{
    if (members.size() < 2)
        throw Error("contribution_spread: needs at least 2 members");
    const auto& labels = members.front().labels;
    for (const auto& m : members)
        if (m.labels != labels || m.contributions.size() != labels.size())
            throw Error("contribution_spread: members carry different channel labels");

    const std::size_t k = labels.size();
    const double n = static_cast<double>(members.size());
    ContributionSpread s;
    s.labels = labels;
    s.mean.assign(k, 0.0);
    s.std.assign(k, 0.0);
    for (const auto& m : members)
        for (std::size_t j = 0; j < k; ++j)
            s.mean[j] += m.contributions[j];
    for (auto& v : s.mean)
        v /= n;
    for (const auto& m : members)
        for (std::size_t j = 0; j < k; ++j) {
            const double d = m.contributions[j] - s.mean[j];
            s.std[j] += d * d;
        }
    for (auto& v : s.std) {
        v = std::sqrt(v / n);
        s.summary += v;
    }
    s.summary /= static_cast<double>(k);
    return s;
}

std::vector<SeasonComposite> free_concept_discrepancy(const FieldSeries& pred, const FieldSeries& free)
{
    if (!same_grid(pred.grid(), free.grid()) || !(pred.time() == free.time()))
        throw Error("free_concept_discrepancy: prediction and free concept are not aligned");
    std::vector<SeasonComposite> out;
    for (Season s : all_seasons) {
        const auto steps = season_steps(pred.time(), s);
        if (steps.empty())
            throw Error("free_concept_discrepancy: no " + std::string(season_name(s)) + " step in the period");
        SeasonComposite c{s, static_cast<int>(steps.size()),
                          FieldSeries(pred.grid(), TimeAxis(pred.time().at(steps.front()), 1), "discrepancy", "1")};
        for (std::size_t cell : pred.grid()->ocean_cells()) {
            double sum = 0.0;
            for (int t : steps)
                sum += pred.at(t, cell) - free.at(t, cell);
            c.field.at(0, cell) = sum / static_cast<double>(steps.size());
        }
        out.push_back(std::move(c));
    }
    return out;
}

GridPtr crop_grid(const GeoGrid& grid, const RegionBox& box)
{
    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < grid.n_lat(); ++i)
        if (grid.lat()[i] >= box.lat_min && grid.lat()[i] <= box.lat_max)
            rows.push_back(i);
    for (std::size_t j = 0; j < grid.n_lon(); ++j)
        if (grid.lon()[j] >= box.lon_min && grid.lon()[j] <= box.lon_max)
            cols.push_back(j);
    std::vector<double> lat, lon;
    std::vector<std::uint8_t> mask;
    bool any = false;
    for (std::size_t i : rows)
        lat.push_back(grid.lat()[i]);
    for (std::size_t j : cols)
        lon.push_back(grid.lon()[j]);
    for (std::size_t i : rows)
        for (std::size_t j : cols) {
            mask.push_back(grid.mask()[grid.index(i, j)]);
            any = any || mask.back();
        }
    if (!any)
        throw Error("region box holds no ocean cell");
    return std::make_shared<const GeoGrid>(std::move(lat), std::move(lon), std::move(mask));
}

FieldSeries crop_series(const FieldSeries& series, const GridPtr& cropped)
{
    const GeoGrid& g = *series.grid();
    const auto i0 = static_cast<std::size_t>(std::find(g.lat().begin(), g.lat().end(), cropped->lat().front()) -
                                             g.lat().begin());
    const auto j0 = static_cast<std::size_t>(std::find(g.lon().begin(), g.lon().end(), cropped->lon().front()) -
                                             g.lon().begin());
    if (i0 + cropped->n_lat() > g.n_lat() || j0 + cropped->n_lon() > g.n_lon())
        throw Error("crop_series: cropped grid is not part of the series grid");
    FieldSeries out(cropped, series.time(), series.name(), series.units());
    for (int t = 0; t < series.length(); ++t)
        for (std::size_t i = 0; i < cropped->n_lat(); ++i)
            for (std::size_t j = 0; j < cropped->n_lon(); ++j)
                if (cropped->is_ocean(i, j))
                    out.at(t, cropped->index(i, j)) = series.at(t, g.index(i0 + i, j0 + j));
    return out;
}

RetrospectiveReport retrospective(const std::vector<FieldSeries>& fields, const RegionBox& region, YearMonth event,
                                  int window)
{
    if (window < 1)
        throw Error("retrospective: window must be >= 1");
    if (fields.empty())
        throw Error("retrospective: no field given");
    RetrospectiveReport r{region, event, window, {}, {}};
    const auto cropped = crop_grid(*fields.front().grid(), region);
    for (const auto& f : fields) {
        if (!same_grid(f.grid(), fields.front().grid()))
            throw Error("retrospective: field '" + f.name() + "' is on a different grid");
        const int last = f.time().index_of(event);
        const int first = last - window + 1;
        if (first < 0 || last >= f.length())
            throw Error("retrospective: window months are not all inside field '" + f.name() + "'");
        const auto anom = anomalies(f, monthly_climatology(f)).slice_time(first, window);
        RetroField rf{f.name(), crop_series(anom, cropped), {}};
        rf.region_mean = basin_mean(rf.anomalies);
        if (r.fields.empty())
            r.months = anom.time();
        r.fields.push_back(std::move(rf));
    }
    return r;
}

std::string retrospective_csv(const RetrospectiveReport& r)
{
    std::string out = "field,year,month,region_mean_anomaly\n";
    char buf[96];
    for (const auto& f : r.fields)
        for (int t = 0; t < r.months.length(); ++t) {
            const auto ym = r.months.at(t);
            std::snprintf(buf, sizeof buf, ",%d,%d,%.6f\n", ym.year, ym.month, f.region_mean[std::size_t(t)]);
            out += f.name + buf;
        }
    return out;
}

std::vector<double> lagged_correlation(std::span<const double> lead, std::span<const double> follow, int max_lag)
{
    if (lead.size() != follow.size())
        throw Error("lagged_correlation: series differ in length");
    if (max_lag < 0 || static_cast<std::size_t>(max_lag) + 2 > lead.size())
        throw Error("lagged_correlation: max_lag leaves fewer than 2 overlapping steps");
    std::vector<double> r;
    for (int lag = 0; lag <= max_lag; ++lag) {
        const std::size_t n = lead.size() - static_cast<std::size_t>(lag);
        double ma = 0.0, mb = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            ma += lead[t];
            mb += follow[t + std::size_t(lag)];
        }
        ma /= static_cast<double>(n);
        mb /= static_cast<double>(n);
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double a = lead[t] - ma;
            const double b = follow[t + std::size_t(lag)] - mb;
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        r.push_back(saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0);
    }
    return r;
}

int peak_lag(const std::vector<double>& r)
{
    if (r.empty())
        throw Error("peak_lag: empty correlation vector");
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

std::vector<RegRow> regularization_report(const std::vector<AccRow>& table)
{
    const std::string ref_config(nn::mode_name(nn::Mode::prescription_only));
    std::vector<RegRow> out;
    for (const auto& row : table) {
        const auto ref = std::find_if(table.begin(), table.end(), [&](const AccRow& r) {
            return r.config == ref_config && r.variable == row.variable && r.season == row.season;
        });
        if (ref == table.end())
            throw Error("regularization_report: no prescription_only row for " + row.variable + " " +
                        std::string(season_name(row.season)));
        if (ref->value.n_cells != row.value.n_cells || ref->value.n_steps != row.value.n_steps)
            throw Error("regularization_report: " + row.config + " and prescription_only differ in samples for " +
                        row.variable + " " + std::string(season_name(row.season)));
        out.push_back({row, row.value.acc - ref->value.acc});
    }
    return out;
}

std::string regularization_csv(const std::vector<RegRow>& rows)
{
    std::string out = "variable,config,season,acc,n_cells,n_steps,delta\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.row.value.acc);
        std::string line = r.row.variable + "," + r.row.config + "," + std::string(season_name(r.row.season)) + "," +
                           buf + "," + std::to_string(r.row.value.n_cells) + "," +
                           std::to_string(r.row.value.n_steps);
        std::snprintf(buf, sizeof buf, ",%.6f\n", r.delta);
        out += line + buf;
    }
    return out;
}

Rgb diverging_color(double v, double limit)
{
    if (std::isnan(v))
        return {128, 128, 128};
    constexpr double cold[3] = {59, 76, 192};
    constexpr double warm[3] = {180, 4, 38};
    const double t = limit > 0.0 ? std::clamp(v / limit, -1.0, 1.0) : 0.0;
    const double* end = t < 0.0 ? cold : warm;
    const double a = std::abs(t);
    auto mix = [&](int k) { return static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - a) + end[k] * a)); };
    return {mix(0), mix(1), mix(2)};
}

std::vector<std::uint8_t> ppm_encode(std::span<const double> field, const GeoGrid& grid, double limit, int scale)
{
    if (field.size() != grid.n_cells())
        throw Error("ppm_encode: field size does not match the grid");
    if (scale < 1)
        throw Error("ppm_encode: scale must be >= 1");
    if (!(limit > 0.0)) {
        limit = 0.0;
        for (std::size_t c : grid.ocean_cells())
            if (std::isfinite(field[c]))
                limit = std::max(limit, std::abs(field[c]));
    }
    const std::size_t w = grid.n_lon() * std::size_t(scale), h = grid.n_lat() * std::size_t(scale);
    const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + w * h * 3);
    const bool north_first = grid.n_lat() < 2 || grid.lat()[0] > grid.lat()[1];
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t r = y / std::size_t(scale);
        const std::size_t i = north_first ? r : grid.n_lat() - 1 - r;
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t c = grid.index(i, x / std::size_t(scale));
            const Rgb px = grid.is_ocean(c) ? diverging_color(field[c], limit) : diverging_color(land_value, 1.0);
            out.insert(out.end(), {px.r, px.g, px.b});
        }
    }
    return out;
}

void write_ppm(const std::filesystem::path& path, std::span<const double> field, const GeoGrid& grid, double limit,
               int scale)
{
    write_file_bytes(path, ppm_encode(field, grid, limit, scale));
}

} // namespace mlhc
