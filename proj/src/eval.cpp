#include "mlhc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "mlhc/error.hpp"

namespace mlhc {

std::string_view season_name(Season s) noexcept
{
    switch (s) {
    case Season::DJF: return "DJF";
    case Season::MAM: return "MAM";
    case Season::JJA: return "JJA";
    case Season::SON: return "SON";
    }
    return "?";
}

Season season_of_month(int month)
{
    if (month < 1 || month > 12)
        throw Error("season_of_month: month must be in 1..12, got " + std::to_string(month));
    if (month == 12 || month <= 2)
        return Season::DJF;
    if (month <= 5)
        return Season::MAM;
    if (month <= 8)
        return Season::JJA;
    return Season::SON;
}

std::vector<int> season_steps(const TimeAxis& axis, Season s)
{
    std::vector<int> out;
    if (s != Season::DJF) {
        for (int t = 0; t < axis.length(); ++t)
            if (season_of_month(axis.month_of(t)) == s)
                out.push_back(t);
        return out;
    }
    // winter year -> its December, January and February steps
    std::map<int, std::vector<int>> winters;
    for (int t = 0; t < axis.length(); ++t) {
        const auto ym = axis.at(t);
        if (ym.month == 12)
            winters[ym.year + 1].push_back(t);
        else if (ym.month <= 2)
            winters[ym.year].push_back(t);
    }
    for (const auto& [year, steps] : winters)
        if (steps.size() == 3)
            out.insert(out.end(), steps.begin(), steps.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::string_view acc_mode_name(AccMode m) noexcept
{
    return m == AccMode::pooled ? "pooled" : "map_mean";
}

namespace {

struct SeasonAnomalies {
    FieldSeries pred, target;
    std::vector<int> steps;
};

SeasonAnomalies season_anomalies(const FieldSeries& pred, const FieldSeries& target, const Climatology& clim,
                                 Season s)
{
    if (!same_grid(pred.grid(), target.grid()) || !(pred.time() == target.time()))
        throw Error("acc: prediction '" + pred.name() + "' and target '" + target.name() + "' are not aligned");
    auto steps = season_steps(target.time(), s);
    if (steps.size() < 2)
        throw Error("acc: season " + std::string(season_name(s)) + " has " + std::to_string(steps.size()) +
                    " step(s), need at least 2");
    return {anomalies(pred, clim), anomalies(target, clim), std::move(steps)};
}

bool constant_over(const FieldSeries& f, const std::vector<int>& steps, std::size_t c)
{
    const double first = f.at(steps.front(), c);
    for (int t : steps)
        if (f.at(t, c) != first)
            return false;
    return true;
}

double clamp_corr(double r)
{
    return std::clamp(r, -1.0, 1.0);
}

} // namespace

FieldSeries acc_map(const FieldSeries& pred, const FieldSeries& target, const Climatology& clim, Season s)
{
    const auto a = season_anomalies(pred, target, clim, s);
    FieldSeries out(target.grid(), TimeAxis(target.time().at(a.steps.front()), 1), "acc", "1");
    const double n = static_cast<double>(a.steps.size());
    for (std::size_t c : target.grid()->ocean_cells()) {
        if (constant_over(a.pred, a.steps, c) || constant_over(a.target, a.steps, c)) {
            out.at(0, c) = land_value;
            continue;
        }
        double mp = 0.0, mt = 0.0;
        for (int t : a.steps) {
            mp += a.pred.at(t, c);
            mt += a.target.at(t, c);
        }
        mp /= n;
        mt /= n;
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (int t : a.steps) {
            const double dp = a.pred.at(t, c) - mp;
            const double dt = a.target.at(t, c) - mt;
            sxy += dp * dt;
            sxx += dp * dp;
            syy += dt * dt;
        }
        out.at(0, c) = clamp_corr(sxy / std::sqrt(sxx * syy));
    }
    return out;
}

AccValue acc_scalar(const FieldSeries& pred, const FieldSeries& target, const Climatology& clim, Season s,
                    AccMode mode)
{
    AccValue v;
    if (mode == AccMode::map_mean) {
        const auto map = acc_map(pred, target, clim, s);
        v.n_steps = static_cast<int>(season_steps(target.time(), s).size());
        double sum = 0.0;
        for (std::size_t c : target.grid()->ocean_cells()) {
            if (std::isnan(map.at(0, c))) {
                ++v.excluded_cells;
                continue;
            }
            sum += map.at(0, c);
            ++v.n_cells;
        }
        if (v.n_cells == 0)
            throw NumericalError("acc: no cell with nonzero anomaly variance");
        v.acc = clamp_corr(sum / static_cast<double>(v.n_cells));
        return v;
    }

    const auto a = season_anomalies(pred, target, clim, s);
    v.n_steps = static_cast<int>(a.steps.size());
    std::vector<std::size_t> cells;
    for (std::size_t c : target.grid()->ocean_cells()) {
        if (constant_over(a.pred, a.steps, c) || constant_over(a.target, a.steps, c))
            ++v.excluded_cells;
        else
            cells.push_back(c);
    }
    if (cells.empty())
        throw NumericalError("acc: no cell with nonzero anomaly variance");
    v.n_cells = cells.size();

    const double n = static_cast<double>(cells.size() * a.steps.size());
    double mp = 0.0, mt = 0.0;
    for (std::size_t c : cells)
        for (int t : a.steps) {
            mp += a.pred.at(t, c);
            mt += a.target.at(t, c);
        }
    mp /= n;
    mt /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t c : cells)
        for (int t : a.steps) {
            const double dp = a.pred.at(t, c) - mp;
            const double dt = a.target.at(t, c) - mt;
            sxy += dp * dt;
            sxx += dp * dp;
            syy += dt * dt;
        }
    v.acc = clamp_corr(sxy / std::sqrt(sxx * syy));
    return v;
}

std::vector<AccRow> seasonal_table(const PredictionsByConfig& preds, const std::map<std::string, FieldSeries>& targets,
                                   AccMode mode)
{
    if (preds.empty())
        throw Error("seasonal_table: no configuration given");
    for (const auto& [config, _] : preds)
        nn::parse_mode(config);

    const TimeAxis* axis = nullptr;
    for (const auto& [config, vars] : preds) {
        for (const auto& [var, series] : vars) {
            if (!axis)
                axis = &series.time();
            else if (!(series.time() == *axis))
                throw Error("seasonal_table: configuration '" + config + "' variable '" + var +
                            "' covers different months");
        }
    }

    std::vector<AccRow> rows;
    for (auto var_view : eval_variables) {
        const std::string var(var_view);
        const bool is_target = var == target_variable;
        const auto tgt = targets.find(var);
        if (tgt == targets.end())
            throw Error("seasonal_table: missing target for '" + var + "'");
        const auto clim = monthly_climatology(tgt->second);
        for (nn::Mode m : nn::all_modes) {
            const std::string config(nn::mode_name(m));
            const auto cfg = preds.find(config);
            if (cfg == preds.end() || (m == nn::Mode::prediction_only && !is_target))
                continue;
            const auto p = cfg->second.find(var);
            if (p == cfg->second.end())
                throw Error("seasonal_table: configuration '" + config + "' lacks a prediction of '" + var + "'");
            for (Season s : all_seasons)
                rows.push_back({var, config, s, acc_scalar(p->second, tgt->second, clim, s, mode)});
        }
    }
    return rows;
}

std::string acc_table_csv(const std::vector<AccRow>& rows)
{
    std::string out = "variable,config,season,acc,n_cells,n_steps\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.value.acc);
        out += r.variable + "," + r.config + "," + std::string(season_name(r.season)) + "," + buf + "," +
               std::to_string(r.value.n_cells) + "," + std::to_string(r.value.n_steps) + "\n";
    }
    return out;
}

SampleSet member_samples(const SampleSet& set, int member)
{
    std::vector<SampleRef> refs;
    for (const auto& r : set.refs())
        if (r.member == member)
            refs.push_back(r);
    if (refs.empty())
        throw Error("member_samples: no sample of member " + std::to_string(member));
    return SampleSet(set.data_ptr(), set.split(), set.range(), std::move(refs));
}

namespace {

MonthRange consecutive_targets(const SampleSet& set)
{
    if (set.empty())
        throw Error("series_from_samples: empty sample set");
    const auto& refs = set.refs();
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].member != refs[0].member || refs[i].target_t != refs[0].target_t + static_cast<int>(i))
            throw Error("series_from_samples: samples are not one member's consecutive months");
    }
    return {refs[0].target_t, static_cast<int>(refs.size())};
}

template <class V>
FieldSeries series_from(const SampleSet& set, const std::vector<V>& values, int channels, int k, std::string name)
{
    const auto range = consecutive_targets(set);
    const std::size_t n = set.data().cells();
    if (k < 0 || k >= channels || values.size() != set.size() * std::size_t(channels) * n)
        throw Error("series_from_samples: value layout does not match the sample set");
    FieldSeries out(set.grid(), set.data().time.slice(range.first, range.count), std::move(name), "1");
    for (std::size_t i = 0; i < set.size(); ++i) {
        const V* src = values.data() + (i * std::size_t(channels) + std::size_t(k)) * n;
        for (std::size_t c : set.grid()->ocean_cells())
            out.at(static_cast<int>(i), c) = static_cast<double>(src[c]);
    }
    return out;
}

} // namespace

FieldSeries series_from_samples(const SampleSet& set, const std::vector<double>& values, int channels, int k,
                                std::string name)
{
    return series_from(set, values, channels, k, std::move(name));
}

FieldSeries series_from_samples(const SampleSet& set, const std::vector<float>& values, int channels, int k,
                                std::string name)
{
    return series_from(set, values, channels, k, std::move(name));
}

FieldSeries target_series(const SampleSet& set, std::string_view name)
{
    const auto range = consecutive_targets(set);
    return set.data().series(set.refs()[0].member, name).slice_time(range.first, range.count);
}

BasinSeries basin_timeseries(const FieldSeries& target, const FieldSeries& mean, const FieldSeries* std)
{
    if (!same_grid(target.grid(), mean.grid()) || !(target.time() == mean.time()))
        throw Error("basin_timeseries: target and ensemble mean are not aligned");
    BasinSeries b;
    b.time = target.time();
    b.target = basin_mean(target);
    b.mean = basin_mean(mean);
    if (!std) {
        b.lower = b.mean;
        b.upper = b.mean;
        return b;
    }
    if (!same_grid(std->grid(), mean.grid()) || !(std->time() == mean.time()))
        throw Error("basin_timeseries: ensemble std is not aligned");
    FieldSeries lo = mean, hi = mean;
    for (std::size_t i = 0; i < mean.values().size(); ++i) {
        lo.values()[i] -= 2.0 * std->values()[i];
        hi.values()[i] += 2.0 * std->values()[i];
    }
    b.lower = basin_mean(lo);
    b.upper = basin_mean(hi);
    return b;
}

std::string basin_csv(const BasinSeries& b)
{
    std::string out = "year,month,target,mean,lower,upper\n";
    char buf[160];
    for (int t = 0; t < b.time.length(); ++t) {
        const auto ym = b.time.at(t);
        const auto i = static_cast<std::size_t>(t);
        std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.6f,%.6f\n", ym.year, ym.month, b.target[i], b.mean[i],
                      b.lower[i], b.upper[i]);
        out += buf;
    }
    return out;
}

} // namespace mlhc
