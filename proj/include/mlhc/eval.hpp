/**
 * @file eval.hpp
 * @brief Forecast verification: seasonal anomaly correlation, tables and
 *        basin-mean series.
 *
 * Anomalies are taken against a monthly climatology of the target fitted on
 * the evaluation period itself.
 */
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mlhc/ensemble.hpp"
#include "mlhc/grid.hpp"
#include "mlhc/preprocess.hpp"

namespace mlhc {

enum class Season { DJF, MAM, JJA, SON };
inline constexpr std::array<Season, 4> all_seasons = {Season::DJF, Season::MAM, Season::JJA, Season::SON};

std::string_view season_name(Season s) noexcept;
Season season_of_month(int month);

/// Time indices of `axis` in season `s`, ascending. December of year Y belongs
/// to the winter of Y+1 with its January and February; winters missing any of
/// their three months on the axis are dropped.
std::vector<int> season_steps(const TimeAxis& axis, Season s);

/// Variables of the seasonal tables, in row order.
inline constexpr std::array<std::string_view, 5> eval_variables = {"mlhc", "mxl_tendency", "von2", "vohfe", "vos2"};

enum class AccMode {
    pooled,    // Pearson over all (ocean cell, season step) anomaly pairs
    map_mean,  // ocean mean of acc_map
};
std::string_view acc_mode_name(AccMode m) noexcept;

struct AccValue {
    double acc = 0.0;
    std::size_t n_cells = 0;        // cells contributing
    std::size_t excluded_cells = 0; // ocean cells with zero anomaly variance
    int n_steps = 0;
};

/// Per ocean cell Pearson correlation of pred and target anomalies over the
/// season's steps, as a one-step series. Cells where either anomaly series is
/// constant hold the land sentinel. Throws for misaligned inputs or fewer
/// than 2 season steps.
FieldSeries acc_map(const FieldSeries& pred, const FieldSeries& target, const Climatology& clim, Season s);

/// Scalar ACC. Zero-variance cells are left out in both modes. Throws
/// NumericalError when no cell remains.
AccValue acc_scalar(const FieldSeries& pred, const FieldSeries& target, const Climatology& clim, Season s,
                    AccMode mode = AccMode::pooled);

struct AccRow {
    std::string variable;
    std::string config;
    Season season = Season::DJF;
    AccValue value;
};

/// config name -> variable name -> prediction series.
using PredictionsByConfig = std::map<std::string, std::map<std::string, FieldSeries>>;

/// Rows for every variable of eval_variables, every configuration present in
/// `preds` (prediction_only only for the target) and every season, ordered
/// variable, then configuration as in nn::all_modes, then season. Each
/// variable's climatology is fitted on its whole target series. Throws when a
/// required prediction or target is missing or the configurations were not
/// evaluated on the same months.
std::vector<AccRow> seasonal_table(const PredictionsByConfig& preds, const std::map<std::string, FieldSeries>& targets,
                                   AccMode mode = AccMode::pooled);

/// Header `variable,config,season,acc,n_cells,n_steps`.
std::string acc_table_csv(const std::vector<AccRow>& rows);

/// Restricts a sample set to one data member.
SampleSet member_samples(const SampleSet& set, int member);

/// Series from per-sample values laid out [sample][channels][cell], taking
/// channel k. Samples must be one member's consecutive target months.
FieldSeries series_from_samples(const SampleSet& set, const std::vector<double>& values, int channels, int k,
                                std::string name);
FieldSeries series_from_samples(const SampleSet& set, const std::vector<float>& values, int channels, int k,
                                std::string name);
/// The normalised series of `name` over the set's target months.
FieldSeries target_series(const SampleSet& set, std::string_view name);

struct BasinSeries {
    TimeAxis time;
    std::vector<double> target, mean, lower, upper;
};

/// basin_mean of the target, the ensemble mean and the band edges
/// mean -/+ 2 std. Without `std` the band collapses onto the mean.
BasinSeries basin_timeseries(const FieldSeries& target, const FieldSeries& mean, const FieldSeries* std = nullptr);

/// Header `year,month,target,mean,lower,upper`.
std::string basin_csv(const BasinSeries& b);

} // namespace mlhc
