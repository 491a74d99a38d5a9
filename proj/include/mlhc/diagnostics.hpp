/**
 * @file diagnostics.hpp
 * @brief Bottleneck contributions and their cross-member spread, free-concept
 *        discrepancy composites, regularisation tables, event retrospectives
 *        and diverging-colour PPM rendering.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mlhc/eval.hpp"
#include "mlhc/nn/network.hpp"

namespace mlhc {

struct ContributionVector {
    std::vector<std::string> labels;
    std::vector<double> weights;
    std::vector<double> contributions;  // |w_k| / sum_j |w_j|
};

/// Throws NumericalError when every weight is zero.
ContributionVector bottleneck_contributions(std::span<const double> weights, std::vector<std::string> labels);
ContributionVector bottleneck_contributions(nn::Network<float>& net);

struct ContributionSpread {
    std::vector<std::string> labels;
    std::vector<double> mean;
    std::vector<double> std;  // population std across members
    double summary = 0.0;     // mean of the per-channel stds
};

/// Needs at least 2 members with identical labels.
ContributionSpread contribution_spread(const std::vector<ContributionVector>& members);

struct SeasonComposite {
    Season season = Season::DJF;
    int n_steps = 0;
    FieldSeries field;  // one step
};

/// Per season (steps as in season_steps) the time mean of pred - free over
/// ocean cells. Throws when the series are misaligned or a season is absent.
std::vector<SeasonComposite> free_concept_discrepancy(const FieldSeries& pred, const FieldSeries& free);

struct RegionBox {
    double lat_min = 0.0, lat_max = 0.0;
    double lon_min = 0.0, lon_max = 0.0;
};

/// Sub-grid of the cells whose centres lie inside the box (edges included).
/// Throws when the box holds no ocean cell.
GridPtr crop_grid(const GeoGrid& grid, const RegionBox& box);
FieldSeries crop_series(const FieldSeries& series, const GridPtr& cropped);

struct RetroField {
    std::string name;
    FieldSeries anomalies;            // cropped to the region, window months
    std::vector<double> region_mean;  // ocean mean per window month
};

struct RetrospectiveReport {
    RegionBox region;
    YearMonth event;
    int window = 6;
    TimeAxis months;
    std::vector<RetroField> fields;  // in the order given
};

/// Anomalies of each field against its full-period monthly climatology over
/// the `window` months ending at `event`, cropped to the region.
RetrospectiveReport retrospective(const std::vector<FieldSeries>& fields, const RegionBox& region, YearMonth event,
                                  int window = 6);

/// Header `field,year,month,region_mean_anomaly`.
std::string retrospective_csv(const RetrospectiveReport& r);

/// r[L] = Pearson(lead[t], follow[t + L]) over the overlap, L = 0..max_lag.
std::vector<double> lagged_correlation(std::span<const double> lead, std::span<const double> follow, int max_lag);
/// Lag of the largest correlation; the first one on ties.
int peak_lag(const std::vector<double>& r);

struct RegRow {
    AccRow row;
    double delta = 0.0;  // row ACC minus prescription_only ACC, same variable and season
};

/// Every row of a seasonal table with its difference to prescription_only.
/// Throws when a prescription_only counterpart is missing or was computed
/// over different cells or steps.
std::vector<RegRow> regularization_report(const std::vector<AccRow>& table);

/// seasonal table columns plus `delta`.
std::string regularization_csv(const std::vector<RegRow>& rows);

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

/// Blue through white to red over [-limit, limit]; values beyond saturate,
/// NaN maps to grey.
Rgb diverging_color(double v, double limit);

/// Binary PPM (P6) of one field, north up, each cell drawn as scale x scale
/// pixels. limit <= 0 picks the largest absolute ocean value.
std::vector<std::uint8_t> ppm_encode(std::span<const double> field, const GeoGrid& grid, double limit = 0.0,
                                     int scale = 4);
void write_ppm(const std::filesystem::path& path, std::span<const double> field, const GeoGrid& grid,
               double limit = 0.0, int scale = 4);

} // namespace mlhc
