/**
 * @file preprocess.hpp
 * @brief Conditioning chain and supervised sample assembly.
 *
 * Canonical order: derive concepts -> detrend (inputs, concepts, target) ->
 * clip (inputs, concepts) -> smooth (concepts) -> z-score -> split -> build
 * samples. Split ranges are computed first because clip thresholds and
 * z-score statistics come from training months only.
 */
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mlhc/concepts.hpp"
#include "mlhc/dataset.hpp"
#include "mlhc/grid.hpp"

namespace mlhc {

struct PreprocConfig {
    double clip_lo = 2.0;
    double clip_hi = 98.0;
    double smooth_sigma = 3.0;
    std::array<double, 3> split{0.8, 0.1, 0.1};
    int context_months = 6;
    int lead_months = 1;
    /// Time-invariant inputs: a per-cell line fit would erase them entirely,
    /// so they skip detrending.
    std::vector<std::string> static_variables{"mbathy", "ff"};

    void validate() const;
    bool is_static(std::string_view name) const;
};

struct NormEntry {
    double mean = 0.0;
    double std = 1.0;

    friend bool operator==(const NormEntry&, const NormEntry&) = default;
};

/// Per-quantity z-score statistics, serialised as `name=mean,std` lines.
class NormStats {
public:
    void set(const std::string& name, NormEntry e) { entries_[name] = e; }
    const NormEntry& get(std::string_view name) const;
    bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
    const std::map<std::string, NormEntry, std::less<>>& entries() const noexcept { return entries_; }

    std::string to_text() const;
    static NormStats from_text(std::string_view text);
    void write(const std::filesystem::path& path) const;
    static NormStats read(const std::filesystem::path& path);

    friend bool operator==(const NormStats&, const NormStats&) = default;

private:
    std::map<std::string, NormEntry, std::less<>> entries_;
};

struct Splits {
    MonthRange train, val, test;
    /// Validation and test months together (the out-of-sample period).
    MonthRange out_of_sample() const { return {val.first, val.count + test.count}; }
};

/// Removes the per-cell least-squares line (slope and intercept).
FieldSeries detrend_linear(const FieldSeries& series);

/// Linear-interpolation percentile (the "linear" rule: rank p/100 * (n-1)).
double percentile(std::vector<double> values, double p);

struct ClipThresholds {
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentiles pooled over ocean cells and the reference months of every
/// series given.
ClipThresholds clip_thresholds(std::span<const FieldSeries* const> series, double lo, double hi,
                               MonthRange reference);
FieldSeries clip_values(const FieldSeries& series, ClipThresholds th);
/// Thresholds from `reference` months of this series, applied everywhere.
FieldSeries clip_percentiles(const FieldSeries& series, double lo, double hi, MonthRange reference);

/// Mask-renormalised Gaussian smoothing of every time slice.
FieldSeries gaussian_smooth(const FieldSeries& series, double sigma);

/// Pooled mean and population std over ocean cells and `train` months.
NormEntry zscore_fit(std::span<const FieldSeries* const> series, MonthRange train);
NormEntry zscore_fit(const FieldSeries& series, MonthRange train);
FieldSeries zscore_apply(const FieldSeries& series, NormEntry e);

/// Chronological split: floor(f0 T) train months, floor(f1 T) validation,
/// the remainder test.
Splits temporal_split(int n_months, const std::array<double, 3>& fractions);

/// One member's normalised fields in network layout (f32, land = 0).
struct PreparedMember {
    std::vector<float> inputs;    // [t][12][cell]
    std::vector<float> concepts;  // [t][4][cell]
    std::vector<float> target;    // [t][cell]
};

struct PreparedData {
    GridPtr grid;
    TimeAxis time;
    PreprocConfig cfg;
    Splits splits;
    NormStats stats;
    std::vector<PreparedMember> members;

    std::size_t cells() const { return grid->n_cells(); }
    std::span<const float> input(int member, int t, std::size_t var) const;
    std::span<const float> concept_field(int member, int t, std::size_t k) const;
    std::span<const float> target(int member, int t) const;

    /// Normalised series of one quantity for one member (land = sentinel).
    FieldSeries series(int member, std::string_view name) const;
};

/// Runs detrend, clip, smooth and z-score over all members and packs the
/// result. Statistics are pooled over members and training months.
PreparedData prepare(const std::vector<MemberData>& members, const PreprocConfig& cfg);

/// Rebuilds PreparedData from normalised series (e.g. read back from disk).
PreparedData pack_prepared(const std::vector<Dataset>& normalized, const PreprocConfig& cfg, NormStats stats);

struct SampleRef {
    int member = 0;
    int target_t = 0;  // index on PreparedData::time

    friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

class SampleSet {
public:
    SampleSet(std::shared_ptr<const PreparedData> data, std::string split, MonthRange range,
              std::vector<SampleRef> samples);

    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const std::string& split() const noexcept { return split_; }
    MonthRange range() const noexcept { return range_; }
    const std::vector<SampleRef>& refs() const noexcept { return samples_; }
    const PreparedData& data() const noexcept { return *data_; }
    std::shared_ptr<const PreparedData> data_ptr() const noexcept { return data_; }
    const GridPtr& grid() const noexcept { return data_->grid; }

    int channels() const { return data_->cfg.context_months * 12; }
    /// Months feeding sample i, oldest first.
    std::vector<int> context_months(std::size_t i) const;
    YearMonth target_time(std::size_t i) const { return data_->time.at(samples_[i].target_t); }

    /// X as [context*12][cell]: month-major, variables in input order.
    void input(std::size_t i, std::span<float> out) const;
    void concept_target(std::size_t i, std::span<float> out) const;  // [4][cell]
    void target(std::size_t i, std::span<float> out) const;          // [cell]

private:
    std::shared_ptr<const PreparedData> data_;
    std::string split_;
    MonthRange range_;
    std::vector<SampleRef> samples_;
};

/// Samples whose target and full context lie inside `range`, for every
/// member, ordered by member then target month. Throws if none.
SampleSet build_samples(std::shared_ptr<const PreparedData> data, MonthRange range, std::string split);

struct SplitSamples {
    SampleSet train, val, test;
};
SplitSamples build_split_samples(std::shared_ptr<const PreparedData> data);

} // namespace mlhc
