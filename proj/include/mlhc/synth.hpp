/**
 * @file synth.hpp
 * @brief Synthetic stand-in for an ocean reanalysis: twelve input variables
 *        per member plus a linear-teacher MLHC target.
 *
 * Every time-varying input is
 *
 *   mean + spread * P(x) + amplitude * (1 + 0.5 A(x)) * sin(2 pi (m-1)/12 + phase)
 *        + trend * t / 120 + noise_std * e(x, t)
 *
 * where P and A are smooth unit-variance spatial patterns shared by all
 * members and e is spatially smooth AR(1) noise drawn from a per-member
 * stream. Members therefore share the climate signal and differ only in
 * noise. Stream seeds are FNV-1a hashes of (master_seed, member, name); they
 * reproduce only within this implementation.
 */
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "mlhc/concepts.hpp"
#include "mlhc/dataset.hpp"

namespace mlhc {

struct VariableSpec {
    double mean = 0.0;
    double spread = 0.0;              // amplitude of the static spatial pattern
    double seasonal_amplitude = 0.0;
    double phase = 0.0;               // radians
    double trend_per_decade = 0.0;    // units per 120 months
    double noise_std = 0.0;
};

struct SynthConfig {
    std::size_t n_lat = 48;
    std::size_t n_lon = 64;
    double lat_min = 20.0, lat_max = 60.0;
    double lon_min = -80.0, lon_max = -10.0;
    int years = 20;
    YearMonth start{1980, 1};
    int n_members = 5;
    std::uint64_t master_seed = 20240917;
    double spatial_scale = 4.0;       // grid cells
    double ar1_coeff = 0.7;
    double coastline_fraction = 0.15;
    std::array<double, 4> generative_weights{0.4, 0.3, 0.2, 0.1};
    double generative_noise_std = 0.1;
    double min_mixed_layer_depth = 10.0;  // m, floor applied to somxl010
    /// Indexed like input_variables; mbathy, ff and sowsc use their own rules.
    std::array<VariableSpec, 12> variables = default_variables();

    static std::array<VariableSpec, 12> default_variables();
    /// Throws ConfigError listing every violated invariant.
    void validate() const;
    VariableSpec& spec(std::string_view name);
    const VariableSpec& spec(std::string_view name) const;
};

std::uint64_t stream_seed(std::uint64_t master_seed, std::int64_t member, std::string_view name);

/// Ocean mask and coordinates shared by every member.
GridPtr synth_grid(const SynthConfig& cfg);

/// The twelve input variables of one member, rounded to f32 precision.
Dataset generate_member(const SynthConfig& cfg, int member);

struct ConceptZStats {
    std::array<double, 4> mean{};
    std::array<double, 4> std{};
};

/// Pooled mean and population std of each concept over ocean cells and all months.
ConceptZStats concept_zscore_stats(const ConceptSet& concepts);

/// MLHC(t) = sum_k w_k z(C_k(t-1)) + eps(t). The result starts one month
/// after the concepts and is one month shorter. Rounded to f32 precision.
FieldSeries generate_target(const SynthConfig& cfg, int member, const ConceptSet& concepts);

/// Convenience: inputs, concepts and target for one member, all trimmed to
/// the target's time axis (input months 2..T-1).
MemberData generate_member_data(const SynthConfig& cfg, int member, const PhysConstants& k = {});

} // namespace mlhc
