#include "mlhc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "mlhc/error.hpp"
#include "mlhc/ogf.hpp"

namespace mlhc {

namespace {

constexpr double earth_omega = 7.2921e-5;  // rad s-1

std::size_t variable_index(std::string_view name)
{
    for (std::size_t k = 0; k < input_variables.size(); ++k)
        if (input_variables[k] == name)
            return k;
    throw Error("unknown input variable '" + std::string(name) + "'");
}

/// Gaussian-filtered white noise scaled to unit variance away from the edges.
class SmoothNoise {
public:
    SmoothNoise(std::size_t n_lat, std::size_t n_lon, double scale)
        : n_lat_(n_lat), n_lon_(n_lon), scale_(scale), white_(n_lat * n_lon), out_(n_lat * n_lon)
    {
        const auto w = gaussian_kernel(scale);
        double s2 = 0.0;
        for (double v : w)
            s2 += v * v;
        gain_ = 1.0 / s2;  // 1 / sqrt((sum w^2)^2)
    }

    std::span<const double> draw(std::mt19937_64& rng)
    {
        std::normal_distribution<double> n01;
        for (auto& v : white_)
            v = n01(rng);
        masked_gaussian_filter(white_, out_, n_lat_, n_lon_, {}, scale_);
        for (auto& v : out_)
            v *= gain_;
        return out_;
    }

private:
    std::size_t n_lat_, n_lon_;
    double scale_;
    double gain_ = 1.0;
    std::vector<double> white_, out_;
};

std::vector<double> smooth_pattern(const SynthConfig& cfg, std::string_view tag)
{
    std::mt19937_64 rng(stream_seed(cfg.master_seed, -1, tag));
    SmoothNoise noise(cfg.n_lat, cfg.n_lon, cfg.spatial_scale);
    auto p = noise.draw(rng);
    return {p.begin(), p.end()};
}

FieldSeries finish(FieldSeries s)
{
    quantize_f32(s);
    s.validate();
    return s;
}

/// Seasonal + trend + AR(1) series for one variable.
FieldSeries generic_variable(const SynthConfig& cfg, const GridPtr& grid, const TimeAxis& axis, int member,
                             std::string_view name, std::string_view units, const VariableSpec& spec)
{
    const std::size_t n = grid->n_cells();
    const auto base = smooth_pattern(cfg, std::string(name) + "/base");
    const auto amp = smooth_pattern(cfg, std::string(name) + "/amplitude");

    FieldSeries out(grid, axis, std::string(name), std::string(units));
    std::mt19937_64 rng(stream_seed(cfg.master_seed, member, name));
    SmoothNoise noise(cfg.n_lat, cfg.n_lon, cfg.spatial_scale);
    std::vector<double> ar(n, 0.0);
    const double phi = cfg.ar1_coeff;
    const double innov = std::sqrt(1.0 - phi * phi);
    const bool noisy = spec.noise_std != 0.0;

    for (int t = 0; t < axis.length(); ++t) {
        if (noisy) {
            const auto eta = noise.draw(rng);
            for (std::size_t c = 0; c < n; ++c)
                ar[c] = t == 0 ? eta[c] : phi * ar[c] + innov * eta[c];
        }
        const double season =
            std::sin(2.0 * std::numbers::pi * (axis.month_of(t) - 1) / 12.0 + spec.phase);
        const double trend = spec.trend_per_decade * static_cast<double>(t) / 120.0;
        auto dst = out.slice(t);
        for (std::size_t c : grid->ocean_cells()) {
            const double a = std::clamp(1.0 + 0.5 * amp[c], 0.25, 1.75);
            dst[c] = spec.mean + spec.spread * base[c] + spec.seasonal_amplitude * a * season + trend +
                     spec.noise_std * ar[c];
        }
    }
    return out;
}

} // namespace

std::array<VariableSpec, 12> SynthConfig::default_variables()
{
    std::array<VariableSpec, 12> v{};
    // mean, spread, seasonal amplitude, phase, trend/decade, noise
    v[0] = {18.0, 3.0, 3.0, -2.0, 0.2, 0.5};       // sosstsst
    v[1] = {35.0, 0.4, 0.2, 0.5, 0.0, 0.1};        // sosaline
    v[2] = {0.0, 0.2, 0.05, -2.0, 0.03, 0.03};     // sossheig
    v[3] = {70.0, 12.0, 30.0, 1.0, 0.0, 10.0};     // somxl010
    v[4] = {0.0, 20.0, 120.0, -1.6, 0.0, 25.0};    // sohefldo
    v[5] = {0.0, 0.04, 0.05, 0.3, 0.0, 0.05};      // vozocrtx_ml
    v[6] = {0.0, 0.04, 0.04, 1.3, 0.0, 0.05};      // vomecrty_ml
    v[7] = {1.2, 0.4, 1.0, -1.8, 0.0, 0.4};        // votempdiff
    v[8] = {-0.05, 0.04, 0.05, 0.9, 0.0, 0.03};    // vosaldiff
    v[9] = {3000.0, 1000.0, 0.0, 0.0, 0.0, 0.0};   // mbathy (static)
    v[10] = {};                                    // ff from latitude
    v[11] = {0.0, 0.08, 0.06, 0.7, 0.0, 0.03};     // sowsc: applied to the wind stress components
    return v;
}

VariableSpec& SynthConfig::spec(std::string_view name) { return variables[variable_index(name)]; }
const VariableSpec& SynthConfig::spec(std::string_view name) const { return variables[variable_index(name)]; }

void SynthConfig::validate() const
{
    std::ostringstream err;
    if (n_lat < 3 || n_lon < 3)
        err << "  grid must be at least 3x3\n";
    if (!(lat_min < lat_max) || lat_min < -90.0 || lat_max > 90.0)
        err << "  latitude extent invalid\n";
    if (!(lon_min < lon_max) || lon_min < -180.0 || lon_max >= 360.0)
        err << "  longitude extent invalid\n";
    if (years < 3)
        err << "  years must be >= 3\n";
    if (start.month < 1 || start.month > 12)
        err << "  start month must be 1..12\n";
    if (n_members < 1)
        err << "  n_members must be >= 1\n";
    if (!(spatial_scale > 0.0))
        err << "  spatial_scale must be positive\n";
    if (!(ar1_coeff >= 0.0 && ar1_coeff < 1.0))
        err << "  ar1_coeff must be in [0, 1)\n";
    if (!(coastline_fraction >= 0.0 && coastline_fraction < 1.0))
        err << "  coastline_fraction must be in [0, 1)\n";
    for (double w : generative_weights)
        if (!std::isfinite(w))
            err << "  generative_weights must be finite\n";
    if (!(generative_noise_std >= 0.0))
        err << "  generative_noise_std must be >= 0\n";
    if (!(min_mixed_layer_depth > 0.0))
        err << "  min_mixed_layer_depth must be positive\n";
    for (std::size_t k = 0; k < variables.size(); ++k)
        if (!(variables[k].noise_std >= 0.0))
            err << "  noise_std of " << input_variables[k] << " must be >= 0\n";
    const auto msg = err.str();
    if (!msg.empty())
        throw ConfigError("invalid synthetic data configuration:\n" + msg);
}

std::uint64_t stream_seed(std::uint64_t master_seed, std::int64_t member, std::string_view name)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint8_t b) {
        h ^= b;
        h *= 0x100000001b3ull;
    };
    for (int k = 0; k < 8; ++k)
        mix(static_cast<std::uint8_t>(master_seed >> (8 * k)));
    for (int k = 0; k < 8; ++k)
        mix(static_cast<std::uint8_t>(static_cast<std::uint64_t>(member) >> (8 * k)));
    for (char ch : name)
        mix(static_cast<std::uint8_t>(ch));
    return h;
}

GridPtr synth_grid(const SynthConfig& cfg)
{
    cfg.validate();
    const std::size_t n = cfg.n_lat * cfg.n_lon;
    const auto noise = smooth_pattern(cfg, "mask");
    // land favoured along the western edge, broken up by smooth noise
    std::vector<double> score(n);
    for (std::size_t i = 0; i < cfg.n_lat; ++i)
        for (std::size_t j = 0; j < cfg.n_lon; ++j) {
            const double west = 1.0 - static_cast<double>(j) / static_cast<double>(cfg.n_lon - 1);
            score[i * cfg.n_lon + j] = 4.0 * west * west * west + 0.6 * noise[i * cfg.n_lon + j];
        }
    std::vector<std::uint8_t> mask(n, 1);
    const auto n_land = static_cast<std::size_t>(std::floor(cfg.coastline_fraction * static_cast<double>(n)));
    if (n_land > 0) {
        std::vector<std::size_t> order(n);
        for (std::size_t c = 0; c < n; ++c)
            order[c] = c;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
        for (std::size_t k = 0; k < n_land; ++k)
            mask[order[k]] = 0;
    }
    return std::make_shared<const GeoGrid>(
        make_regular_grid(cfg.n_lat, cfg.n_lon, cfg.lat_min, cfg.lat_max, cfg.lon_min, cfg.lon_max, mask));
}

Dataset generate_member(const SynthConfig& cfg, int member)
{
    cfg.validate();
    if (member < 0)
        throw Error("generate_member: negative member index");
    const GridPtr grid = synth_grid(cfg);
    const TimeAxis axis(cfg.start, cfg.years * 12);
    Dataset d;

    for (std::size_t k = 0; k < input_variables.size(); ++k) {
        const auto name = input_variables[k];
        const auto units = input_units[k];
        const auto& spec = cfg.variables[k];

        if (name == "mbathy") {
            const auto base = smooth_pattern(cfg, "mbathy/base");
            FieldSeries s(grid, axis, std::string(name), std::string(units));
            for (int t = 0; t < axis.length(); ++t)
                for (std::size_t c : grid->ocean_cells())
                    s.at(t, c) = std::max(spec.mean + spec.spread * base[c], 50.0);
            d.put(finish(std::move(s)));
        } else if (name == "ff") {
            FieldSeries s(grid, axis, std::string(name), std::string(units));
            for (int t = 0; t < axis.length(); ++t)
                for (std::size_t c : grid->ocean_cells())
                    s.at(t, c) = 2.0 * earth_omega * std::sin(grid->lat()[c / grid->n_lon()] * std::numbers::pi / 180.0);
            d.put(finish(std::move(s)));
        } else if (name == "sowsc") {
            // curl of a synthetic wind stress; coastal cells without a full
            // stencil are set to zero
            VariableSpec tx = spec, ty = spec;
            ty.phase += 1.0;
            auto taux = generic_variable(cfg, grid, axis, member, "sowsc/taux", "N m-2", tx);
            auto tauy = generic_variable(cfg, grid, axis, member, "sowsc/tauy", "N m-2", ty);
            FieldSeries curl = wind_stress_curl(taux, tauy);
            for (int t = 0; t < axis.length(); ++t)
                for (std::size_t c : grid->ocean_cells())
                    if (std::isnan(curl.at(t, c)))
                        curl.at(t, c) = 0.0;
            curl.rename(std::string(name), std::string(units));
            d.put(finish(std::move(curl)));
        } else {
            auto s = generic_variable(cfg, grid, axis, member, name, units, spec);
            if (name == "somxl010")
                for (int t = 0; t < axis.length(); ++t)
                    for (std::size_t c : grid->ocean_cells())
                        s.at(t, c) = std::max(s.at(t, c), cfg.min_mixed_layer_depth);
            d.put(finish(std::move(s)));
        }
    }
    return d;
}

ConceptZStats concept_zscore_stats(const ConceptSet& concepts)
{
    ConceptZStats z;
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& s = concepts[k];
        double sum = 0.0;
        std::size_t n = 0;
        for (int t = 0; t < s.length(); ++t)
            for (std::size_t c : s.grid()->ocean_cells()) {
                sum += s.at(t, c);
                ++n;
            }
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (int t = 0; t < s.length(); ++t)
            for (std::size_t c : s.grid()->ocean_cells()) {
                const double d = s.at(t, c) - mean;
                ss += d * d;
            }
        const double sd = std::sqrt(ss / static_cast<double>(n));
        if (!(sd > 0.0))
            throw NumericalError("concept '" + s.name() + "' has zero variance");
        z.mean[k] = mean;
        z.std[k] = sd;
    }
    return z;
}

FieldSeries generate_target(const SynthConfig& cfg, int member, const ConceptSet& concepts)
{
    for (std::size_t k = 1; k < 4; ++k)
        if (!same_grid(concepts[0].grid(), concepts[k].grid()) || !(concepts[0].time() == concepts[k].time()))
            throw Error("generate_target: concept fields are not aligned");
    const auto& ref = concepts[0];
    if (ref.length() < 2)
        throw Error("generate_target: need at least two concept months");

    const auto z = concept_zscore_stats(concepts);
    const GridPtr& grid = ref.grid();
    FieldSeries out(grid, ref.time().slice(1, ref.length() - 1), std::string(target_variable), "1");
    std::mt19937_64 rng(stream_seed(cfg.master_seed, member, target_variable));
    std::normal_distribution<double> n01;
    const std::size_t n = grid->n_cells();
    std::vector<double> eps(n, 0.0);

    for (int t = 0; t < out.length(); ++t) {
        if (cfg.generative_noise_std != 0.0)
            for (std::size_t c = 0; c < n; ++c)
                eps[c] = cfg.generative_noise_std * n01(rng);
        for (std::size_t c : grid->ocean_cells()) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 4; ++k)
                acc += cfg.generative_weights[k] * ((concepts[k].at(t, c) - z.mean[k]) / z.std[k]);
            out.at(t, c) = acc + eps[c];
        }
    }
    return finish(std::move(out));
}

MemberData generate_member_data(const SynthConfig& cfg, int member, const PhysConstants& k)
{
    Dataset inputs = generate_member(cfg, member);
    ConceptSet concepts = derive_concepts(inputs, k);
    FieldSeries mlhc = generate_target(cfg, member, concepts);
    return align_member(inputs, concepts, mlhc);
}

} // namespace mlhc
