#include "mlhc/preprocess.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mlhc/error.hpp"

namespace mlhc {

// ---------------------------------------------------------------------------
// Configuration and statistics
// ---------------------------------------------------------------------------

void PreprocConfig::validate() const
{
    std::ostringstream err;
    if (!(clip_lo >= 0.0 && clip_lo < clip_hi && clip_hi <= 100.0))
        err << "  clip percentiles must satisfy 0 <= lo < hi <= 100\n";
    if (!(smooth_sigma > 0.0))
        err << "  smooth_sigma must be positive\n";
    double sum = 0.0;
    for (double f : split) {
        if (!(f >= 0.0))
            err << "  split fractions must be non-negative\n";
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        err << "  split fractions must sum to 1\n";
    if (context_months < 1)
        err << "  context_months must be >= 1\n";
    if (lead_months < 1)
        err << "  lead_months must be >= 1\n";
    const auto msg = err.str();
    if (!msg.empty())
        throw ConfigError("invalid preprocessing configuration:\n" + msg);
}

bool PreprocConfig::is_static(std::string_view name) const
{
    return std::find(static_variables.begin(), static_variables.end(), name) != static_variables.end();
}

const NormEntry& NormStats::get(std::string_view name) const
{
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw MissingInputError("normalisation statistics for '" + std::string(name) + "' not found");
    return it->second;
}

std::string NormStats::to_text() const
{
    std::string out;
    char buf[128];
    for (const auto& [name, e] : entries_) {
        std::snprintf(buf, sizeof buf, "=%.17g,%.17g\n", e.mean, e.std);
        out += name;
        out += buf;
    }
    return out;
}

NormStats NormStats::from_text(std::string_view text)
{
    NormStats s;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        const auto comma = line.find(',', eq == std::string::npos ? 0 : eq);
        if (eq == std::string::npos || comma == std::string::npos)
            throw Error("norm stats line " + std::to_string(lineno) + ": expected name=mean,std");
        NormEntry e;
        const char* b = line.data();
        auto r1 = std::from_chars(b + eq + 1, b + comma, e.mean);
        auto r2 = std::from_chars(b + comma + 1, b + line.size(), e.std);
        if (r1.ec != std::errc{} || r2.ec != std::errc{} || r1.ptr != b + comma || r2.ptr != b + line.size())
            throw Error("norm stats line " + std::to_string(lineno) + ": malformed number");
        s.set(line.substr(0, eq), e);
    }
    return s;
}

void NormStats::write(const std::filesystem::path& path) const
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << to_text();
    if (!out)
        throw Error("cannot write '" + path.string() + "'");
}

NormStats NormStats::read(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw MissingInputError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

// ---------------------------------------------------------------------------
// Conditioning steps
// ---------------------------------------------------------------------------

FieldSeries detrend_linear(const FieldSeries& series)
{
    const int n = series.length();
    if (n < 2)
        throw Error("detrend_linear: need at least two months");
    const double tbar = 0.5 * (n - 1);
    double stt = 0.0;
    for (int t = 0; t < n; ++t)
        stt += (t - tbar) * (t - tbar);

    FieldSeries out = series;
    for (std::size_t c : series.grid()->ocean_cells()) {
        double ybar = 0.0;
        for (int t = 0; t < n; ++t)
            ybar += series.at(t, c);
        ybar /= n;
        double sty = 0.0;
        for (int t = 0; t < n; ++t)
            sty += (t - tbar) * (series.at(t, c) - ybar);
        const double slope = sty / stt;
        for (int t = 0; t < n; ++t)
            out.at(t, c) = series.at(t, c) - ybar - slope * (t - tbar);
    }
    return out;
}

double percentile(std::vector<double> values, double p)
{
    if (values.empty())
        throw Error("percentile: no values");
    if (!(p >= 0.0 && p <= 100.0))
        throw Error("percentile: p outside [0, 100]");
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (frac == 0.0 || lo + 1 >= values.size())
        return a;
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo + 1), values.end());
    return a + frac * (b - a);
}

ClipThresholds clip_thresholds(std::span<const FieldSeries* const> series, double lo, double hi,
                               MonthRange reference)
{
    std::vector<double> pool;
    for (const FieldSeries* s : series) {
        if (reference.first < 0 || reference.end() > s->length())
            throw Error("clip_thresholds: reference months outside '" + s->name() + "'");
        for (int t = reference.first; t < reference.end(); ++t)
            for (std::size_t c : s->grid()->ocean_cells())
                pool.push_back(s->at(t, c));
    }
    if (pool.empty())
        throw Error("clip_thresholds: no ocean values in the reference period");
    return {percentile(pool, lo), percentile(pool, hi)};
}

FieldSeries clip_values(const FieldSeries& series, ClipThresholds th)
{
    FieldSeries out = series;
    for (int t = 0; t < series.length(); ++t)
        for (std::size_t c : series.grid()->ocean_cells())
            out.at(t, c) = std::clamp(series.at(t, c), th.lo, th.hi);
    return out;
}

FieldSeries clip_percentiles(const FieldSeries& series, double lo, double hi, MonthRange reference)
{
    const FieldSeries* one[] = {&series};
    return clip_values(series, clip_thresholds(one, lo, hi, reference));
}

FieldSeries gaussian_smooth(const FieldSeries& series, double sigma)
{
    if (!(sigma > 0.0))
        throw Error("gaussian_smooth: sigma must be positive");
    FieldSeries out = series;
    const GeoGrid& g = *series.grid();
    for (int t = 0; t < series.length(); ++t)
        masked_gaussian_filter(series.slice(t), out.slice(t), g.n_lat(), g.n_lon(), g.mask(), sigma);
    return out;
}

NormEntry zscore_fit(std::span<const FieldSeries* const> series, MonthRange train)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const FieldSeries* s : series) {
        if (train.first < 0 || train.end() > s->length() || train.count < 1)
            throw Error("zscore_fit: training months outside '" + s->name() + "'");
        for (int t = train.first; t < train.end(); ++t)
            for (std::size_t c : s->grid()->ocean_cells()) {
                sum += s->at(t, c);
                ++n;
            }
    }
    if (n == 0)
        throw Error("zscore_fit: empty training portion");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const FieldSeries* s : series)
        for (int t = train.first; t < train.end(); ++t)
            for (std::size_t c : s->grid()->ocean_cells()) {
                const double d = s->at(t, c) - mean;
                ss += d * d;
            }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0))
        throw NumericalError("zscore_fit: '" + series.front()->name() + "' has zero variance over training months");
    return {mean, sd};
}

NormEntry zscore_fit(const FieldSeries& series, MonthRange train)
{
    const FieldSeries* one[] = {&series};
    return zscore_fit(one, train);
}

FieldSeries zscore_apply(const FieldSeries& series, NormEntry e)
{
    if (!(e.std > 0.0))
        throw NumericalError("zscore_apply: non-positive std for '" + series.name() + "'");
    FieldSeries out = series;
    for (int t = 0; t < series.length(); ++t)
        for (std::size_t c : series.grid()->ocean_cells())
            out.at(t, c) = (series.at(t, c) - e.mean) / e.std;
    return out;
}

Splits temporal_split(int n_months, const std::array<double, 3>& fractions)
{
    const int train = static_cast<int>(std::floor(fractions[0] * n_months + 1e-9));
    const int val = static_cast<int>(std::floor(fractions[1] * n_months + 1e-9));
    const int test = n_months - train - val;
    if (train < 1 || val < 1 || test < 1)
        throw Error("temporal_split: " + std::to_string(n_months) + " months are too few to split");
    return {{0, train}, {train, val}, {train + val, test}};
}

// ---------------------------------------------------------------------------
// Prepared data
// ---------------------------------------------------------------------------

std::span<const float> PreparedData::input(int member, int t, std::size_t var) const
{
    const auto n = cells();
    return {members[static_cast<std::size_t>(member)].inputs.data() + (static_cast<std::size_t>(t) * 12 + var) * n, n};
}

std::span<const float> PreparedData::concept_field(int member, int t, std::size_t k) const
{
    const auto n = cells();
    return {members[static_cast<std::size_t>(member)].concepts.data() + (static_cast<std::size_t>(t) * 4 + k) * n, n};
}

std::span<const float> PreparedData::target(int member, int t) const
{
    const auto n = cells();
    return {members[static_cast<std::size_t>(member)].target.data() + static_cast<std::size_t>(t) * n, n};
}

FieldSeries PreparedData::series(int member, std::string_view name) const
{
    FieldSeries out(grid, time, std::string(name), "1");
    auto source = [&](int t) -> std::span<const float> {
        for (std::size_t v = 0; v < input_variables.size(); ++v)
            if (input_variables[v] == name)
                return input(member, t, v);
        for (std::size_t k = 0; k < concept_variables.size(); ++k)
            if (concept_variables[k] == name)
                return concept_field(member, t, k);
        if (name == target_variable)
            return target(member, t);
        throw Error("PreparedData: unknown quantity '" + std::string(name) + "'");
    };
    for (int t = 0; t < time.length(); ++t) {
        const auto src = source(t);
        for (std::size_t c : grid->ocean_cells())
            out.at(t, c) = src[c];
    }
    return out;
}

namespace {

void pack_into(std::vector<float>& dst, const FieldSeries& s, std::size_t stride, std::size_t slot)
{
    const std::size_t n = s.cells();
    for (int t = 0; t < s.length(); ++t) {
        float* out = dst.data() + (static_cast<std::size_t>(t) * stride + slot) * n;
        for (std::size_t c : s.grid()->ocean_cells())
            out[c] = static_cast<float>(s.at(t, c));
    }
}

void allocate(PreparedData& d, std::size_t n_members)
{
    const std::size_t n = d.cells(), T = static_cast<std::size_t>(d.time.length());
    d.members.resize(n_members);
    for (auto& m : d.members) {
        m.inputs.assign(T * 12 * n, 0.0f);
        m.concepts.assign(T * 4 * n, 0.0f);
        m.target.assign(T * n, 0.0f);
    }
}

std::vector<const FieldSeries*> pointers(const std::vector<FieldSeries>& v)
{
    std::vector<const FieldSeries*> p;
    for (const auto& s : v)
        p.push_back(&s);
    return p;
}

} // namespace

PreparedData prepare(const std::vector<MemberData>& members, const PreprocConfig& cfg)
{
    cfg.validate();
    if (members.empty())
        throw Error("prepare: no members");
    const FieldSeries& ref = members.front().mlhc;
    for (const auto& m : members) {
        m.inputs.require_inputs();
        if (!same_grid(m.inputs.grid(), ref.grid()) || !(m.inputs.time() == ref.time()) ||
            !(m.mlhc.time() == ref.time()))
            throw Error("prepare: members are not aligned on one grid and time axis");
        for (std::size_t k = 0; k < 4; ++k)
            if (!(m.concepts[k].time() == ref.time()))
                throw Error("prepare: concept '" + m.concepts[k].name() + "' is not aligned with the target");
    }

    PreparedData d;
    d.grid = ref.grid();
    d.time = ref.time();
    d.cfg = cfg;
    d.splits = temporal_split(d.time.length(), cfg.split);
    allocate(d, members.size());
    const MonthRange train = d.splits.train;

    auto process = [&](const std::string& name, auto&& get, bool detrend, bool clip, bool smooth) {
        std::vector<FieldSeries> work;
        work.reserve(members.size());
        for (const auto& m : members)
            work.push_back(detrend ? detrend_linear(get(m)) : get(m));
        if (clip) {
            const auto th = clip_thresholds(pointers(work), cfg.clip_lo, cfg.clip_hi, train);
            for (auto& s : work)
                s = clip_values(s, th);
        }
        if (smooth)
            for (auto& s : work)
                s = gaussian_smooth(s, cfg.smooth_sigma);
        const NormEntry e = zscore_fit(pointers(work), train);
        d.stats.set(name, e);
        for (auto& s : work)
            s = zscore_apply(s, e);
        return work;
    };

    for (std::size_t v = 0; v < input_variables.size(); ++v) {
        const std::string name(input_variables[v]);
        auto out = process(name, [&](const MemberData& m) -> const FieldSeries& { return m.inputs.get(name); },
                           !cfg.is_static(name), true, false);
        for (std::size_t m = 0; m < members.size(); ++m)
            pack_into(d.members[m].inputs, out[m], 12, v);
    }
    for (std::size_t k = 0; k < 4; ++k) {
        const std::string name(concept_variables[k]);
        auto out = process(name, [&](const MemberData& m) -> const FieldSeries& { return m.concepts[k]; }, true,
                           true, true);
        for (std::size_t m = 0; m < members.size(); ++m)
            pack_into(d.members[m].concepts, out[m], 4, k);
    }
    {
        auto out = process(std::string(target_variable),
                           [&](const MemberData& m) -> const FieldSeries& { return m.mlhc; }, true, false, false);
        for (std::size_t m = 0; m < members.size(); ++m)
            pack_into(d.members[m].target, out[m], 1, 0);
    }
    return d;
}

PreparedData pack_prepared(const std::vector<Dataset>& normalized, const PreprocConfig& cfg, NormStats stats)
{
    cfg.validate();
    if (normalized.empty())
        throw Error("pack_prepared: no members");
    PreparedData d;
    d.grid = normalized.front().grid();
    d.time = normalized.front().time();
    d.cfg = cfg;
    d.splits = temporal_split(d.time.length(), cfg.split);
    d.stats = std::move(stats);
    allocate(d, normalized.size());
    for (std::size_t m = 0; m < normalized.size(); ++m) {
        const Dataset& ds = normalized[m];
        if (!same_grid(ds.grid(), d.grid) || !(ds.time() == d.time))
            throw Error("pack_prepared: members are not aligned");
        for (std::size_t v = 0; v < input_variables.size(); ++v)
            pack_into(d.members[m].inputs, ds.get(input_variables[v]), 12, v);
        for (std::size_t k = 0; k < 4; ++k)
            pack_into(d.members[m].concepts, ds.get(concept_variables[k]), 4, k);
        pack_into(d.members[m].target, ds.get(target_variable), 1, 0);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

SampleSet::SampleSet(std::shared_ptr<const PreparedData> data, std::string split, MonthRange range,
                     std::vector<SampleRef> samples)
    : data_(std::move(data)), split_(std::move(split)), range_(range), samples_(std::move(samples))
{
}

std::vector<int> SampleSet::context_months(std::size_t i) const
{
    const auto& c = data_->cfg;
    const int first = samples_[i].target_t - c.lead_months - c.context_months + 1;
    std::vector<int> months(static_cast<std::size_t>(c.context_months));
    for (int k = 0; k < c.context_months; ++k)
        months[static_cast<std::size_t>(k)] = first + k;
    return months;
}

void SampleSet::input(std::size_t i, std::span<float> out) const
{
    const std::size_t n = data_->cells();
    if (out.size() != static_cast<std::size_t>(channels()) * n)
        throw Error("SampleSet::input: output size mismatch");
    const auto months = context_months(i);
    const int member = samples_[i].member;
    for (std::size_t k = 0; k < months.size(); ++k)
        for (std::size_t v = 0; v < 12; ++v) {
            const auto src = data_->input(member, months[k], v);
            std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>((k * 12 + v) * n));
        }
}

void SampleSet::concept_target(std::size_t i, std::span<float> out) const
{
    const std::size_t n = data_->cells();
    if (out.size() != 4 * n)
        throw Error("SampleSet::concept_target: output size mismatch");
    for (std::size_t k = 0; k < 4; ++k) {
        const auto src = data_->concept_field(samples_[i].member, samples_[i].target_t, k);
        std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(k * n));
    }
}

void SampleSet::target(std::size_t i, std::span<float> out) const
{
    if (out.size() != data_->cells())
        throw Error("SampleSet::target: output size mismatch");
    const auto src = data_->target(samples_[i].member, samples_[i].target_t);
    std::copy(src.begin(), src.end(), out.begin());
}

SampleSet build_samples(std::shared_ptr<const PreparedData> data, MonthRange range, std::string split)
{
    if (range.first < 0 || range.end() > data->time.length())
        throw Error("build_samples: range outside the time axis");
    const int reach = data->cfg.lead_months + data->cfg.context_months - 1;
    std::vector<SampleRef> refs;
    for (int m = 0; m < static_cast<int>(data->members.size()); ++m)
        for (int t = range.first + reach; t < range.end(); ++t)
            refs.push_back({m, t});
    if (refs.empty())
        throw Error("build_samples: no valid samples in split '" + split + "'");
    return SampleSet(std::move(data), std::move(split), range, std::move(refs));
}

SplitSamples build_split_samples(std::shared_ptr<const PreparedData> data)
{
    const Splits s = data->splits;
    return {build_samples(data, s.train, "train"), build_samples(data, s.val, "val"),
            build_samples(data, s.test, "test")};
}

} // namespace mlhc
