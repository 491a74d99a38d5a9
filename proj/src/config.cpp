#include "mlhc/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <thread>

#include "mlhc/bytes.hpp"
#include "mlhc/error.hpp"

namespace mlhc {

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s)
{
    std::vector<std::string_view> out;
    if (trim(s).empty())
        return out;
    std::size_t pos = 0;
    for (;;) {
        const auto comma = s.find(',', pos);
        out.push_back(trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
        if (comma == std::string_view::npos)
            return out;
        pos = comma + 1;
    }
}

template <class T>
T parse_number(std::string_view s)
{
    s = trim(s);
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("'" + std::string(s) + "' is not a valid number");
    return v;
}

template <class T>
std::string format_number(T v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <class T>
std::string join(const T& values)
{
    std::string out;
    for (const auto& v : values)
        out += (out.empty() ? "" : ",") + format_number(v);
    return out;
}

struct Key {
    std::string name;
    std::string section;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
using Ref = T& (*)(RunConfig&);

class Registry {
public:
    Registry() { build(); }
    const std::vector<Key>& keys() const noexcept { return keys_; }
    const Key* find(std::string_view name) const
    {
        auto it = index_.find(std::string(name));
        return it == index_.end() ? nullptr : &keys_[it->second];
    }

private:
    template <class T, class F>
    void scalar(std::string name, F ref)
    {
        add(std::move(name), [ref](RunConfig& c, std::string_view v) { ref(c) = parse_number<T>(v); },
            [ref](const RunConfig& c) { return format_number(ref(const_cast<RunConfig&>(c))); });
    }

    template <class T, std::size_t N, class F>
    void array(std::string name, F ref)
    {
        add(std::move(name),
            [ref](RunConfig& c, std::string_view v) {
                const auto items = split_list(v);
                if (items.size() != N)
                    throw ConfigError("expected " + std::to_string(N) + " comma-separated values, got " +
                                      std::to_string(items.size()));
                std::array<T, N> out{};
                for (std::size_t i = 0; i < N; ++i)
                    out[i] = parse_number<T>(items[i]);
                ref(c) = out;
            },
            [ref](const RunConfig& c) { return join(ref(const_cast<RunConfig&>(c))); });
    }

    void add(std::string name, std::function<void(RunConfig&, std::string_view)> set,
             std::function<std::string(const RunConfig&)> get)
    {
        const std::string section = name.substr(0, name.find('.'));
        index_[name] = keys_.size();
        keys_.push_back({std::move(name), section, std::move(set), std::move(get)});
    }

    void build()
    {
        add("run.out_dir", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(trim(v)); },
            [](const RunConfig& c) { return c.out_dir.string(); });
        scalar<int>("run.jobs", [](RunConfig& c) -> int& { return c.jobs; });

        scalar<std::size_t>("synth.n_lat", [](RunConfig& c) -> std::size_t& { return c.synth.n_lat; });
        scalar<std::size_t>("synth.n_lon", [](RunConfig& c) -> std::size_t& { return c.synth.n_lon; });
        scalar<double>("synth.lat_min", [](RunConfig& c) -> double& { return c.synth.lat_min; });
        scalar<double>("synth.lat_max", [](RunConfig& c) -> double& { return c.synth.lat_max; });
        scalar<double>("synth.lon_min", [](RunConfig& c) -> double& { return c.synth.lon_min; });
        scalar<double>("synth.lon_max", [](RunConfig& c) -> double& { return c.synth.lon_max; });
        scalar<int>("synth.years", [](RunConfig& c) -> int& { return c.synth.years; });
        scalar<int>("synth.start_year", [](RunConfig& c) -> int& { return c.synth.start.year; });
        scalar<int>("synth.start_month", [](RunConfig& c) -> int& { return c.synth.start.month; });
        scalar<int>("synth.n_members", [](RunConfig& c) -> int& { return c.synth.n_members; });
        scalar<std::uint64_t>("synth.master_seed", [](RunConfig& c) -> std::uint64_t& { return c.synth.master_seed; });
        scalar<double>("synth.spatial_scale", [](RunConfig& c) -> double& { return c.synth.spatial_scale; });
        scalar<double>("synth.ar1_coeff", [](RunConfig& c) -> double& { return c.synth.ar1_coeff; });
        scalar<double>("synth.coastline_fraction", [](RunConfig& c) -> double& { return c.synth.coastline_fraction; });
        array<double, 4>("synth.generative_weights",
                         [](RunConfig& c) -> std::array<double, 4>& { return c.synth.generative_weights; });
        scalar<double>("synth.generative_noise_std",
                       [](RunConfig& c) -> double& { return c.synth.generative_noise_std; });
        scalar<double>("synth.min_mixed_layer_depth",
                       [](RunConfig& c) -> double& { return c.synth.min_mixed_layer_depth; });
        for (std::size_t v = 0; v < input_variables.size(); ++v) {
            const std::string p = "synth." + std::string(input_variables[v]) + ".";
            auto field = [&](const char* f, double VariableSpec::*m) {
                add(p + f,
                    [v, m](RunConfig& c, std::string_view s) { c.synth.variables[v].*m = parse_number<double>(s); },
                    [v, m](const RunConfig& c) { return format_number(c.synth.variables[v].*m); });
            };
            field("mean", &VariableSpec::mean);
            field("spread", &VariableSpec::spread);
            field("seasonal_amplitude", &VariableSpec::seasonal_amplitude);
            field("phase", &VariableSpec::phase);
            field("trend_per_decade", &VariableSpec::trend_per_decade);
            field("noise_std", &VariableSpec::noise_std);
        }

        scalar<double>("physics.g", [](RunConfig& c) -> double& { return c.physics.g; });
        scalar<double>("physics.rho0", [](RunConfig& c) -> double& { return c.physics.rho0; });
        scalar<double>("physics.c_p", [](RunConfig& c) -> double& { return c.physics.c_p; });
        scalar<double>("physics.alpha", [](RunConfig& c) -> double& { return c.physics.alpha; });
        scalar<double>("physics.beta", [](RunConfig& c) -> double& { return c.physics.beta; });
        scalar<double>("physics.T_ref", [](RunConfig& c) -> double& { return c.physics.T_ref; });
        scalar<double>("physics.S_ref", [](RunConfig& c) -> double& { return c.physics.S_ref; });
        scalar<double>("physics.seconds_per_month", [](RunConfig& c) -> double& { return c.physics.seconds_per_month; });
        scalar<double>("physics.transition_thickness",
                       [](RunConfig& c) -> double& { return c.physics.transition_thickness; });
        scalar<double>("physics.earth_radius", [](RunConfig& c) -> double& { return c.physics.earth_radius; });

        scalar<double>("preprocess.clip_lo", [](RunConfig& c) -> double& { return c.preprocess.clip_lo; });
        scalar<double>("preprocess.clip_hi", [](RunConfig& c) -> double& { return c.preprocess.clip_hi; });
        scalar<double>("preprocess.smooth_sigma", [](RunConfig& c) -> double& { return c.preprocess.smooth_sigma; });
        array<double, 3>("preprocess.split", [](RunConfig& c) -> std::array<double, 3>& { return c.preprocess.split; });
        scalar<int>("preprocess.context_months", [](RunConfig& c) -> int& { return c.preprocess.context_months; });
        scalar<int>("preprocess.lead_months", [](RunConfig& c) -> int& { return c.preprocess.lead_months; });
        add("preprocess.static_variables",
            [](RunConfig& c, std::string_view v) {
                c.preprocess.static_variables.clear();
                for (auto s : split_list(v))
                    c.preprocess.static_variables.emplace_back(s);
            },
            [](const RunConfig& c) {
                std::string out;
                for (const auto& s : c.preprocess.static_variables)
                    out += (out.empty() ? "" : ",") + s;
                return out;
            });

        array<int, 4>("model.widths", [](RunConfig& c) -> std::array<int, 4>& { return c.widths; });

        scalar<double>("train.lr", [](RunConfig& c) -> double& { return c.train.lr; });
        scalar<double>("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
        scalar<double>("train.beta1", [](RunConfig& c) -> double& { return c.train.beta1; });
        scalar<double>("train.beta2", [](RunConfig& c) -> double& { return c.train.beta2; });
        scalar<double>("train.eps", [](RunConfig& c) -> double& { return c.train.eps; });
        scalar<int>("train.epochs", [](RunConfig& c) -> int& { return c.train.epochs; });
        scalar<int>("train.batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; });
        scalar<double>("train.lambda0", [](RunConfig& c) -> double& { return c.train.lambda0; });
        scalar<double>("train.lambda1", [](RunConfig& c) -> double& { return c.train.lambda1; });

        add("ensemble.seeds",
            [](RunConfig& c, std::string_view v) {
                c.ensemble.seeds.clear();
                for (auto s : split_list(v))
                    c.ensemble.seeds.push_back(parse_number<std::uint64_t>(s));
            },
            [](const RunConfig& c) { return join(c.ensemble.seeds); });
        add("ensemble.configurations",
            [](RunConfig& c, std::string_view v) {
                c.ensemble.configurations.clear();
                for (auto s : split_list(v))
                    c.ensemble.configurations.push_back(nn::parse_mode(s));
            },
            [](const RunConfig& c) {
                std::string out;
                for (auto m : c.ensemble.configurations)
                    out += (out.empty() ? "" : ",") + std::string(nn::mode_name(m));
                return out;
            });

        scalar<int>("eval.member", [](RunConfig& c) -> int& { return c.eval.member; });
        scalar<int>("eval.batch_size", [](RunConfig& c) -> int& { return c.eval.batch_size; });

        scalar<double>("diagnostics.region_lat_min", [](RunConfig& c) -> double& { return c.diagnostics.region.lat_min; });
        scalar<double>("diagnostics.region_lat_max", [](RunConfig& c) -> double& { return c.diagnostics.region.lat_max; });
        scalar<double>("diagnostics.region_lon_min", [](RunConfig& c) -> double& { return c.diagnostics.region.lon_min; });
        scalar<double>("diagnostics.region_lon_max", [](RunConfig& c) -> double& { return c.diagnostics.region.lon_max; });
        scalar<int>("diagnostics.event_year", [](RunConfig& c) -> int& { return c.diagnostics.event.year; });
        scalar<int>("diagnostics.event_month", [](RunConfig& c) -> int& { return c.diagnostics.event.month; });
        scalar<int>("diagnostics.window", [](RunConfig& c) -> int& { return c.diagnostics.window; });
        scalar<int>("diagnostics.max_lag", [](RunConfig& c) -> int& { return c.diagnostics.max_lag; });
        scalar<int>("diagnostics.ppm_scale", [](RunConfig& c) -> int& { return c.diagnostics.ppm_scale; });
    }

    std::vector<Key> keys_;
    std::map<std::string, std::size_t> index_;
};

const Registry& registry()
{
    static const Registry r;
    return r;
}

} // namespace

nn::NetConfig RunConfig::net_config(nn::Mode mode) const
{
    nn::NetConfig c;
    c.in_channels = preprocess.context_months * static_cast<int>(input_variables.size());
    c.widths = widths;
    c.n_prescribed = static_cast<int>(concept_variables.size());
    c.mode = mode;
    return c;
}

int RunConfig::resolved_jobs() const
{
    if (jobs > 0)
        return jobs;
    return std::max(1u, std::thread::hardware_concurrency());
}

void RunConfig::validate() const
{
    std::vector<std::string> problems;
    auto collect = [&](auto&& check) {
        try {
            check();
        } catch (const ConfigError& e) {
            problems.emplace_back(e.what());
        }
    };
    collect([&] { synth.validate(); });
    collect([&] { preprocess.validate(); });
    collect([&] { net_config().validate(); });
    collect([&] { train.validate(); });
    collect([&] { ensemble.validate(); });
    if (out_dir.empty())
        problems.emplace_back("run.out_dir must not be empty");
    if (jobs < 0)
        problems.emplace_back("run.jobs must be >= 0");
    if (eval.member < 0 || eval.member >= synth.n_members)
        problems.emplace_back("eval.member must index a synthetic member (0.." + std::to_string(synth.n_members - 1) + ")");
    if (eval.batch_size < 1)
        problems.emplace_back("eval.batch_size must be >= 1");
    const auto& d = diagnostics;
    if (!(d.region.lat_min <= d.region.lat_max) || !(d.region.lon_min <= d.region.lon_max))
        problems.emplace_back("diagnostics region: min must not exceed max");
    if (d.event.month < 1 || d.event.month > 12)
        problems.emplace_back("diagnostics.event_month must be in 1..12");
    if (d.window < 1)
        problems.emplace_back("diagnostics.window must be >= 1");
    if (d.max_lag < 0)
        problems.emplace_back("diagnostics.max_lag must be >= 0");
    if (d.ppm_scale < 1)
        problems.emplace_back("diagnostics.ppm_scale must be >= 1");
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems)
            msg += "\n  " + p;
        throw ConfigError(msg);
    }
}

std::string RunConfig::to_text(const std::vector<std::string>& sections) const
{
    std::string out;
    for (const auto& k : registry().keys()) {
        if (!sections.empty() && std::find(sections.begin(), sections.end(), k.section) == sections.end())
            continue;
        out += k.name + " = " + k.get(*this) + "\n";
    }
    return out;
}

RunConfig RunConfig::parse(std::string_view text)
{
    RunConfig c;
    std::vector<std::string> problems;
    std::set<std::string> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            problems.push_back(where + "expected 'section.key = value'");
            continue;
        }
        const std::string key(trim(line.substr(0, eq)));
        const auto value = trim(line.substr(eq + 1));
        const Key* k = registry().find(key);
        if (!k) {
            problems.push_back(where + "unknown key '" + key + "'");
            continue;
        }
        if (!seen.insert(key).second) {
            problems.push_back(where + "key '" + key + "' set more than once");
            continue;
        }
        try {
            k->set(c, value);
        } catch (const Error& e) {
            problems.push_back(where + key + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems)
            msg += "\n  " + p;
        throw ConfigError(msg);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw ConfigError("configuration file '" + path.string() + "' does not exist");
    return parse(read_text_file(path));
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> out;
    for (const auto& k : registry().keys())
        out.push_back(k.name);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace mlhc
