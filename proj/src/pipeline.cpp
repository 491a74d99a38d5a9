#include "mlhc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "mlhc/bytes.hpp"
#include "mlhc/diagnostics.hpp"
#include "mlhc/error.hpp"
#include "mlhc/eval.hpp"
#include "mlhc/ogf.hpp"

namespace fs = std::filesystem;

namespace mlhc {

std::string_view command_name(Command c) noexcept
{
    switch (c) {
    case Command::synth: return "synth";
    case Command::derive: return "derive";
    case Command::preprocess: return "preprocess";
    case Command::train: return "train";
    case Command::eval: return "eval";
    case Command::diagnose: return "diagnose";
    case Command::retro: return "retro";
    }
    return "?";
}

Command parse_command(std::string_view name)
{
    for (Command c : all_commands)
        if (command_name(c) == name)
            return c;
    throw ConfigError("unknown command '" + std::string(name) +
                      "' (expected synth, derive, preprocess, train, eval, diagnose or retro)");
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void Manifest::set(const std::string& key, std::string value)
{
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = std::move(value);
            return;
        }
    entries_.emplace_back(key, std::move(value));
}

std::optional<std::string> Manifest::get(std::string_view key) const
{
    for (const auto& [k, v] : entries_)
        if (k == key)
            return v;
    return std::nullopt;
}

std::vector<std::pair<std::string, std::string>> Manifest::with_prefix(std::string_view prefix) const
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : entries_)
        if (k.starts_with(prefix))
            out.emplace_back(k.substr(prefix.size()), v);
    return out;
}

std::string Manifest::to_text() const
{
    std::string out;
    for (const auto& [k, v] : entries_)
        out += k + " = " + v + "\n";
    return out;
}

Manifest Manifest::parse(std::string_view text)
{
    Manifest m;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        if (line.empty())
            continue;
        const auto eq = line.find(" = ");
        if (eq == std::string_view::npos)
            throw Error("manifest: malformed line '" + std::string(line) + "'");
        m.entries_.emplace_back(std::string(line.substr(0, eq)), std::string(line.substr(eq + 3)));
    }
    return m;
}

Manifest Manifest::read(const fs::path& path)
{
    return parse(read_text_file(path));
}

void Manifest::write(const fs::path& path) const
{
    write_text_file(path, to_text());
}

// ---------------------------------------------------------------------------
// Stage bookkeeping
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> stage_sections(Command c)
{
    std::vector<std::string> s = {"synth", "physics"};
    if (c >= Command::preprocess)
        s.push_back("preprocess");
    if (c >= Command::train) {
        s.push_back("model");
        s.push_back("train");
        s.push_back("ensemble");
    }
    if (c >= Command::eval)
        s.push_back("eval");
    if (c >= Command::diagnose)
        s.push_back("diagnostics");
    return s;
}

std::vector<Command> upstream_of(Command c)
{
    switch (c) {
    case Command::synth: return {};
    case Command::derive: return {Command::synth};
    case Command::preprocess: return {Command::synth, Command::derive};
    case Command::train: return {Command::preprocess};
    case Command::eval: return {Command::preprocess, Command::train};
    case Command::diagnose: return {Command::train, Command::eval};
    case Command::retro: return {Command::eval};
    }
    return {};
}

std::string run_hint(Command c)
{
    return "run `mlhc-cbm " + std::string(command_name(c)) + "` first";
}

/// Name of the first output whose checksum no longer matches, if any.
std::optional<std::string> broken_output(const RunConfig& cfg, const Manifest& m)
{
    for (const auto& [rel, crc] : m.with_prefix("output.")) {
        const fs::path p = cfg.out_dir / rel;
        if (!fs::exists(p) || file_crc_hex(p) != crc)
            return rel;
    }
    return std::nullopt;
}

void check_upstream(const RunConfig& cfg, Command up)
{
    const fs::path mp = manifest_path(cfg, up);
    if (!fs::exists(mp))
        throw MissingInputError("missing outputs of '" + std::string(command_name(up)) + "': " + run_hint(up));
    const auto m = Manifest::read(mp);
    if (m.get("config_hash") != stage_config_hash(cfg, up))
        throw MissingInputError("outputs of '" + std::string(command_name(up)) +
                                "' were made with a different configuration: " + run_hint(up));
    if (const auto bad = broken_output(cfg, m))
        throw MissingInputError("output '" + *bad + "' of '" + std::string(command_name(up)) +
                                "' is missing or modified: " + run_hint(up));
}

bool up_to_date(const RunConfig& cfg, Command c, const Manifest& expected)
{
    const fs::path mp = manifest_path(cfg, c);
    if (!fs::exists(mp))
        return false;
    const auto m = Manifest::read(mp);
    std::vector<std::pair<std::string, std::string>> head;
    for (const auto& e : m.entries())
        if (!e.first.starts_with("output."))
            head.push_back(e);
    return head == expected.entries() && !broken_output(cfg, m);
}

/// Files written by a stage, relative to the output directory.
class Outputs {
public:
    explicit Outputs(fs::path root) : root_(std::move(root)) {}

    fs::path path(const std::string& rel) const { return root_ / rel; }
    void added(const std::string& rel) { files_.push_back(rel); }

    void text(const std::string& rel, const std::string& content)
    {
        write_text_file(path(rel), content);
        added(rel);
    }
    void ogf(const std::string& rel, const FieldSeries& s)
    {
        ogf_write(nan_as_land(s), path(rel));
        added(rel);
    }
    void ppm(const std::string& rel, std::span<const double> field, const GeoGrid& grid, double limit, int scale)
    {
        write_ppm(path(rel), field, grid, limit, scale);
        added(rel);
    }
    const std::vector<std::string>& files() const noexcept { return files_; }

private:
    fs::path root_;
    std::vector<std::string> files_;
};

std::string member_dir(Command stage, int member)
{
    return std::string(command_name(stage)) + "/m" + std::to_string(member) + "/";
}

FieldSeries read_stage_series(const RunConfig& cfg, Command stage, int member, std::string_view name)
{
    return ogf_read(cfg.out_dir / (member_dir(stage, member) + std::string(name) + ".ogf"));
}

Dataset read_inputs(const RunConfig& cfg, int member)
{
    Dataset ds;
    for (auto name : input_variables)
        ds.put(read_stage_series(cfg, Command::synth, member, name));
    return ds;
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string ym_tag(YearMonth ym)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", ym.year, ym.month);
    return buf;
}

double max_abs_ocean(const FieldSeries& s)
{
    double m = 0.0;
    for (std::size_t c : s.grid()->ocean_cells())
        for (int t = 0; t < s.length(); ++t)
            if (std::isfinite(s.at(t, c)))
                m = std::max(m, std::abs(s.at(t, c)));
    return m;
}

// ---------------------------------------------------------------------------
// Stage bodies
// ---------------------------------------------------------------------------

void stage_synth(const RunConfig& cfg, Outputs& out, const Log& log)
{
    for (int m = 0; m < cfg.synth.n_members; ++m) {
        if (log)
            log("synth: member " + std::to_string(m));
        const Dataset inputs = generate_member(cfg.synth, m);
        const ConceptSet concepts = derive_concepts(inputs, cfg.physics);
        FieldSeries target = generate_target(cfg.synth, m, concepts);
        for (const auto& [name, s] : inputs.vars())
            out.ogf(member_dir(Command::synth, m) + name + ".ogf", s);
        out.ogf(member_dir(Command::synth, m) + std::string(target_variable) + ".ogf", target);
    }
}

void stage_derive(const RunConfig& cfg, Outputs& out, const Log& log)
{
    for (int m = 0; m < cfg.synth.n_members; ++m) {
        if (log)
            log("derive: member " + std::to_string(m));
        const ConceptSet concepts = derive_concepts(read_inputs(cfg, m), cfg.physics);
        for (std::size_t k = 0; k < concept_variables.size(); ++k)
            out.ogf(member_dir(Command::derive, m) + std::string(concept_variables[k]) + ".ogf", concepts[k]);
    }
}

void stage_preprocess(const RunConfig& cfg, Outputs& out, const Log& log)
{
    std::vector<MemberData> members;
    for (int m = 0; m < cfg.synth.n_members; ++m) {
        ConceptSet concepts;
        for (std::size_t k = 0; k < concept_variables.size(); ++k)
            concepts[k] = read_stage_series(cfg, Command::derive, m, concept_variables[k]);
        members.push_back(align_member(read_inputs(cfg, m), concepts,
                                       read_stage_series(cfg, Command::synth, m, target_variable)));
    }
    const PreparedData d = prepare(members, cfg.preprocess);
    members.clear();

    std::vector<std::string_view> names(input_variables.begin(), input_variables.end());
    names.insert(names.end(), concept_variables.begin(), concept_variables.end());
    names.push_back(target_variable);
    for (int m = 0; m < cfg.synth.n_members; ++m)
        for (auto name : names)
            out.ogf(member_dir(Command::preprocess, m) + std::string(name) + ".ogf", d.series(m, name));
    out.text("preprocess/norm_stats.txt", d.stats.to_text());

    auto shared = std::make_shared<const PreparedData>(d);
    const auto sets = build_split_samples(shared);
    std::string info;
    auto range = [&](const char* name, MonthRange r, const SampleSet& s) {
        info += std::string(name) + " = " + ym_tag(d.time.at(r.first)) + ".." + ym_tag(d.time.at(r.end() - 1)) +
                ", " + std::to_string(r.count) + " months, " + std::to_string(s.size()) + " samples\n";
    };
    range("train", d.splits.train, sets.train);
    range("val", d.splits.val, sets.val);
    range("test", d.splits.test, sets.test);
    out.text("preprocess/splits.txt", info);
    if (log)
        log("preprocess: " + std::to_string(sets.train.size()) + " train, " + std::to_string(sets.val.size()) +
            " val, " + std::to_string(sets.test.size()) + " test samples");
}

std::string history_csv(const std::vector<nn::EpochRecord>& h)
{
    std::string out = "epoch,lambda,train_conc,train_pred,train_total,val_conc,val_pred,val_total\n";
    char buf[256];
    for (const auto& r : h) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.lambda, r.train.conc,
                      r.train.pred, r.train.total, r.val.conc, r.val.pred, r.val.total);
        out += buf;
    }
    return out;
}

void stage_train(const RunConfig& cfg, Outputs& out, const Log& log)
{
    const auto data = load_prepared(cfg);
    const auto sets = build_split_samples(data);
    const int jobs = cfg.resolved_jobs();
    if (log)
        log("train: " + std::to_string(cfg.ensemble.configurations.size() * cfg.ensemble.seeds.size()) +
            " trainings on " + std::to_string(sets.train.size()) + " samples, " + std::to_string(jobs) + " job(s)");

    const auto start = std::chrono::steady_clock::now();
    MemberEpochCallback cb;
    if (log) {
        cb = [&](nn::Mode mode, int member, const nn::EpochRecord& r) {
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            log("train: [" + std::string(nn::mode_name(mode)) + " " + member_name(member) + "] epoch " +
                std::to_string(r.epoch + 1) + "/" + std::to_string(cfg.train.epochs) + " lambda " +
                fmt("%.3f", r.lambda) + " train " + fmt("%.4f", r.train.total) + " val " + fmt("%.4f", r.val.total) +
                " (" + fmt("%.0f", s) + " s)");
        };
    }
    auto runs = train_ensemble(cfg.ensemble, cfg.net_config(), sets.train, &sets.val, cfg.train, jobs, cb);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    for (auto& run : runs)
        for (std::size_t i = 0; i < run.members.size(); ++i) {
            const int member = static_cast<int>(i);
            const std::string base = "train/" + std::string(nn::mode_name(run.mode)) + "/" + member_name(member);
            nn::checkpoint_write(out.path(base + ".ckpt"), run.members[i].net, cfg.ensemble.seeds[i]);
            out.added(base + ".ckpt");
            out.text(base + "_history.csv", history_csv(run.members[i].history));
        }
    out.text("train/timing.txt", "wall_seconds = " + fmt("%.1f", seconds) + "\njobs = " + std::to_string(jobs) +
                                     "\ntrainings = " +
                                     std::to_string(cfg.ensemble.configurations.size() * cfg.ensemble.seeds.size()) +
                                     "\n");
}

std::string series_rel(const std::string& name)
{
    return "eval/series/" + name + ".ogf";
}

std::string basin_members_csv(const FieldSeries& target, const std::vector<FieldSeries>& members)
{
    std::string out = "year,month,target";
    for (std::size_t i = 0; i < members.size(); ++i)
        out += "," + member_name(static_cast<int>(i));
    out += "\n";
    const auto tb = basin_mean(target);
    std::vector<std::vector<double>> mb;
    for (const auto& m : members)
        mb.push_back(basin_mean(m));
    for (int t = 0; t < target.length(); ++t) {
        const auto ym = target.time().at(t);
        out += std::to_string(ym.year) + "," + std::to_string(ym.month) + fmt(",%.6f", tb[std::size_t(t)]);
        for (const auto& b : mb)
            out += fmt(",%.6f", b[std::size_t(t)]);
        out += "\n";
    }
    return out;
}

void stage_eval(const RunConfig& cfg, Outputs& out, const Log& log)
{
    const auto data = load_prepared(cfg);
    const auto oos = member_samples(build_samples(data, data->splits.out_of_sample(), "oos"), cfg.eval.member);
    if (log)
        log("eval: " + std::to_string(oos.size()) + " out-of-sample months of member " +
            std::to_string(cfg.eval.member));

    std::map<std::string, FieldSeries> targets;
    for (auto v : eval_variables) {
        targets.emplace(std::string(v), target_series(oos, v));
        out.ogf(series_rel("target/" + std::string(v)), targets.at(std::string(v)));
    }

    PredictionsByConfig preds;
    std::string members_acc = "variable,config,member,season,acc\n";
    for (nn::Mode mode : cfg.ensemble.configurations) {
        const std::string config(nn::mode_name(mode));
        auto nets = load_members(cfg, mode);
        std::vector<nn::Network<float>*> ptrs;
        for (auto& n : nets)
            ptrs.push_back(&n);
        const auto e = predict_ensemble(ptrs, oos, nets.size() >= 2, cfg.eval.batch_size);

        std::vector<std::pair<std::string, int>> vars = {{std::string(target_variable), -1}};
        if (mode != nn::Mode::prediction_only)
            for (std::size_t k = 0; k < concept_variables.size(); ++k)
                vars.emplace_back(std::string(concept_variables[k]), static_cast<int>(k));
        if (mode == nn::Mode::mixed)
            vars.emplace_back("free", static_cast<int>(concept_variables.size()));

        for (const auto& [var, k] : vars) {
            auto series_of = [&, var = var, k = k](const auto& values, const std::string& suffix) {
                return k < 0 ? series_from_samples(oos, values, 1, 0, var + suffix)
                             : series_from_samples(oos, values, e.channels, k, var + suffix);
            };
            const FieldSeries mean = series_of(k < 0 ? e.mean_y : e.mean_z, "_mean");
            out.ogf(series_rel(config + "/" + var + "_mean"), mean);
            std::optional<FieldSeries> sd;
            if (e.has_spread()) {
                sd = series_of(k < 0 ? e.std_y : e.std_z, "_std");
                out.ogf(series_rel(config + "/" + var + "_std"), *sd);
            }
            if (var == "free")
                continue;
            preds[config][var] = mean;
            const auto& tgt = targets.at(var);
            const auto b = basin_timeseries(tgt, mean, sd ? &*sd : nullptr);
            out.text("eval/basin_" + config + "_" + var + ".csv", basin_csv(b));
            std::vector<FieldSeries> member_series;
            for (const auto& p : e.members)
                member_series.push_back(k < 0 ? series_from_samples(oos, p.y, 1, 0, var)
                                              : series_from_samples(oos, p.bottleneck, e.channels, k, var));
            out.text("eval/basin_members_" + config + "_" + var + ".csv", basin_members_csv(tgt, member_series));
            if (var == target_variable) {
                const auto clim = monthly_climatology(tgt);
                for (std::size_t i = 0; i <= member_series.size(); ++i) {
                    const bool ens = i == member_series.size();
                    const auto& s = ens ? mean : member_series[i];
                    for (Season season : all_seasons)
                        members_acc += var + "," + config + "," +
                                       (ens ? std::string("ensemble") : member_name(static_cast<int>(i))) + "," +
                                       std::string(season_name(season)) +
                                       fmt(",%.6f\n", acc_scalar(s, tgt, clim, season).acc);
                }
            }
        }
        if (log)
            log("eval: predicted " + config + " with " + std::to_string(nets.size()) + " member(s)");
    }

    const auto pooled = seasonal_table(preds, targets, AccMode::pooled);
    out.text("eval/acc_seasonal.csv", acc_table_csv(pooled));
    out.text("eval/acc_seasonal_map_mean.csv", acc_table_csv(seasonal_table(preds, targets, AccMode::map_mean)));
    out.text("eval/acc_members.csv", members_acc);

    for (const auto& [config, vars] : preds)
        for (const auto& [var, p] : vars) {
            const auto clim = monthly_climatology(targets.at(var));
            for (Season s : all_seasons) {
                const auto map = acc_map(p, targets.at(var), clim, s);
                const std::string base = "eval/maps/acc_" + var + "_" + config + "_" + std::string(season_name(s));
                out.ogf(base + ".ogf", map);
                out.ppm(base + ".ppm", map.slice(0), *map.grid(), 1.0, cfg.diagnostics.ppm_scale);
            }
        }
    if (log)
        for (const auto& r : pooled)
            if (r.variable == target_variable)
                log("eval: ACC " + r.variable + " " + r.config + " " + std::string(season_name(r.season)) +
                    fmt(" %.4f", r.value.acc));
}

bool has_mode(const RunConfig& cfg, nn::Mode m)
{
    const auto& c = cfg.ensemble.configurations;
    return std::find(c.begin(), c.end(), m) != c.end();
}

void stage_diagnose(const RunConfig& cfg, Outputs& out, const Log& log)
{
    std::string contrib = "config,member,channel,weight,contribution\n";
    std::string spread = "config,channel,mean,std\n";
    std::string summary = "config,summary_std\n";
    for (nn::Mode mode : cfg.ensemble.configurations) {
        const std::string config(nn::mode_name(mode));
        auto nets = load_members(cfg, mode);
        std::vector<ContributionVector> vecs;
        for (std::size_t i = 0; i < nets.size(); ++i) {
            vecs.push_back(bottleneck_contributions(nets[i]));
            const auto& v = vecs.back();
            for (std::size_t k = 0; k < v.labels.size(); ++k)
                contrib += config + "," + member_name(static_cast<int>(i)) + "," + v.labels[k] +
                           fmt(",%.6f", v.weights[k]) + fmt(",%.6f\n", v.contributions[k]);
        }
        if (vecs.size() >= 2) {
            const auto s = contribution_spread(vecs);
            for (std::size_t k = 0; k < s.labels.size(); ++k)
                spread += config + "," + s.labels[k] + fmt(",%.6f", s.mean[k]) + fmt(",%.6f\n", s.std[k]);
            summary += config + fmt(",%.6f\n", s.summary);
            if (log)
                log("diagnose: contribution spread " + config + fmt(" %.4f", s.summary));
        }
    }
    out.text("diagnose/contributions.csv", contrib);
    out.text("diagnose/contribution_spread.csv", spread);
    out.text("diagnose/spread_summary.csv", summary);

    if (has_mode(cfg, nn::Mode::prescription_only)) {
        std::map<std::string, FieldSeries> targets;
        for (auto v : eval_variables)
            targets.emplace(std::string(v), load_eval_series(cfg, "target/" + std::string(v)));
        PredictionsByConfig preds;
        for (nn::Mode mode : cfg.ensemble.configurations) {
            const std::string config(nn::mode_name(mode));
            for (auto v : eval_variables)
                if (mode != nn::Mode::prediction_only || v == target_variable)
                    preds[config][std::string(v)] = load_eval_series(cfg, config + "/" + std::string(v) + "_mean");
        }
        out.text("diagnose/regularization.csv", regularization_csv(regularization_report(seasonal_table(preds, targets))));
    } else if (log) {
        log("diagnose: no prescription_only configuration, regularization table skipped");
    }

    if (has_mode(cfg, nn::Mode::mixed)) {
        const auto pred = load_eval_series(cfg, "mixed/mlhc_mean");
        const auto free = load_eval_series(cfg, "mixed/free_mean");
        std::string table = "season,n_steps,ocean_mean\n";
        for (const auto& c : free_concept_discrepancy(pred, free)) {
            const std::string base = "diagnose/discrepancy_" + std::string(season_name(c.season));
            out.ogf(base + ".ogf", c.field);
            out.ppm(base + ".ppm", c.field.slice(0), *c.field.grid(), max_abs_ocean(c.field), cfg.diagnostics.ppm_scale);
            table += std::string(season_name(c.season)) + "," + std::to_string(c.n_steps) +
                     fmt(",%.6f\n", basin_mean(c.field)[0]);
        }
        out.text("diagnose/discrepancy.csv", table);
    }
}

void stage_retro(const RunConfig& cfg, Outputs& out, const Log& log)
{
    const auto& d = cfg.diagnostics;
    const nn::Mode pred_mode = has_mode(cfg, nn::Mode::mixed) ? nn::Mode::mixed : cfg.ensemble.configurations.front();
    const std::string config(nn::mode_name(pred_mode));

    std::vector<FieldSeries> fields;
    auto add = [&](const std::string& stored, const std::string& label) {
        FieldSeries s = load_eval_series(cfg, stored);
        s.rename(label, "1");
        fields.push_back(std::move(s));
    };
    add("target/mlhc", "mlhc_target");
    add(config + "/mlhc_mean", "mlhc_pred");
    if (pred_mode != nn::Mode::prediction_only)
        for (auto v : concept_variables)
            add(config + "/" + std::string(v) + "_mean", std::string(v) + "_pred");
    if (pred_mode == nn::Mode::mixed)
        add("mixed/free_mean", "free_pred");

    const TimeAxis& axis = fields.front().time();
    const auto whole = retrospective(fields, d.region, axis.at(axis.length() - 1), axis.length());
    YearMonth event = d.event;
    if (event.year == 0) {
        const auto& m = whole.fields.front().region_mean;
        const int first = std::min(d.window - 1, axis.length() - 1);
        const auto it = std::max_element(m.begin() + first, m.end());
        event = axis.at(static_cast<int>(it - m.begin()));
    }
    const auto r = retrospective(fields, d.region, event, d.window);
    if (log)
        log("retro: event " + ym_tag(event) + ", window " + std::to_string(d.window) + " months");

    out.text("retro/event.txt", "event = " + ym_tag(event) + "\nwindow = " + std::to_string(d.window) +
                                    "\nregion = " + fmt("%g", d.region.lat_min) + "," + fmt("%g", d.region.lat_max) +
                                    "," + fmt("%g", d.region.lon_min) + "," + fmt("%g", d.region.lon_max) +
                                    "\nselection = " + (d.event.year == 0 ? "auto" : "config") + "\n");
    out.text("retro/retrospective.csv", retrospective_csv(r));
    for (const auto& f : r.fields) {
        out.ogf("retro/" + f.name + ".ogf", f.anomalies);
        const double limit = max_abs_ocean(f.anomalies);
        for (int t = 0; t < r.months.length(); ++t)
            out.ppm("retro/ppm/" + f.name + "_" + ym_tag(r.months.at(t)) + ".ppm", f.anomalies.slice(t),
                    *f.anomalies.grid(), limit, d.ppm_scale);
    }

    // region-mean anomalies over the whole evaluation period, each field
    // leading the target
    std::string lag = "lead,follow,lag,r\n";
    const int max_lag = std::min(d.max_lag, axis.length() - 2);
    const auto& follow = whole.fields.front();
    for (std::size_t i = 1; i < whole.fields.size(); ++i) {
        const auto rs = lagged_correlation(whole.fields[i].region_mean, follow.region_mean, max_lag);
        for (std::size_t L = 0; L < rs.size(); ++L)
            lag += whole.fields[i].name + "," + follow.name + "," + std::to_string(L) + fmt(",%.6f\n", rs[L]);
    }
    out.text("retro/lag_correlation.csv", lag);
}

} // namespace

fs::path stage_dir(const RunConfig& cfg, Command c)
{
    return cfg.out_dir / std::string(command_name(c));
}

fs::path manifest_path(const RunConfig& cfg, Command c)
{
    return stage_dir(cfg, c) / "manifest.txt";
}

std::string stage_config_hash(const RunConfig& cfg, Command c)
{
    const std::string text = cfg.to_text(stage_sections(c));
    return crc_hex(crc32({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}));
}

StageResult run_stage(Command c, const RunConfig& cfg, const Log& log)
{
    cfg.validate();
    Manifest m;
    m.set("command", std::string(command_name(c)));
    m.set("format", "1");
    m.set("config_hash", stage_config_hash(cfg, c));
    for (Command up : upstream_of(c)) {
        check_upstream(cfg, up);
        const fs::path mp = manifest_path(cfg, up);
        m.set("input." + std::string(command_name(up)) + "/manifest.txt", file_crc_hex(mp));
    }
    const std::string echo = cfg.to_text(stage_sections(c));
    const auto echo_entries = Manifest::parse(echo);
    for (const auto& [k, v] : echo_entries.entries())
        m.set("config." + k, v);

    StageResult result;
    if (up_to_date(cfg, c, m)) {
        for (const auto& [rel, crc] : Manifest::read(manifest_path(cfg, c)).with_prefix("output."))
            result.outputs.emplace_back(rel);
        result.skipped = true;
        if (log)
            log(std::string(command_name(c)) + ": outputs up to date");
        return result;
    }

    fs::remove_all(stage_dir(cfg, c));
    fs::create_directories(stage_dir(cfg, c));
    Outputs out(cfg.out_dir);
    switch (c) {
    case Command::synth: stage_synth(cfg, out, log); break;
    case Command::derive: stage_derive(cfg, out, log); break;
    case Command::preprocess: stage_preprocess(cfg, out, log); break;
    case Command::train: stage_train(cfg, out, log); break;
    case Command::eval: stage_eval(cfg, out, log); break;
    case Command::diagnose: stage_diagnose(cfg, out, log); break;
    case Command::retro: stage_retro(cfg, out, log); break;
    }
    for (const auto& rel : out.files()) {
        m.set("output." + rel, file_crc_hex(out.path(rel)));
        result.outputs.emplace_back(rel);
    }
    m.write(manifest_path(cfg, c));
    if (log)
        log(std::string(command_name(c)) + ": wrote " + std::to_string(out.files().size()) + " file(s)");
    return result;
}

void run_through(Command last, const RunConfig& cfg, const Log& log)
{
    for (Command c : all_commands) {
        if (c == Command::retro && last != Command::retro)
            break;
        if (c == Command::diagnose && last == Command::retro)
            continue;
        run_stage(c, cfg, log);
        if (c == last)
            break;
    }
}

std::shared_ptr<const PreparedData> load_prepared(const RunConfig& cfg)
{
    std::vector<Dataset> members;
    for (int m = 0; m < cfg.synth.n_members; ++m) {
        Dataset ds;
        for (auto v : input_variables)
            ds.put(read_stage_series(cfg, Command::preprocess, m, v));
        for (auto v : concept_variables)
            ds.put(read_stage_series(cfg, Command::preprocess, m, v));
        ds.put(read_stage_series(cfg, Command::preprocess, m, target_variable));
        members.push_back(std::move(ds));
    }
    const auto stats = NormStats::read(stage_dir(cfg, Command::preprocess) / "norm_stats.txt");
    return std::make_shared<const PreparedData>(pack_prepared(members, cfg.preprocess, stats));
}

std::vector<nn::Network<float>> load_members(const RunConfig& cfg, nn::Mode mode)
{
    std::vector<nn::Network<float>> nets;
    for (int i = 0; i < cfg.ensemble.n_members(); ++i) {
        std::uint64_t seed = 0;
        nets.push_back(nn::checkpoint_read(member_checkpoint(stage_dir(cfg, Command::train), mode, i), &seed));
        if (seed != cfg.ensemble.seeds[static_cast<std::size_t>(i)] || !(nets.back().config() == cfg.net_config(mode)))
            throw MissingInputError("checkpoint " + member_name(i) + " of " + std::string(nn::mode_name(mode)) +
                                    " does not match the configuration: " + run_hint(Command::train));
    }
    return nets;
}

FieldSeries load_eval_series(const RunConfig& cfg, const std::string& name)
{
    return ogf_read(cfg.out_dir / series_rel(name));
}

FieldSeries nan_as_land(const FieldSeries& s)
{
    const GeoGrid& g = *s.grid();
    std::vector<std::uint8_t> mask = g.mask();
    bool changed = false;
    for (std::size_t c : g.ocean_cells())
        for (int t = 0; t < s.length(); ++t)
            if (std::isnan(s.at(t, c))) {
                mask[c] = 0;
                changed = true;
                break;
            }
    if (!changed)
        return s;
    auto grid = std::make_shared<const GeoGrid>(g.lat(), g.lon(), std::move(mask));
    FieldSeries out(grid, s.time(), s.name(), s.units());
    for (int t = 0; t < s.length(); ++t)
        for (std::size_t c : grid->ocean_cells())
            out.at(t, c) = s.at(t, c);
    return out;
}

} // namespace mlhc
