#include "mlhc/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "mlhc/error.hpp"

namespace mlhc {

void EnsembleSpec::validate() const
{
    std::vector<std::string> problems;
    if (seeds.empty())
        problems.push_back("ensemble needs at least one seed");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        problems.push_back("ensemble seeds must be distinct");
    if (configurations.empty())
        problems.push_back("ensemble needs at least one configuration");
    std::set<nn::Mode> modes(configurations.begin(), configurations.end());
    if (modes.size() != configurations.size())
        problems.push_back("ensemble configurations repeat");
    if (!problems.empty()) {
        std::string msg;
        for (const auto& p : problems)
            msg += (msg.empty() ? "" : "; ") + p;
        throw ConfigError(msg);
    }
}

std::string member_name(int member)
{
    return "v" + std::to_string(member + 1);
}

std::filesystem::path member_checkpoint(const std::filesystem::path& run, nn::Mode mode, int member)
{
    return run / std::string(nn::mode_name(mode)) / (member_name(member) + ".ckpt");
}

namespace {

[[noreturn]] void rethrow_tagged(std::exception_ptr e, const std::string& tag)
{
    try {
        std::rethrow_exception(e);
    } catch (const ParseError& x) {
        throw ParseError(x.kind(), tag + x.what());
    } catch (const ConfigError& x) {
        throw ConfigError(tag + x.what());
    } catch (const MissingInputError& x) {
        throw MissingInputError(tag + x.what());
    } catch (const NumericalError& x) {
        throw NumericalError(tag + x.what());
    } catch (const std::exception& x) {
        throw Error(tag + x.what());
    }
}

} // namespace

std::vector<EnsembleMembers> train_ensemble(const EnsembleSpec& spec, const nn::NetConfig& base,
                                            const SampleSet& train_set, const SampleSet* val_set,
                                            const nn::TrainConfig& cfg, int jobs,
                                            const MemberEpochCallback& on_epoch)
{
    spec.validate();
    cfg.validate();
    if (jobs < 1)
        throw ConfigError("train_ensemble: jobs must be >= 1");

    struct Task {
        std::size_t config;
        int member;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < spec.configurations.size(); ++c)
        for (int m = 0; m < spec.n_members(); ++m)
            tasks.push_back({c, m});

    std::vector<std::vector<std::optional<nn::TrainResult>>> slots(spec.configurations.size());
    for (auto& s : slots)
        s.resize(static_cast<std::size_t>(spec.n_members()));
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex callback_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size() || failed.load())
                return;
            const Task t = tasks[i];
            const nn::Mode mode = spec.configurations[t.config];
            try {
                nn::NetConfig net_cfg = base;
                net_cfg.mode = mode;
                nn::EpochCallback cb;
                if (on_epoch) {
                    cb = [&, mode, member = t.member](const nn::EpochRecord& r) {
                        std::lock_guard lock(callback_mutex);
                        on_epoch(mode, member, r);
                    };
                }
                slots[t.config][static_cast<std::size_t>(t.member)] =
                    nn::train(net_cfg, train_set, val_set, cfg, spec.seeds[static_cast<std::size_t>(t.member)], cb);
            } catch (...) {
                errors[i] = std::current_exception();
                failed.store(true);
            }
        }
    };

    const int n_threads = std::min<int>(jobs, static_cast<int>(tasks.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n_threads; ++k)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (errors[i]) {
            const Task t = tasks[i];
            rethrow_tagged(errors[i], "[" + std::string(nn::mode_name(spec.configurations[t.config])) + " " +
                                          member_name(t.member) + "] ");
        }
    }

    std::vector<EnsembleMembers> out;
    for (std::size_t c = 0; c < spec.configurations.size(); ++c) {
        EnsembleMembers em;
        em.mode = spec.configurations[c];
        for (auto& r : slots[c])
            em.members.push_back(std::move(*r));
        out.push_back(std::move(em));
    }
    return out;
}

namespace {

// Two-pass mean and population std of member values at each position.
template <class Get>
void moments(std::size_t n, int members, Get get, std::vector<double>& mean, std::vector<double>* std_out)
{
    mean.assign(n, 0.0);
    for (int m = 0; m < members; ++m)
        for (std::size_t i = 0; i < n; ++i)
            mean[i] += get(m, i);
    for (auto& v : mean)
        v /= members;
    if (!std_out)
        return;
    std_out->assign(n, 0.0);
    for (int m = 0; m < members; ++m)
        for (std::size_t i = 0; i < n; ++i) {
            const double d = get(m, i) - mean[i];
            (*std_out)[i] += d * d;
        }
    for (auto& v : *std_out)
        v = std::sqrt(v / members);
}

} // namespace

EnsemblePrediction aggregate(std::vector<nn::Prediction> members, bool with_spread)
{
    if (members.empty())
        throw Error("aggregate: no member prediction");
    if (with_spread && members.size() < 2)
        throw Error("aggregate: ensemble spread needs at least 2 members");
    const auto& first = members.front();
    for (const auto& p : members) {
        if (p.channels != first.channels || p.cells != first.cells || p.y.size() != first.y.size() ||
            p.bottleneck.size() != first.bottleneck.size())
            throw Error("aggregate: member predictions differ in shape");
    }

    EnsemblePrediction out;
    out.channels = first.channels;
    out.cells = first.cells;
    out.samples = first.cells ? first.y.size() / first.cells : 0;
    const int n = static_cast<int>(members.size());
    moments(first.y.size(), n, [&](int m, std::size_t i) { return double(members[std::size_t(m)].y[i]); },
            out.mean_y, with_spread ? &out.std_y : nullptr);
    moments(first.bottleneck.size(), n,
            [&](int m, std::size_t i) { return double(members[std::size_t(m)].bottleneck[i]); }, out.mean_z,
            with_spread ? &out.std_z : nullptr);
    out.members = std::move(members);
    return out;
}

EnsemblePrediction predict_ensemble(std::vector<nn::Network<float>*> nets, const SampleSet& set, bool with_spread,
                                    int batch_size)
{
    std::vector<nn::Prediction> preds;
    for (auto* net : nets)
        preds.push_back(nn::predict(*net, set, batch_size));
    return aggregate(std::move(preds), with_spread);
}

std::vector<double> band_lower(const std::vector<double>& mean, const std::vector<double>& std)
{
    if (mean.size() != std.size())
        throw Error("band_lower: size mismatch");
    std::vector<double> out(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i)
        out[i] = mean[i] - 2.0 * std[i];
    return out;
}

std::vector<double> band_upper(const std::vector<double>& mean, const std::vector<double>& std)
{
    if (mean.size() != std.size())
        throw Error("band_upper: size mismatch");
    std::vector<double> out(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i)
        out[i] = mean[i] + 2.0 * std[i];
    return out;
}

} // namespace mlhc
