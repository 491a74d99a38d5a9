#include "mlhc/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mlhc/bytes.hpp"
#include "mlhc/error.hpp"
#include "mlhc/synth.hpp"

namespace mlhc::nn {

void TrainConfig::validate() const
{
    std::ostringstream err;
    if (!(lr >= 0.0))
        err << "  lr must be non-negative\n";
    if (!(weight_decay >= 0.0))
        err << "  weight_decay must be non-negative\n";
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        err << "  betas must lie in [0, 1)\n";
    if (!(eps > 0.0))
        err << "  eps must be positive\n";
    if (epochs < 1)
        err << "  epochs must be >= 1\n";
    if (batch_size < 1)
        err << "  batch_size must be >= 1\n";
    if (!(0.0 <= lambda1 && lambda1 <= lambda0 && lambda0 <= 1.0))
        err << "  lambda must satisfy 0 <= lambda1 <= lambda0 <= 1\n";
    const auto msg = err.str();
    if (!msg.empty())
        throw ConfigError("invalid training configuration:\n" + msg);
}

double lambda_schedule(int epoch, int epochs, double lambda0, double lambda1)
{
    if (epochs < 2)
        throw Error("lambda_schedule: need at least two epochs");
    if (epoch < 0 || epoch >= epochs)
        throw Error("lambda_schedule: epoch out of range");
    if (epoch == 0)
        return lambda0;
    if (epoch == epochs - 1)
        return lambda1;
    return lambda0 * std::pow(lambda1 / lambda0, double(epoch) / double(epochs - 1));
}

template <class T>
LossValue l1_loss(const Tensor<T>& bottleneck, const Tensor<T>& y_hat, const Tensor<T>& concepts,
                  const Tensor<T>& y, std::span<const std::uint8_t> mask, int n_supervised, double lambda,
                  Tensor<T>* d_bottleneck, Tensor<T>* dy)
{
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw Error("l1_loss: lambda outside [0, 1]");
    if (n_supervised == 0 && lambda != 0.0)
        throw Error("l1_loss: lambda must be 0 without supervised concepts");
    if (!y_hat.same_shape(y) || y.c != 1 || bottleneck.n != y.n || bottleneck.h != y.h || bottleneck.w != y.w ||
        bottleneck.c < n_supervised || (n_supervised > 0 && (concepts.c < n_supervised || concepts.n != y.n ||
                                                             concepts.h != y.h || concepts.w != y.w)))
        throw Error("l1_loss: shape mismatch");
    if (mask.size() != y.plane())
        throw Error("l1_loss: mask size mismatch");
    const std::size_t n_ocean = std::size_t(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
    if (n_ocean == 0)
        throw Error("l1_loss: mask has no ocean cell");
    const double cnt_pred = double(n_ocean) * y.n;
    const double cnt_concept = cnt_pred * n_supervised;

    if (d_bottleneck)
        *d_bottleneck = Tensor<T>(bottleneck.c, bottleneck.n, bottleneck.h, bottleneck.w);
    if (dy)
        *dy = Tensor<T>(1, y.n, y.h, y.w);

    auto sign = [](double e) { return e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0); };
    LossValue L;
    double sc = 0.0;
    for (int k = 0; k < n_supervised; ++k)
        for (int b = 0; b < y.n; ++b) {
            const T* p = bottleneck.plane_ptr(k, b);
            const T* c = concepts.plane_ptr(k, b);
            T* d = d_bottleneck ? d_bottleneck->plane_ptr(k, b) : nullptr;
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (!mask[i])
                    continue;
                const double e = double(p[i]) - double(c[i]);
                sc += std::abs(e);
                if (d)
                    d[i] = T(lambda * sign(e) / cnt_concept);
            }
        }
    double sp = 0.0;
    for (int b = 0; b < y.n; ++b) {
        const T* p = y_hat.plane_ptr(0, b);
        const T* t = y.plane_ptr(0, b);
        T* d = dy ? dy->plane_ptr(0, b) : nullptr;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i])
                continue;
            const double e = double(p[i]) - double(t[i]);
            sp += std::abs(e);
            if (d)
                d[i] = T((1.0 - lambda) * sign(e) / cnt_pred);
        }
    }
    L.conc = n_supervised > 0 ? sc / cnt_concept : 0.0;
    L.pred = sp / cnt_pred;
    L.total = lambda * L.conc + (1.0 - lambda) * L.pred;
    return L;
}

template LossValue l1_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                           std::span<const std::uint8_t>, int, double, Tensor<float>*, Tensor<float>*);
template LossValue l1_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                           const Tensor<double>&, std::span<const std::uint8_t>, int, double, Tensor<double>*,
                           Tensor<double>*);

// ---------------------------------------------------------------------------

template <class T>
void AdamW<T>::step(const std::vector<Param<T>*>& params)
{
    for (const auto* p : params)
        for (T g : p->grad)
            if (!std::isfinite(double(g)))
                throw NumericalError("AdamW: non-finite gradient in '" + p->name + "'");
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->value.size(), 0.0);
            v_.emplace_back(p->value.size(), 0.0);
        }
    }
    if (m_.size() != params.size())
        throw Error("AdamW: parameter list changed between steps");
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, double(t_));
    const double c2 = 1.0 - std::pow(b2, double(t_));
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            const double mh = m[j] / c1, vh = v[j] / c2;
            const double theta = double(p.value[j]) * decay;
            p.value[j] = T(theta - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
        }
    }
}

template class AdamW<float>;
template class AdamW<double>;

// ---------------------------------------------------------------------------

Batch make_batch(const SampleSet& set, std::span<const std::size_t> idx)
{
    const auto& g = *set.grid();
    const int H = int(g.n_lat()), W = int(g.n_lon()), B = int(idx.size());
    const std::size_t n = g.n_cells();
    Batch b{Tensor<float>(set.channels(), B, H, W), Tensor<float>(4, B, H, W), Tensor<float>(1, B, H, W)};
    std::vector<float> buf(std::size_t(set.channels()) * n);
    for (int s = 0; s < B; ++s) {
        const std::size_t i = idx[std::size_t(s)];
        set.input(i, buf);
        for (int c = 0; c < set.channels(); ++c)
            std::copy_n(buf.data() + std::size_t(c) * n, n, b.x.plane_ptr(c, s));
        set.concept_target(i, std::span<float>(buf.data(), 4 * n));
        for (int k = 0; k < 4; ++k)
            std::copy_n(buf.data() + std::size_t(k) * n, n, b.concepts.plane_ptr(k, s));
        set.target(i, std::span<float>(b.y.plane_ptr(0, s), n));
    }
    return b;
}

namespace {

void accumulate(LossValue& acc, const LossValue& l, double w)
{
    acc.conc += w * l.conc;
    acc.pred += w * l.pred;
    acc.total += w * l.total;
}

void scale(LossValue& l, double s)
{
    l.conc *= s;
    l.pred *= s;
    l.total *= s;
}

std::span<const std::uint8_t> mask_of(const SampleSet& set)
{
    return set.grid()->mask();
}

} // namespace

LossValue evaluate_loss(Network<float>& net, const SampleSet& set, double lambda, int batch_size)
{
    LossValue acc;
    const int ns = net.config().supervised_channels();
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < set.size(); start += std::size_t(batch_size)) {
        idx.clear();
        for (std::size_t i = start; i < std::min(set.size(), start + std::size_t(batch_size)); ++i)
            idx.push_back(i);
        const Batch b = make_batch(set, idx);
        const auto out = net.forward(b.x, false);
        accumulate(acc, l1_loss(out.bottleneck, out.y, b.concepts, b.y, mask_of(set), ns, ns ? lambda : 0.0),
                   double(idx.size()));
    }
    scale(acc, 1.0 / double(set.size()));
    return acc;
}

TrainResult train(const NetConfig& net_cfg, const SampleSet& train_set, const SampleSet* val_set,
                  const TrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch)
{
    cfg.validate();
    if (train_set.empty())
        throw Error("train: empty training set");
    if (net_cfg.in_channels != train_set.channels())
        throw ConfigError("train: network expects " + std::to_string(net_cfg.in_channels) +
                          " input channels but samples carry " + std::to_string(train_set.channels()));
    TrainResult res{Network<float>(net_cfg, seed), {}};
    Network<float>& net = res.net;
    AdamW<float> opt(cfg);
    const int ns = net_cfg.supervised_channels();
    const auto mask = mask_of(train_set);

    std::vector<std::size_t> order(train_set.size());
    Tensor<float> d_bottleneck, dy;
    for (int e = 0; e < cfg.epochs; ++e) {
        double lambda = 0.0;
        if (ns > 0)
            lambda = cfg.epochs == 1 ? cfg.lambda0 : lambda_schedule(e, cfg.epochs, cfg.lambda0, cfg.lambda1);
        std::iota(order.begin(), order.end(), std::size_t(0));
        std::mt19937_64 rng(stream_seed(seed, e, "shuffle"));
        std::shuffle(order.begin(), order.end(), rng);

        EpochRecord rec;
        rec.epoch = e;
        rec.lambda = lambda;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Batch b = make_batch(train_set, idx);
            const auto out = net.forward(b.x, true);
            const auto L = l1_loss(out.bottleneck, out.y, b.concepts, b.y, mask, ns, lambda, &d_bottleneck, &dy);
            if (!std::isfinite(L.total))
                throw NumericalError("training diverged in epoch " + std::to_string(e) + " (non-finite loss)");
            net.zero_grad();
            net.backward(d_bottleneck, dy);
            try {
                opt.step(net.params());
            } catch (const NumericalError& err) {
                throw NumericalError("training diverged in epoch " + std::to_string(e) + ": " + err.what());
            }
            accumulate(rec.train, L, double(idx.size()));
        }
        scale(rec.train, 1.0 / double(order.size()));
        if (val_set && !val_set->empty()) {
            rec.val = evaluate_loss(net, *val_set, lambda, cfg.batch_size);
            if (!std::isfinite(rec.val.total))
                throw NumericalError("validation loss is non-finite in epoch " + std::to_string(e));
        }
        res.history.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
    }
    return res;
}

Prediction predict(Network<float>& net, const SampleSet& set, int batch_size)
{
    Prediction p;
    p.channels = net.config().bottleneck_channels();
    p.cells = set.grid()->n_cells();
    p.y.resize(set.size() * p.cells);
    p.bottleneck.resize(set.size() * std::size_t(p.channels) * p.cells);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < set.size(); start += std::size_t(batch_size)) {
        idx.clear();
        for (std::size_t i = start; i < std::min(set.size(), start + std::size_t(batch_size)); ++i)
            idx.push_back(i);
        const Batch b = make_batch(set, idx);
        const auto out = net.forward(b.x, false);
        for (std::size_t s = 0; s < idx.size(); ++s) {
            const std::size_t i = idx[s];
            std::copy_n(out.y.plane_ptr(0, int(s)), p.cells, p.y.data() + i * p.cells);
            for (int k = 0; k < p.channels; ++k)
                std::copy_n(out.bottleneck.plane_ptr(k, int(s)), p.cells,
                            p.bottleneck.data() + (i * std::size_t(p.channels) + std::size_t(k)) * p.cells);
        }
    }
    return p;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t checkpoint_version = 1;

std::string config_text(const NetConfig& c)
{
    std::ostringstream s;
    s << "mode=" << mode_name(c.mode) << "\nin_channels=" << c.in_channels << "\nwidths=" << c.widths[0] << ','
      << c.widths[1] << ',' << c.widths[2] << ',' << c.widths[3] << "\nn_prescribed=" << c.n_prescribed << '\n';
    return s.str();
}

NetConfig parse_config_text(const std::string& text)
{
    NetConfig c;
    std::istringstream in(text);
    std::string line;
    int seen = 0;
    auto bad = [&]() { return ParseError(ParseError::Kind::shape_mismatch, "checkpoint: malformed config echo"); };
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw bad();
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        try {
            if (key == "mode")
                c.mode = parse_mode(val);
            else if (key == "in_channels")
                c.in_channels = std::stoi(val);
            else if (key == "n_prescribed")
                c.n_prescribed = std::stoi(val);
            else if (key == "widths") {
                std::istringstream ws(val);
                std::string part;
                for (int i = 0; i < 4; ++i) {
                    if (!std::getline(ws, part, ','))
                        throw bad();
                    c.widths[std::size_t(i)] = std::stoi(part);
                }
            } else
                throw bad();
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            throw bad();
        }
        ++seen;
    }
    if (seen != 4)
        throw bad();
    return c;
}

} // namespace

std::vector<std::uint8_t> checkpoint_encode(Network<float>& net, std::uint64_t seed)
{
    ByteWriter w;
    w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("MCK1"), 4));
    w.u32(checkpoint_version);
    w.str16(config_text(net.config()));
    w.u64(seed);
    const auto params = net.params();
    w.u32(std::uint32_t(params.size()));
    for (const auto* p : params) {
        w.str16(p->name);
        w.u32(std::uint32_t(p->value.size()));
        for (float v : p->value)
            w.f32(v);
    }
    const auto bns = net.batchnorms();
    w.u32(std::uint32_t(bns.size()));
    for (auto* bn : bns) {
        w.str16(bn->name());
        w.u32(std::uint32_t(bn->channels()));
        for (float v : bn->running_mean())
            w.f32(v);
        for (float v : bn->running_var())
            w.f32(v);
    }
    w.crc_trailer();
    return w.bytes();
}

Network<float> checkpoint_decode(std::span<const std::uint8_t> bytes, std::uint64_t* seed)
{
    using K = ParseError::Kind;
    {
        ByteReader head(bytes, "checkpoint");
        const auto magic = head.raw(4);
        if (!std::equal(magic.begin(), magic.end(), "MCK1"))
            throw ParseError(K::bad_magic, "checkpoint: bad magic");
        const auto version = head.u32();
        if (version != checkpoint_version)
            throw ParseError(K::bad_version, "checkpoint: unsupported version " + std::to_string(version));
    }
    const auto body = verify_crc_trailer(bytes, "checkpoint");
    ByteReader r(body, "checkpoint");
    r.raw(8);
    const NetConfig cfg = parse_config_text(r.str16());
    const std::uint64_t s = r.u64();
    if (seed)
        *seed = s;
    Network<float> net(cfg, s);
    const auto params = net.params();
    if (r.u32() != params.size())
        throw ParseError(K::shape_mismatch, "checkpoint: parameter count does not match the configuration");
    for (auto* p : params) {
        const auto name = r.str16();
        const auto n = r.u32();
        if (name != p->name || n != p->value.size())
            throw ParseError(K::shape_mismatch, "checkpoint: unexpected parameter '" + name + "'");
        for (auto& v : p->value)
            v = r.f32();
    }
    const auto bns = net.batchnorms();
    if (r.u32() != bns.size())
        throw ParseError(K::shape_mismatch, "checkpoint: batch-norm count does not match the configuration");
    for (auto* bn : bns) {
        const auto name = r.str16();
        const auto n = r.u32();
        if (name != bn->name() || int(n) != bn->channels())
            throw ParseError(K::shape_mismatch, "checkpoint: unexpected batch-norm '" + name + "'");
        for (auto& v : bn->running_mean())
            v = r.f32();
        for (auto& v : bn->running_var())
            v = r.f32();
    }
    if (r.remaining() != 0)
        throw ParseError(K::shape_mismatch, "checkpoint: trailing bytes");
    return net;
}

void checkpoint_write(const std::filesystem::path& path, Network<float>& net, std::uint64_t seed)
{
    write_file_bytes(path, checkpoint_encode(net, seed));
}

Network<float> checkpoint_read(const std::filesystem::path& path, std::uint64_t* seed)
{
    const auto bytes = read_file_bytes(path);
    return checkpoint_decode(bytes, seed);
}

} // namespace mlhc::nn
