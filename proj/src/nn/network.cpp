#include "mlhc/nn/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "mlhc/dataset.hpp"
#include "mlhc/error.hpp"
#include "mlhc/synth.hpp"

namespace mlhc::nn {

std::string_view mode_name(Mode m) noexcept
{
    switch (m) {
    case Mode::mixed: return "mixed";
    case Mode::prediction_only: return "prediction_only";
    case Mode::prescription_only: return "prescription_only";
    }
    return "?";
}

Mode parse_mode(std::string_view name)
{
    for (Mode m : all_modes)
        if (mode_name(m) == name)
            return m;
    throw ConfigError("unknown configuration '" + std::string(name) +
                      "' (expected mixed, prediction_only or prescription_only)");
}

int NetConfig::bottleneck_channels() const noexcept
{
    return mode == Mode::prescription_only ? n_prescribed : n_prescribed + 1;
}

std::vector<std::string> NetConfig::channel_labels() const
{
    std::vector<std::string> labels;
    if (mode == Mode::prediction_only) {
        for (int k = 0; k < bottleneck_channels(); ++k)
            labels.push_back("latent-" + std::to_string(k + 1));
        return labels;
    }
    for (int k = 0; k < n_prescribed; ++k)
        labels.emplace_back(k < int(concept_variables.size()) ? concept_variables[std::size_t(k)]
                                                              : "concept-" + std::to_string(k + 1));
    if (n_free())
        labels.emplace_back("free");
    return labels;
}

void NetConfig::validate() const
{
    std::ostringstream err;
    if (in_channels < 1)
        err << "  in_channels must be positive\n";
    for (int w : widths)
        if (w < 1) {
            err << "  widths must be positive\n";
            break;
        }
    if (n_prescribed < 1)
        err << "  n_prescribed must be positive\n";
    const auto msg = err.str();
    if (!msg.empty())
        throw ConfigError("invalid network configuration:\n" + msg);
}

// ---------------------------------------------------------------------------

namespace {

// conv3x3 (no bias) -> batch norm -> ReLU
template <class T>
struct Block {
    Conv2d<T> conv;
    BatchNorm2d<T> bn;

    Block(const std::string& name, int in, int out)
        : conv(name + ".conv", in, out, 3, false), bn(name + ".bn", out, true)
    {
    }

    Tensor<T> forward(Tensor<T> x, bool train) { return bn.forward(conv.forward(std::move(x), train), train); }
    Tensor<T> backward(const Tensor<T>& dy) { return conv.backward(bn.backward(dy)); }
};

template <class T>
void add_into(Tensor<T>& a, const Tensor<T>& b)
{
    for (std::size_t i = 0; i < a.v.size(); ++i)
        a.v[i] += b.v[i];
}

int round_up16(int v)
{
    return (v + 15) / 16 * 16;
}

} // namespace

template <class T>
struct Network<T>::Impl {
    std::vector<Block<T>> enc_a, enc_b;
    std::vector<MaxPool2<T>> pool;
    std::vector<Block<T>> bottom;
    std::vector<ConvTranspose2<T>> up;
    std::vector<Block<T>> dec_a, dec_b;  // index = stage
    std::unique_ptr<Conv2d<T>> head, free;
    std::unique_ptr<Combine<T>> comb;
    std::array<int, 4> skip_channels{};
    int h = 0, w = 0, hp = 0, wp = 0;
    bool trained_forward = false;
};

template <class T>
Network<T>::Network(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg), impl_(std::make_unique<Impl>())
{
    cfg_.validate();
    auto& m = *impl_;
    const auto& W = cfg_.widths;
    m.enc_a.reserve(4);
    m.enc_b.reserve(4);
    m.dec_a.reserve(4);
    m.dec_b.reserve(4);
    m.up.reserve(4);
    m.bottom.reserve(2);
    int in = cfg_.in_channels;
    for (int s = 0; s < 4; ++s) {
        const std::string p = "enc" + std::to_string(s);
        m.enc_a.emplace_back(p + ".a", in, W[s]);
        m.enc_b.emplace_back(p + ".b", W[s], W[s]);
        m.pool.emplace_back();
        m.skip_channels[s] = W[s];
        in = W[s];
    }
    m.enc_a[0].conv.set_input_grad(false);
    const int deep = 2 * W[3];
    m.bottom.emplace_back("bottom.a", W[3], deep);
    m.bottom.emplace_back("bottom.b", deep, deep);
    // Decoder stages are stored by stage index but built deepest first.
    std::vector<int> prev_ch(4);
    int prev = deep;
    for (int s = 3; s >= 0; --s) {
        prev_ch[s] = prev;
        prev = W[s];
    }
    for (int s = 0; s < 4; ++s) {
        const std::string p = "dec" + std::to_string(s);
        m.up.emplace_back(p + ".up", prev_ch[s], W[s]);
        m.dec_a.emplace_back(p + ".a", 2 * W[s], W[s]);
        m.dec_b.emplace_back(p + ".b", W[s], W[s]);
    }
    const bool latent = cfg_.mode == Mode::prediction_only;
    m.head = std::make_unique<Conv2d<T>>(latent ? "latent_head" : "concept_head", W[0],
                                         latent ? cfg_.bottleneck_channels() : cfg_.n_prescribed, 1, true);
    if (cfg_.n_free())
        m.free = std::make_unique<Conv2d<T>>("free_head", W[0], cfg_.n_free(), 1, true);
    m.comb = std::make_unique<Combine<T>>("combine", cfg_.bottleneck_channels());

    // Initialisation: He-normal for convolutions feeding ReLU, fan-in scaled
    // normal for heads and upsampling, uniform for the combine weights.
    auto normal = [&](Param<T>& p, double std) {
        std::mt19937_64 rng(stream_seed(seed, 0, p.name));
        std::normal_distribution<double> nd(0.0, std);
        for (auto& v : p.value)
            v = T(nd(rng));
    };
    auto blocks = [&](std::vector<Block<T>>& bs) {
        for (auto& b : bs)
            normal(b.conv.weight(), std::sqrt(2.0 / (b.conv.in_channels() * 9)));
    };
    blocks(m.enc_a);
    blocks(m.enc_b);
    blocks(m.bottom);
    blocks(m.dec_a);
    blocks(m.dec_b);
    for (auto& u : m.up)
        normal(u.weight(), std::sqrt(1.0 / u.in_channels()));
    normal(m.head->weight(), std::sqrt(1.0 / W[0]));
    if (m.free)
        normal(m.free->weight(), std::sqrt(1.0 / W[0]));
    {
        auto& p = m.comb->weight();
        std::mt19937_64 rng(stream_seed(seed, 0, p.name));
        const double a = 1.0 / std::sqrt(double(p.value.size()));
        std::uniform_real_distribution<double> ud(-a, a);
        for (auto& v : p.value)
            v = T(ud(rng));
    }
}

template <class T>
Network<T>::~Network() = default;
template <class T>
Network<T>::Network(Network&&) noexcept = default;
template <class T>
Network<T>& Network<T>::operator=(Network&&) noexcept = default;

template <class T>
NetOutput<T> Network<T>::forward(const Tensor<T>& x, bool train)
{
    auto& m = *impl_;
    if (x.c != cfg_.in_channels)
        throw Error("Network: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                    std::to_string(x.c));
    if (x.n < 1 || x.h < 1 || x.w < 1)
        throw Error("Network: empty input");
    m.h = x.h;
    m.w = x.w;
    m.hp = round_up16(x.h);
    m.wp = round_up16(x.w);

    std::array<Tensor<T>, 4> skips;
    Tensor<T> cur = pad_replicate(x, m.hp, m.wp);
    for (int s = 0; s < 4; ++s) {
        skips[s] = m.enc_b[s].forward(m.enc_a[s].forward(std::move(cur), train), train);
        cur = m.pool[s].forward(skips[s], train);
    }
    cur = m.bottom[1].forward(m.bottom[0].forward(std::move(cur), train), train);
    for (int s = 3; s >= 0; --s) {
        cur = concat_channels(skips[s], m.up[s].forward(std::move(cur), train));
        skips[s] = Tensor<T>();
        cur = m.dec_b[s].forward(m.dec_a[s].forward(std::move(cur), train), train);
    }
    Tensor<T> z;
    if (m.free) {
        z = m.head->forward(cur, train);
        z = concat_channels(z, m.free->forward(std::move(cur), train));
    } else {
        z = m.head->forward(std::move(cur), train);
    }
    Tensor<T> y = m.comb->forward(z, train);
    m.trained_forward = train;
    return {crop(z, m.h, m.w), crop(y, m.h, m.w)};
}

template <class T>
void Network<T>::backward(const Tensor<T>& d_bottleneck, const Tensor<T>& dy)
{
    auto& m = *impl_;
    if (!m.trained_forward)
        throw Error("Network: backward requires a training-mode forward");
    if (d_bottleneck.c != cfg_.bottleneck_channels() || d_bottleneck.h != m.h || d_bottleneck.w != m.w ||
        dy.c != 1 || dy.h != m.h || dy.w != m.w || dy.n != d_bottleneck.n)
        throw Error("Network: gradient shape mismatch");

    Tensor<T> dz = m.comb->backward(uncrop(dy, m.hp, m.wp));
    add_into(dz, uncrop(d_bottleneck, m.hp, m.wp));
    Tensor<T> d;
    if (m.free) {
        Tensor<T> dh, df;
        split_channels(dz, m.head->out_channels(), dh, df);
        d = m.head->backward(dh);
        add_into(d, m.free->backward(df));
    } else {
        d = m.head->backward(dz);
    }

    std::array<Tensor<T>, 4> dskips;
    for (int s = 0; s < 4; ++s) {
        d = m.dec_a[s].backward(m.dec_b[s].backward(d));
        Tensor<T> dup;
        split_channels(d, m.skip_channels[s], dskips[s], dup);
        d = m.up[s].backward(dup);
    }
    d = m.bottom[0].backward(m.bottom[1].backward(d));
    for (int s = 3; s >= 0; --s) {
        d = m.pool[s].backward(d);
        add_into(d, dskips[s]);
        d = m.enc_a[s].backward(m.enc_b[s].backward(d));
    }
}

template <class T>
std::vector<Param<T>*> Network<T>::params()
{
    auto& m = *impl_;
    std::vector<Param<T>*> out;
    auto add = [&](std::vector<Param<T>*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    auto block = [&](Block<T>& b) {
        add(b.conv.params());
        add(b.bn.params());
    };
    for (int s = 0; s < 4; ++s) {
        block(m.enc_a[s]);
        block(m.enc_b[s]);
    }
    block(m.bottom[0]);
    block(m.bottom[1]);
    for (int s = 3; s >= 0; --s) {
        add(m.up[s].params());
        block(m.dec_a[s]);
        block(m.dec_b[s]);
    }
    add(m.head->params());
    if (m.free)
        add(m.free->params());
    add(m.comb->params());
    return out;
}

template <class T>
std::vector<BatchNorm2d<T>*> Network<T>::batchnorms()
{
    auto& m = *impl_;
    std::vector<BatchNorm2d<T>*> out;
    for (int s = 0; s < 4; ++s) {
        out.push_back(&m.enc_a[s].bn);
        out.push_back(&m.enc_b[s].bn);
    }
    out.push_back(&m.bottom[0].bn);
    out.push_back(&m.bottom[1].bn);
    for (int s = 3; s >= 0; --s) {
        out.push_back(&m.dec_a[s].bn);
        out.push_back(&m.dec_b[s].bn);
    }
    return out;
}

template <class T>
void Network<T>::zero_grad()
{
    for (auto* p : params())
        std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <class T>
Combine<T>& Network<T>::combine()
{
    return *impl_->comb;
}

template <class T>
Conv2d<T>& Network<T>::concept_head()
{
    return *impl_->head;
}

template <class T>
Conv2d<T>* Network<T>::free_head()
{
    return impl_->free.get();
}

template <class T>
std::size_t Network<T>::parameter_count()
{
    std::size_t n = 0;
    for (auto* p : params())
        n += p->value.size();
    return n;
}

template <class From, class To>
void copy_state(Network<From>& from, Network<To>& to)
{
    if (!(from.config() == to.config()))
        throw Error("copy_state: network configurations differ");
    auto pf = from.params();
    auto pt = to.params();
    for (std::size_t i = 0; i < pf.size(); ++i)
        for (std::size_t j = 0; j < pf[i]->value.size(); ++j)
            pt[i]->value[j] = To(pf[i]->value[j]);
    auto bf = from.batchnorms();
    auto bt = to.batchnorms();
    for (std::size_t i = 0; i < bf.size(); ++i)
        for (int c = 0; c < bf[i]->channels(); ++c) {
            bt[i]->running_mean()[c] = To(bf[i]->running_mean()[c]);
            bt[i]->running_var()[c] = To(bf[i]->running_var()[c]);
        }
}

template class Network<float>;
template class Network<double>;
template void copy_state(Network<float>&, Network<double>&);
template void copy_state(Network<double>&, Network<float>&);
template void copy_state(Network<float>&, Network<float>&);
template void copy_state(Network<double>&, Network<double>&);

} // namespace mlhc::nn
