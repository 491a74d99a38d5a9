#include "doctest.h"

#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "mlhc/error.hpp"
#include "mlhc/nn/train.hpp"
#include "fd_harness.hpp"
#include "test_util.hpp"

using namespace mlhc;
using namespace mlhc::nn;
using namespace mlhc::testing;

namespace {

// ---------------------------------------------------------------------------
// Definition-level forward oracle, written from the layer formulas alone.

struct Field {
    int c = 0, n = 0, h = 0, w = 0;
    std::vector<double> v;
    Field() = default;
    Field(int c_, int n_, int h_, int w_) : c(c_), n(n_), h(h_), w(w_), v(std::size_t(c_) * n_ * h_ * w_, 0.0) {}
    double& at(int ch, int b, int i, int j) { return v[((std::size_t(ch) * n + b) * h + i) * w + j]; }
    double at(int ch, int b, int i, int j) const { return v[((std::size_t(ch) * n + b) * h + i) * w + j]; }
};

using Weights = std::map<std::string, std::vector<double>>;

Field conv(const Field& x, const Weights& W, const std::string& name, int out, int k, bool bias)
{
    const auto& wt = W.at(name + ".weight");
    Field y(out, x.n, x.h, x.w);
    for (int o = 0; o < out; ++o)
        for (int b = 0; b < x.n; ++b)
            for (int i = 0; i < x.h; ++i)
                for (int j = 0; j < x.w; ++j) {
                    double s = bias ? W.at(name + ".bias")[o] : 0.0;
                    for (int ci = 0; ci < x.c; ++ci)
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx) {
                                const int ii = i + dy - k / 2, jj = j + dx - k / 2;
                                if (ii < 0 || ii >= x.h || jj < 0 || jj >= x.w)
                                    continue;
                                s += wt[((std::size_t(o) * x.c + ci) * k + dy) * k + dx] * x.at(ci, b, ii, jj);
                            }
                    y.at(o, b, i, j) = s;
                }
    return y;
}

Field batchnorm_relu(const Field& x, const Weights& W, const std::string& name, bool train)
{
    Field y = x;
    for (int c = 0; c < x.c; ++c) {
        double mean = 0, var = 0;
        if (train) {
            const double cnt = double(x.n) * x.h * x.w;
            for (int b = 0; b < x.n; ++b)
                for (int i = 0; i < x.h; ++i)
                    for (int j = 0; j < x.w; ++j)
                        mean += x.at(c, b, i, j) / cnt;
            for (int b = 0; b < x.n; ++b)
                for (int i = 0; i < x.h; ++i)
                    for (int j = 0; j < x.w; ++j)
                        var += (x.at(c, b, i, j) - mean) * (x.at(c, b, i, j) - mean) / cnt;
        } else {
            mean = W.at(name + ".running_mean")[c];
            var = W.at(name + ".running_var")[c];
        }
        for (int b = 0; b < x.n; ++b)
            for (int i = 0; i < x.h; ++i)
                for (int j = 0; j < x.w; ++j) {
                    const double z = W.at(name + ".gamma")[c] * (x.at(c, b, i, j) - mean) / std::sqrt(var + 1e-5) +
                                     W.at(name + ".beta")[c];
                    y.at(c, b, i, j) = std::max(z, 0.0);
                }
    }
    return y;
}

Field block(const Field& x, const Weights& W, const std::string& name, int out, bool train)
{
    return batchnorm_relu(conv(x, W, name + ".conv", out, 3, false), W, name + ".bn", train);
}

Field maxpool(const Field& x)
{
    Field y(x.c, x.n, x.h / 2, x.w / 2);
    for (int c = 0; c < x.c; ++c)
        for (int b = 0; b < x.n; ++b)
            for (int i = 0; i < y.h; ++i)
                for (int j = 0; j < y.w; ++j)
                    y.at(c, b, i, j) = std::max({x.at(c, b, 2 * i, 2 * j), x.at(c, b, 2 * i, 2 * j + 1),
                                                 x.at(c, b, 2 * i + 1, 2 * j), x.at(c, b, 2 * i + 1, 2 * j + 1)});
    return y;
}

Field upconv(const Field& x, const Weights& W, const std::string& name, int out)
{
    const auto& wt = W.at(name + ".weight");
    Field y(out, x.n, 2 * x.h, 2 * x.w);
    for (int o = 0; o < out; ++o)
        for (int b = 0; b < x.n; ++b)
            for (int i = 0; i < y.h; ++i)
                for (int j = 0; j < y.w; ++j) {
                    double s = W.at(name + ".bias")[o];
                    for (int ci = 0; ci < x.c; ++ci)
                        s += x.at(ci, b, i / 2, j / 2) * wt[((std::size_t(ci) * out + o) * 2 + i % 2) * 2 + j % 2];
                    y.at(o, b, i, j) = s;
                }
    return y;
}

Field cat(const Field& a, const Field& b)
{
    Field y(a.c + b.c, a.n, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + std::ptrdiff_t(a.v.size()));
    return y;
}

struct OracleOut {
    Field z, y;
};

OracleOut oracle_forward(const Field& x0, const Weights& W, const NetConfig& cfg, bool train)
{
    const int hp = (x0.h + 15) / 16 * 16, wp = (x0.w + 15) / 16 * 16;
    Field x(x0.c, x0.n, hp, wp);
    for (int c = 0; c < x.c; ++c)
        for (int b = 0; b < x.n; ++b)
            for (int i = 0; i < hp; ++i)
                for (int j = 0; j < wp; ++j)
                    x.at(c, b, i, j) = x0.at(c, b, std::min(i, x0.h - 1), std::min(j, x0.w - 1));
    const auto& wd = cfg.widths;
    std::vector<Field> skip(4);
    for (int s = 0; s < 4; ++s) {
        const std::string p = "enc" + std::to_string(s);
        skip[s] = block(block(x, W, p + ".a", wd[s], train), W, p + ".b", wd[s], train);
        x = maxpool(skip[s]);
    }
    x = block(block(x, W, "bottom.a", 2 * wd[3], train), W, "bottom.b", 2 * wd[3], train);
    for (int s = 3; s >= 0; --s) {
        const std::string p = "dec" + std::to_string(s);
        x = cat(skip[s], upconv(x, W, p + ".up", wd[s]));
        x = block(block(x, W, p + ".a", wd[s], train), W, p + ".b", wd[s], train);
    }
    const bool latent = cfg.mode == Mode::prediction_only;
    Field z = conv(x, W, latent ? "latent_head" : "concept_head", latent ? 5 : cfg.n_prescribed, 1, true);
    if (cfg.mode == Mode::mixed)
        z = cat(z, conv(x, W, "free_head", 1, 1, true));
    Field y(1, z.n, z.h, z.w);
    for (int b = 0; b < z.n; ++b)
        for (int i = 0; i < z.h; ++i)
            for (int j = 0; j < z.w; ++j) {
                double s = W.at("combine.bias")[0];
                for (int k = 0; k < z.c; ++k)
                    s += W.at("combine.weight")[k] * z.at(k, b, i, j);
                y.at(0, b, i, j) = s;
            }
    auto crop_to = [&](const Field& f) {
        Field o(f.c, f.n, x0.h, x0.w);
        for (int c = 0; c < f.c; ++c)
            for (int b = 0; b < f.n; ++b)
                for (int i = 0; i < x0.h; ++i)
                    for (int j = 0; j < x0.w; ++j)
                        o.at(c, b, i, j) = f.at(c, b, i, j);
        return o;
    };
    return {crop_to(z), crop_to(y)};
}

template <class T>
Weights weights_of(Network<T>& net)
{
    Weights W;
    for (auto* p : net.params())
        W[p->name].assign(p->value.begin(), p->value.end());
    for (auto* bn : net.batchnorms()) {
        W[bn->name() + ".running_mean"].assign(bn->running_mean().begin(), bn->running_mean().end());
        W[bn->name() + ".running_var"].assign(bn->running_var().begin(), bn->running_var().end());
    }
    return W;
}

Field to_field(const Tensor<double>& t)
{
    Field f(t.c, t.n, t.h, t.w);
    f.v = t.v.empty() ? std::vector<double>() : std::vector<double>(t.v.begin(), t.v.end());
    return f;
}

NetConfig tiny_config(Mode mode = Mode::mixed, int in = 3)
{
    NetConfig c;
    c.in_channels = in;
    c.widths = {2, 2, 2, 2};
    c.mode = mode;
    return c;
}


template <class Check>
void for_both_precisions(Check check)
{
    // Double analytic gradients vs double differences with a small step.
    const FdResult d = check(double{}, 2e-4, 1e-3);
    INFO("double: " << d.worst << " (" << d.kinks << " kink probes skipped)");
    CHECK(d.probes >= 50);
    CHECK(d.kinks < d.probes);
    CHECK(d.max_rel < 1e-6);
    // Single-precision analytic gradients vs differences (step 1e-3) on the
    // double shadow.
    const FdResult f = check(float{}, 1e-3, 1e-2);
    INFO("single: " << f.worst << " (" << f.kinks << " kink probes skipped)");
    CHECK(f.probes >= 50);
    CHECK(f.kinks < f.probes);
    CHECK(f.max_rel < 1e-3);
}


template <class T>
bool same_params(Network<T>& a, Network<T>& b)
{
    auto pa = a.params(), pb = b.params();
    if (pa.size() != pb.size())
        return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (pa[i]->value != pb[i]->value)
            return false;
    return true;
}

} // namespace

// ---------------------------------------------------------------------------

TEST_CASE("forward matches a definition-level oracle")
{
    for (Mode mode : all_modes) {
        CAPTURE(mode_name(mode));
        const auto cfg = tiny_config(mode);
        Network<double> net(cfg, 11);
        randomize(net.params(), 12, 0.7);
        std::mt19937_64 rng(13);
        std::uniform_real_distribution<double> u(0.5, 2.0);
        for (auto* bn : net.batchnorms())
            for (int c = 0; c < bn->channels(); ++c) {
                bn->running_mean()[c] = u(rng) - 1.25;
                bn->running_var()[c] = u(rng);
            }
        const auto x = random_tensor<double>(3, 2, 8, 16, 14);
        const auto W = weights_of(net);
        for (bool train : {false, true}) {
            CAPTURE(train);
            const auto out = net.forward(x, train);
            const auto ref = oracle_forward(to_field(x), W, cfg, train);
            REQUIRE(out.y.h == 8);
            REQUIRE(out.y.w == 16);
            REQUIRE(out.bottleneck.c == cfg.bottleneck_channels());
            double ey = 0, ez = 0;
            for (std::size_t i = 0; i < ref.y.v.size(); ++i)
                ey = std::max(ey, std::abs(out.y.v[i] - ref.y.v[i]));
            for (std::size_t i = 0; i < ref.z.v.size(); ++i)
                ez = std::max(ez, std::abs(out.bottleneck.v[i] - ref.z.v[i]));
            CHECK(ey < 1e-6);
            CHECK(ez < 1e-6);
        }
    }
}

TEST_CASE("single precision forward tracks the oracle")
{
    const auto cfg = tiny_config();
    Network<double> ref_net(cfg, 21);
    randomize(ref_net.params(), 22, 0.7);
    Network<float> net(cfg, 21);
    copy_state(ref_net, net);
    copy_state(net, ref_net);
    const auto x = random_tensor<double>(3, 2, 16, 16, 23);
    const auto out = net.forward(convert<double, float>(x), true);
    const auto ref = oracle_forward(to_field(x), weights_of(ref_net), cfg, true);
    double e = 0, s = 0;
    for (std::size_t i = 0; i < ref.y.v.size(); ++i) {
        e = std::max(e, std::abs(double(out.y.v[i]) - ref.y.v[i]));
        s = std::max(s, std::abs(ref.y.v[i]));
    }
    CHECK(e < 1e-4 * std::max(1.0, s));
}

TEST_CASE("all-zero weights give a zero prediction; one-hot free channel passes a constant")
{
    auto cfg = tiny_config();
    Network<float> net(cfg, 1);
    for (auto* p : net.params())
        std::fill(p->value.begin(), p->value.end(), 0.0f);
    const auto x = random_tensor<float>(3, 2, 16, 16, 2);
    for (bool train : {false, true}) {
        const auto out = net.forward(x, train);
        for (float v : out.y.v)
            CHECK(v == 0.0f);
    }

    Network<float> id(cfg, 3);
    auto& w = id.combine().weight().value;
    std::fill(w.begin(), w.end(), 0.0f);
    w[4] = 1.0f;
    id.combine().bias().value[0] = 0.0f;
    auto* fh = id.free_head();
    REQUIRE(fh);
    std::fill(fh->weight().value.begin(), fh->weight().value.end(), 0.0f);
    fh->bias().value[0] = 2.5f;
    const auto out = id.forward(x, false);
    for (float v : out.y.v)
        CHECK(v == 2.5f);
}

TEST_CASE("network configurations")
{
    CHECK(tiny_config(Mode::mixed).bottleneck_channels() == 5);
    CHECK(tiny_config(Mode::prescription_only).bottleneck_channels() == 4);
    CHECK(tiny_config(Mode::prediction_only).bottleneck_channels() == 5);
    CHECK(tiny_config(Mode::prediction_only).supervised_channels() == 0);
    CHECK(tiny_config(Mode::mixed).n_free() == 1);
    CHECK(tiny_config(Mode::prescription_only).n_free() == 0);
    CHECK(tiny_config(Mode::mixed).channel_labels() ==
          std::vector<std::string>{"vos2", "von2", "vohfe", "mxl_tendency", "free"});
    CHECK(tiny_config(Mode::prediction_only).channel_labels().front() == "latent-1");
    CHECK(parse_mode("prescription_only") == Mode::prescription_only);
    CHECK_THROWS_AS(parse_mode("both"), ConfigError);
    auto bad = tiny_config();
    bad.widths[2] = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("shape invariance and shape errors")
{
    Network<float> net(tiny_config(), 5);
    for (auto [h, w] : {std::pair{16, 16}, {16, 32}, {32, 16}, {48, 64}, {8, 16}, {13, 21}}) {
        CAPTURE(h);
        CAPTURE(w);
        const auto out = net.forward(random_tensor<float>(3, 2, h, w, 6), true);
        CHECK(out.y.h == h);
        CHECK(out.y.w == w);
        CHECK(out.bottleneck.h == h);
        CHECK(out.bottleneck.c == 5);
        net.backward(Tensor<float>(5, 2, h, w), Tensor<float>(1, 2, h, w));
    }
    CHECK_THROWS_AS(net.forward(random_tensor<float>(4, 2, 16, 16, 7), false), Error);
}

TEST_CASE("backward needs a training-mode forward; zero upstream gives zero gradients")
{
    Network<float> net(tiny_config(), 8);
    const auto x = random_tensor<float>(3, 2, 16, 16, 9);
    net.forward(x, false);
    CHECK_THROWS_AS(net.backward(Tensor<float>(5, 2, 16, 16), Tensor<float>(1, 2, 16, 16)), Error);

    Conv2d<float> c("c", 2, 2, 3, false);
    c.forward(random_tensor<float>(2, 1, 4, 4, 1), false);
    CHECK_THROWS_AS(c.backward(Tensor<float>(2, 1, 4, 4)), Error);
    BatchNorm2d<float> bn("bn", 2);
    bn.forward(random_tensor<float>(2, 1, 4, 4, 1), false);
    CHECK_THROWS_AS(bn.backward(Tensor<float>(2, 1, 4, 4)), Error);

    net.forward(x, true);
    net.zero_grad();
    net.backward(Tensor<float>(5, 2, 16, 16), Tensor<float>(1, 2, 16, 16));
    for (auto* p : net.params())
        for (float g : p->grad)
            CHECK(g == 0.0f);
}

TEST_CASE("gradient check: 3x3 convolution, both lowering paths, chunked batches")
{
    // 32x32 planes with 5 samples split into GEMM chunks of 4 and 1.
    for (auto [in, out] : {std::pair{6, 3}, {3, 6}}) {
        CAPTURE(in);
        CAPTURE(out);
        for_both_precisions([&](auto prec, double h, double floor) {
            using T = decltype(prec);
            return layer_check<T>([&](auto u) { return Conv2d<decltype(u)>("c", in, out, 3, false); },
                                  random_tensor<double>(in, 5, 32, 32, 31), 32, true, h, floor);
        });
    }
}

TEST_CASE("gradient check: 1x1 convolution with bias")
{
    for_both_precisions([&](auto prec, double h, double floor) {
        using T = decltype(prec);
        return layer_check<T>([&](auto u) { return Conv2d<decltype(u)>("h", 4, 3, 1, true); },
                              random_tensor<double>(4, 2, 6, 5, 41), 42, true, h, floor);
    });
}

TEST_CASE("gradient check: batch normalization, plain and fused with ReLU")
{
    for (bool relu : {false, true}) {
        CAPTURE(relu);
        for_both_precisions([&](auto prec, double h, double floor) {
            using T = decltype(prec);
            return layer_check<T>([&](auto u) { return BatchNorm2d<decltype(u)>("bn", 3, relu); },
                                  random_tensor<double>(3, 4, 6, 6, 51, 2.0), 52, true, h, floor);
        });
    }
}

TEST_CASE("gradient check: ReLU and max pooling")
{
    for_both_precisions([&](auto prec, double h, double floor) {
        using T = decltype(prec);
        return layer_check<T>(MakeStateless<ReLU>{}, nudged_input(2, 2, 4, 5, 61), 62, true, h, floor);
    });
    for_both_precisions([&](auto prec, double h, double floor) {
        using T = decltype(prec);
        return layer_check<T>(MakeStateless<MaxPool2>{}, nudged_input(2, 2, 6, 8, 63), 64, true, h, floor);
    });
}

TEST_CASE("gradient check: transposed convolution and combine layer")
{
    for_both_precisions([&](auto prec, double h, double floor) {
        using T = decltype(prec);
        return layer_check<T>([&](auto u) { return ConvTranspose2<decltype(u)>("up", 4, 3); },
                              random_tensor<double>(4, 2, 3, 5, 71), 72, true, h, floor);
    });
    for_both_precisions([&](auto prec, double h, double floor) {
        using T = decltype(prec);
        return layer_check<T>([&](auto u) { return Combine<decltype(u)>("combine", 5); },
                              random_tensor<double>(5, 2, 4, 4, 73), 74, true, h, floor);
    });
}

TEST_CASE("gradient check: composed tiny network")
{
    for (Mode mode : all_modes) {
        CAPTURE(mode_name(mode));
        const auto cfg = tiny_config(mode);
        for_both_precisions([&](auto prec, double h, double floor) {
            using T = decltype(prec);
            Network<double> shadow(cfg, 81);
            Network<T> net(cfg, 81);
            randomize(shadow.params(), 82, 0.6);
            copy_state(shadow, net);
            copy_state(net, shadow);
            // 12x20 input: exercises the edge padding and crop.
            auto x = random_tensor<double>(3, 2, 12, 20, 83);
            for (auto& v : x.v)
                v = double(T(v));
            const int K = cfg.bottleneck_channels();
            const auto rz = random_tensor<double>(K, 2, 12, 20, 84);
            const auto ry = random_tensor<double>(1, 2, 12, 20, 85);
            net.forward(convert<double, T>(x), true);
            net.zero_grad();
            net.backward(convert<double, T>(rz), convert<double, T>(ry));

            auto pa = net.params();
            auto pd = shadow.params();
            std::vector<std::size_t> sizes;
            for (auto* p : pd)
                sizes.push_back(p->value.size());
            std::vector<Probe> probes;
            for (auto [i, j] : pick_probes(sizes, 120, 86))
                probes.push_back({pd[i]->name + "[" + std::to_string(j) + "]", &pd[i]->value[j],
                                  double(pa[i]->grad[j])});
            auto loss = [&]() {
                const auto out = shadow.forward(x, true);
                return dot(out.bottleneck, rz) + dot(out.y, ry);
            };
            return fd_check(probes, loss, h, floor);
        });
    }
}

TEST_CASE("l1 loss: hand-computed two-cell case")
{
    // One row of three cells; the middle one is land and carries huge errors.
    const std::vector<std::uint8_t> mask{1, 0, 1};
    Tensor<double> z(5, 1, 1, 3), c(4, 1, 1, 3), yh(1, 1, 1, 3), y(1, 1, 1, 3);
    const double ce[4][2] = {{1, 3}, {0, 2}, {2, 2}, {1, 1}};
    for (int k = 0; k < 4; ++k) {
        z(k, 0, 0, 0) = ce[k][0];
        z(k, 0, 0, 2) = -ce[k][1];
        z(k, 0, 0, 1) = 1e6;
    }
    z(4, 0, 0, 0) = 77.0;  // free channel is never supervised
    yh(0, 0, 0, 0) = 2.0;
    yh(0, 0, 0, 2) = -1.0;
    y(0, 0, 0, 2) = 3.0;
    yh(0, 0, 0, 1) = -1e6;
    const auto L = l1_loss(z, yh, c, y, mask, 4, 0.5);
    CHECK(L.conc == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(L.pred == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(L.total == doctest::Approx(2.25).epsilon(1e-15));

    const auto L1 = l1_loss(z, yh, c, y, mask, 4, 1.0);
    CHECK(L1.total == L1.conc);
    const auto L0 = l1_loss(z, yh, c, y, mask, 4, 0.0);
    CHECK(L0.total == L0.pred);
    // Prediction-only: no supervised channels, identical to lambda = 0.
    CHECK(l1_loss(z, yh, c, y, mask, 0, 0.0).total == L0.total);

    CHECK(l1_loss(c, y, c, y, mask, 4, 0.3).total == 0.0);
    CHECK_THROWS_AS(l1_loss(z, yh, c, y, mask, 4, 1.5), Error);
    CHECK_THROWS_AS(l1_loss(z, yh, c, y, mask, 4, -0.1), Error);
    CHECK_THROWS_AS(l1_loss(z, yh, c, y, mask, 0, 0.5), Error);
}

TEST_CASE("l1 loss gradients and the combine-layer weight gradient by hand")
{
    // Two ocean cells; pred errors +0.5 and -2 and z values chosen by hand.
    const std::vector<std::uint8_t> mask{1, 1};
    Tensor<double> z(2, 1, 1, 2), y(1, 1, 1, 2);
    z(0, 0, 0, 0) = 1.0;
    z(0, 0, 0, 1) = 4.0;
    z(1, 0, 0, 0) = -3.0;
    z(1, 0, 0, 1) = 2.0;
    Combine<double> comb("combine", 2);
    comb.weight().value = {0.5, 0.25};
    comb.bias().value = {0.0};
    const auto yh = comb.forward(z, true);  // 0.5 - 0.75 = -0.25 and 2 + 0.5 = 2.5
    y(0, 0, 0, 0) = -0.75;
    y(0, 0, 0, 1) = 4.5;
    Tensor<double> dz, dy;
    l1_loss(z, yh, Tensor<double>(), y, mask, 0, 0.0, &dz, &dy);
    CHECK(dy(0, 0, 0, 0) == 0.5);
    CHECK(dy(0, 0, 0, 1) == -0.5);
    comb.backward(dy);
    // mean over cells of sign(yhat - y) * z_k: (+1 * 1 + -1 * 4) / 2, (+1 * -3 + -1 * 2) / 2.
    CHECK(comb.weight().grad[0] == -1.5);
    CHECK(comb.weight().grad[1] == -2.5);
    CHECK(comb.bias().grad[0] == 0.0);

    // Zero error has zero subgradient.
    Tensor<double> same = yh;
    l1_loss(z, yh, Tensor<double>(), same, mask, 0, 0.0, &dz, &dy);
    CHECK(dy(0, 0, 0, 0) == 0.0);
    CHECK(dy(0, 0, 0, 1) == 0.0);
}

TEST_CASE("masked-loss locality")
{
    auto grid = testing::make_grid(4, 4, {1, 6, 11});
    const auto mask = grid->mask();
    auto z = random_tensor<double>(5, 2, 4, 4, 91);
    auto c = random_tensor<double>(4, 2, 4, 4, 92);
    auto yh = random_tensor<double>(1, 2, 4, 4, 93);
    auto y = random_tensor<double>(1, 2, 4, 4, 94);
    const auto base = l1_loss(z, yh, c, y, mask, 4, 0.6);
    for (std::size_t cell : {1, 6, 11}) {
        y.v[cell] += 100.0;
        c.v[16 + cell] -= 50.0;
        z.v[3 * 16 + cell] = 1e9;
        const auto L = l1_loss(z, yh, c, y, mask, 4, 0.6);
        CHECK(L.total == base.total);
        CHECK(L.conc == base.conc);
        CHECK(L.pred == base.pred);
    }
}

TEST_CASE("lambda schedule")
{
    CHECK(lambda_schedule(0, 101, 0.8, 0.2) == 0.8);
    CHECK(lambda_schedule(100, 101, 0.8, 0.2) == 0.2);
    CHECK(lambda_schedule(50, 101, 0.8, 0.2) == doctest::Approx(std::sqrt(0.8 * 0.2)).epsilon(1e-14));
    CHECK(lambda_schedule(50, 101, 0.8, 0.2) == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(lambda_schedule(29, 30, 0.8, 0.2) == 0.2);
    double prev = 1.0;
    for (int e = 0; e < 30; ++e) {
        const double l = lambda_schedule(e, 30, 0.8, 0.2);
        CHECK(l < prev);
        prev = l;
    }
    CHECK_THROWS_AS(lambda_schedule(0, 1, 0.8, 0.2), Error);
    CHECK_THROWS_AS(lambda_schedule(5, 5, 0.8, 0.2), Error);
    TrainConfig bad;
    bad.lambda1 = 0.9;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("AdamW")
{
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    Param<double> p("p", 3);
    p.value = {0.3, -1.2, 5.0};

    SUBCASE("zero gradient and zero decay leave parameters unchanged")
    {
        AdamW<double> opt(cfg);
        const auto before = p.value;
        for (int i = 0; i < 5; ++i)
            opt.step({&p});
        CHECK(p.value == before);
    }
    SUBCASE("first step with unit gradient")
    {
        AdamW<double> opt(cfg);
        p.grad = {1.0, 1.0, -1.0};
        const auto before = p.value;
        opt.step({&p});
        const double step = 1e-3 * 1.0 / (1.0 + 1e-8);
        CHECK(p.value[0] - before[0] == doctest::Approx(-step).epsilon(1e-12));
        CHECK(p.value[2] - before[2] == doctest::Approx(step).epsilon(1e-12));
    }
    SUBCASE("decay only follows the closed-form recurrence")
    {
        cfg.weight_decay = 1e-4;
        AdamW<double> opt(cfg);
        const auto th0 = p.value;
        for (int t = 1; t <= 200; ++t)
            opt.step({&p});
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(p.value[i] == doctest::Approx(th0[i] * std::pow(1.0 - 1e-3 * 1e-4, 200)).epsilon(1e-13));
    }
    SUBCASE("decay is decoupled from the gradient moments")
    {
        // With decay folded into the gradient the first step would still
        // move by about lr; decoupled decay shrinks theta first.
        cfg.weight_decay = 0.5;
        cfg.lr = 0.1;
        AdamW<double> opt(cfg);
        p.grad = {2.0, 2.0, 2.0};
        opt.step({&p});
        CHECK(p.value[2] == doctest::Approx(5.0 * (1 - 0.05) - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-13));
    }
    SUBCASE("non-finite gradient fails without updating")
    {
        AdamW<double> opt(cfg);
        p.grad = {1.0, std::nan(""), 0.0};
        const auto before = p.value;
        CHECK_THROWS_AS(opt.step({&p}), NumericalError);
        CHECK(p.value == before);
    }
}

TEST_CASE("training: zero learning rate, determinism, history")
{
    auto data = testing::random_prepared(30, 16, 16, 2, 101);
    const auto sets = build_split_samples(data);
    auto cfg_net = tiny_config(Mode::mixed, 24);

    TrainConfig tc;
    tc.epochs = 1;
    tc.lr = 0.0;
    tc.batch_size = int(sets.train.size());
    Network<float> init(cfg_net, 7);
    auto r0 = train(cfg_net, sets.train, nullptr, tc, 7);
    CHECK(same_params(r0.net, init));
    REQUIRE(r0.history.size() == 1);
    CHECK(r0.history[0].lambda == 0.8);

    tc.epochs = 3;
    tc.lr = 1e-3;
    tc.batch_size = 4;
    auto a = train(cfg_net, sets.train, &sets.val, tc, 7);
    auto b = train(cfg_net, sets.train, &sets.val, tc, 7);
    auto c = train(cfg_net, sets.train, &sets.val, tc, 8);
    CHECK(same_params(a.net, b.net));
    CHECK_FALSE(same_params(a.net, c.net));
    CHECK_FALSE(same_params(a.net, init));
    auto ba = a.net.batchnorms(), bb = b.net.batchnorms();
    for (std::size_t i = 0; i < ba.size(); ++i)
        CHECK(ba[i]->running_var() == bb[i]->running_var());
    REQUIRE(a.history.size() == 3);
    for (int e = 0; e < 3; ++e) {
        CHECK(a.history[e].lambda == lambda_schedule(e, 3, 0.8, 0.2));
        CHECK(a.history[e].train.total == b.history[e].train.total);
        CHECK(std::isfinite(a.history[e].val.total));
    }

    auto pcfg = tiny_config(Mode::prediction_only, 24);
    auto p = train(pcfg, sets.train, &sets.val, tc, 7);
    for (const auto& rec : p.history) {
        CHECK(rec.lambda == 0.0);
        CHECK(rec.train.total == rec.train.pred);
    }

    auto wrong = tiny_config(Mode::mixed, 36);
    CHECK_THROWS_AS(train(wrong, sets.train, nullptr, tc, 7), ConfigError);
}

TEST_CASE("matched seeds give identical shared layers across configurations")
{
    Network<float> mixed(tiny_config(Mode::mixed), 42), presc(tiny_config(Mode::prescription_only), 42),
        pred(tiny_config(Mode::prediction_only), 42), other(tiny_config(Mode::mixed), 43);
    std::map<std::string, Buffer<float>> m;
    for (auto* p : mixed.params())
        m[p->name] = p->value;
    int shared = 0;
    for (auto* net : {&presc, &pred})
        for (auto* p : net->params()) {
            const auto it = m.find(p->name);
            if (it != m.end() && it->second.size() == p->value.size()) {
                CHECK(it->second == p->value);
                ++shared;
            }
        }
    CHECK(shared > 40);
    CHECK(mixed.concept_head().weight().value == presc.concept_head().weight().value);
    CHECK_FALSE(same_params(mixed, other));
}

TEST_CASE("prescription-only equals mixed with the free channel removed")
{
    Network<double> mixed(tiny_config(Mode::mixed), 5), presc(tiny_config(Mode::prescription_only), 5);
    auto& wm = mixed.combine().weight().value;
    auto& wp = presc.combine().weight().value;
    std::copy_n(wm.begin(), 4, wp.begin());
    wm[4] = 0.0;
    presc.combine().bias().value = mixed.combine().bias().value;
    const auto x = random_tensor<double>(3, 2, 16, 16, 6);
    const auto a = mixed.forward(x, true), b = presc.forward(x, true);
    for (std::size_t i = 0; i < a.y.v.size(); ++i)
        CHECK(a.y.v[i] == doctest::Approx(b.y.v[i]).epsilon(1e-12));
    CHECK(std::equal(b.bottleneck.v.begin(), b.bottleneck.v.end(), a.bottleneck.v.begin()));
}

TEST_CASE("checkpoint roundtrip and corruption")
{
    auto data = testing::random_prepared(40, 16, 16, 2, 111);
    const auto sets = build_split_samples(data);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    auto r = train(tiny_config(Mode::mixed, 24), sets.train, nullptr, tc, 3);
    const auto bytes = checkpoint_encode(r.net, 3);
    std::uint64_t seed = 0;
    auto back = checkpoint_decode(bytes, &seed);
    CHECK(seed == 3);
    CHECK(back.config() == r.net.config());
    CHECK(checkpoint_encode(back, 3) == bytes);
    const auto p1 = predict(r.net, sets.val), p2 = predict(back, sets.val);
    CHECK(p1.y == p2.y);
    CHECK(p1.bottleneck == p2.bottleneck);

    auto kind_of = [](std::vector<std::uint8_t> b) {
        try {
            checkpoint_decode(b);
        } catch (const ParseError& e) {
            return e.kind();
        }
        FAIL("decode accepted corrupted bytes");
        return ParseError::Kind::truncated;
    };
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    CHECK(kind_of(flipped) == ParseError::Kind::checksum_mismatch);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK(kind_of(magic) == ParseError::Kind::bad_magic);
    auto version = bytes;
    version[4] = 9;
    CHECK(kind_of(version) == ParseError::Kind::bad_version);
    CHECK(kind_of(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 6)) == ParseError::Kind::truncated);
}
