#include "mlhc/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "mlhc/error.hpp"

namespace mlhc::nn {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Map = Eigen::Map<MatR<T>>;
template <class T>
using CMap = Eigen::Map<const MatR<T>>;

void require(bool ok, const char* what)
{
    if (!ok)
        throw Error(what);
}

// dst[i][j] = src[i + sy][j + sx], zero where the source falls off the plane.
template <class T>
void copy_shifted(T* dst, const T* src, int H, int W, int sy, int sx)
{
    const int j0 = std::max(0, -sx), j1 = std::min(W, W - sx);
    for (int i = 0; i < H; ++i) {
        T* d = dst + std::size_t(i) * W;
        const int ii = i + sy;
        if (ii < 0 || ii >= H || j1 <= j0) {
            std::fill(d, d + W, T(0));
            continue;
        }
        std::fill(d, d + j0, T(0));
        std::memcpy(d + j0, src + std::size_t(ii) * W + j0 + sx, sizeof(T) * std::size_t(j1 - j0));
        std::fill(d + j1, d + W, T(0));
    }
}

// dst[i][j] += src[i + sy][j + sx] where the source exists.
template <class T>
void add_shifted(T* dst, const T* src, int H, int W, int sy, int sx)
{
    const int j0 = std::max(0, -sx), j1 = std::min(W, W - sx);
    for (int i = std::max(0, -sy); i < std::min(H, H - sy); ++i) {
        T* d = dst + std::size_t(i) * W;
        const T* s = src + std::size_t(i + sy) * W + sx;
        for (int j = j0; j < j1; ++j)
            d[j] += s[j];
    }
}

// Scratch buffers reused across calls; fresh multi-megabyte allocations
// otherwise dominate the runtime through page faults.
template <class T>
Buffer<T>& scratch(int slot)
{
    thread_local Buffer<T> bufs[2];
    return bufs[slot];
}

template <class T>
T* scratch_data(int slot, std::size_t n)
{
    auto& b = scratch<T>(slot);
    if (b.size() < n)
        b.resize(n);
    return b.data();
}

// Rows (ci, ky, kx) of the 3x3 patch matrix for samples [b0, b0 + nb);
// columns (n, i, j).
template <class T>
void im2col3(const Tensor<T>& x, int b0, int nb, T* col)
{
    const std::size_t cols = std::size_t(nb) * x.plane();
    for (int ci = 0; ci < x.c; ++ci)
        for (int tap = 0; tap < 9; ++tap)
            for (int b = 0; b < nb; ++b)
                copy_shifted(col + (std::size_t(ci) * 9 + tap) * cols + std::size_t(b) * x.plane(),
                             x.plane_ptr(ci, b0 + b), x.h, x.w, tap / 3 - 1, tap % 3 - 1);
}

template <class T>
void col2im3(const T* col, int b0, int nb, Tensor<T>& dx)
{
    const std::size_t cols = std::size_t(nb) * dx.plane();
    for (int ci = 0; ci < dx.c; ++ci)
        for (int tap = 0; tap < 9; ++tap)
            for (int b = 0; b < nb; ++b)
                add_shifted(dx.plane_ptr(ci, b0 + b), col + (std::size_t(ci) * 9 + tap) * cols + std::size_t(b) * dx.plane(),
                            dx.h, dx.w, 1 - tap / 3, 1 - tap % 3);
}

// Samples per GEMM for 3x3 convolutions: enough columns to keep the GEMM
// efficient, few enough that the per-tap intermediates stay in cache.
int conv_chunk(const std::size_t plane, int n)
{
    return std::clamp(int(4096 / std::max<std::size_t>(plane, 1)), 1, n);
}

template <class T>
using SMap = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <class T>
using CSMap = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

} // namespace

// ---------------------------------------------------------------------------

template <class T>
Conv2d<T>::Conv2d(std::string name, int in_ch, int out_ch, int k, bool bias)
    : in_(in_ch), out_(out_ch), k_(k), has_bias_(bias),
      weight_(name + ".weight", std::size_t(out_ch) * in_ch * k * k), bias_(name + ".bias", bias ? out_ch : 0)
{
    require(k == 1 || k == 3, "Conv2d: kernel must be 1 or 3");
    require(in_ch > 0 && out_ch > 0, "Conv2d: channel counts must be positive");
}

template <class T>
Buffer<T> Conv2d<T>::stacked_weights() const
{
    Buffer<T> wst(std::size_t(9) * out_ * in_);
    for (int o = 0; o < out_; ++o)
        for (int ci = 0; ci < in_; ++ci)
            for (int tap = 0; tap < 9; ++tap)
                wst[(std::size_t(tap) * out_ + o) * in_ + ci] = weight_.value[(std::size_t(o) * in_ + ci) * 9 + tap];
    return wst;
}

template <class T>
std::vector<Param<T>*> Conv2d<T>::params()
{
    if (has_bias_)
        return {&weight_, &bias_};
    return {&weight_};
}

template <class T>
Tensor<T> Conv2d<T>::forward(Tensor<T> x, bool train)
{
    if (x.c != in_)
        throw Error("Conv2d '" + weight_.name + "': expected " + std::to_string(in_) + " input channels, got " +
                    std::to_string(x.c));
    const std::size_t np = x.per_channel();
    const int K = in_ * k_ * k_;
    auto y = Tensor<T>::uninit(out_, x.n, x.h, x.w);
    CMap<T> W(weight_.value.data(), out_, K);
    Map<T> Y(y.v.data(), out_, Eigen::Index(np));
    if (k_ == 1) {
        Y.noalias() = W * CMap<T>(x.v.data(), K, Eigen::Index(np));
    } else {
        const std::size_t plane = x.plane();
        const int chunk = conv_chunk(plane, x.n);
        const auto ld = Eigen::Index(np);
        const auto wst = in_ >= out_ ? stacked_weights() : Buffer<T>();
        for (int b0 = 0; b0 < x.n; b0 += chunk) {
            const int nb = std::min(chunk, x.n - b0);
            const auto cols = Eigen::Index(std::size_t(nb) * plane);
            const std::size_t off = std::size_t(b0) * plane;
            SMap<T> Yc(y.v.data() + off, out_, cols, Eigen::OuterStride<>(ld));
            if (in_ >= out_) {
                // Multiply first, then shift-add the 9 per-tap outputs: cheaper
                // than building the patch matrix when the output side is the
                // narrow one.
                const int S = 9 * out_;
                T* ys = scratch_data<T>(0, std::size_t(S) * cols);
                Map<T>(ys, S, cols).noalias() =
                    CMap<T>(wst.data(), S, in_) * CSMap<T>(x.v.data() + off, in_, cols, Eigen::OuterStride<>(ld));
                // The centre tap covers every pixel and initialises the output.
                Yc = Map<T>(ys + std::size_t(4) * out_ * cols, out_, cols);
                for (int tap = 0; tap < 9; ++tap)
                    for (int o = 0; o < out_ && tap != 4; ++o)
                        for (int b = 0; b < nb; ++b)
                            add_shifted(y.plane_ptr(o, b0 + b), ys + (std::size_t(tap) * out_ + o) * cols + b * plane,
                                        x.h, x.w, tap / 3 - 1, tap % 3 - 1);
            } else {
                T* col = scratch_data<T>(0, std::size_t(K) * cols);
                im2col3(x, b0, nb, col);
                Yc.noalias() = W * CMap<T>(col, K, cols);
            }
        }
    }
    if (has_bias_)
        for (int o = 0; o < out_; ++o) {
            T* p = y.channel(o);
            const T b = bias_.value[std::size_t(o)];
            for (std::size_t i = 0; i < np; ++i)
                p[i] += b;
        }
    cached_ = train;
    x_ = train ? std::move(x) : Tensor<T>();
    return y;
}

template <class T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy)
{
    if (!cached_)
        throw Error("Conv2d '" + weight_.name + "': backward without a training-mode forward");
    require(dy.c == out_ && dy.n == x_.n && dy.h == x_.h && dy.w == x_.w, "Conv2d: gradient shape mismatch");
    const std::size_t np = x_.per_channel();
    const int K = in_ * k_ * k_;
    CMap<T> dY(dy.v.data(), out_, Eigen::Index(np));
    Map<T> dW(weight_.grad.data(), out_, K);
    CMap<T> W(weight_.value.data(), out_, K);
    if (has_bias_)
        for (int o = 0; o < out_; ++o) {
            const T* p = dy.channel(o);
            T s = 0;
            for (std::size_t i = 0; i < np; ++i)
                s += p[i];
            bias_.grad[std::size_t(o)] += s;
        }

    Tensor<T> dx;
    if (k_ == 1) {
        CMap<T> X(x_.v.data(), K, Eigen::Index(np));
        dW.noalias() += dY * X.transpose();
        if (input_grad_) {
            dx = Tensor<T>::uninit(x_.c, x_.n, x_.h, x_.w);
            Map<T>(dx.v.data(), K, Eigen::Index(np)).noalias() = W.transpose() * dY;
        }
    } else {
        const std::size_t plane = x_.plane();
        const int chunk = conv_chunk(plane, x_.n);
        const auto ld = Eigen::Index(np);
        const bool stacked = in_ >= out_;
        const int S = 9 * out_;
        Buffer<T> wst;
        MatR<T> dWst;
        if (stacked) {
            wst = stacked_weights();
            dWst = MatR<T>::Zero(S, in_);
        }
        if (input_grad_)
            dx = stacked ? Tensor<T>::uninit(x_.c, x_.n, x_.h, x_.w) : Tensor<T>(x_.c, x_.n, x_.h, x_.w);
        for (int b0 = 0; b0 < x_.n; b0 += chunk) {
            const int nb = std::min(chunk, x_.n - b0);
            const auto cols = Eigen::Index(std::size_t(nb) * plane);
            const std::size_t off = std::size_t(b0) * plane;
            CSMap<T> dYc(dy.v.data() + off, out_, cols, Eigen::OuterStride<>(ld));
            CSMap<T> Xc(x_.v.data() + off, in_, cols, Eigen::OuterStride<>(ld));
            if (stacked) {
                T* dys = scratch_data<T>(0, std::size_t(S) * cols);
                for (int tap = 0; tap < 9; ++tap)
                    for (int o = 0; o < out_; ++o)
                        for (int b = 0; b < nb; ++b)
                            copy_shifted(dys + (std::size_t(tap) * out_ + o) * cols + b * plane, dy.plane_ptr(o, b0 + b),
                                         x_.h, x_.w, 1 - tap / 3, 1 - tap % 3);
                CMap<T> dYs(dys, S, cols);
                dWst.noalias() += dYs * Xc.transpose();
                if (input_grad_)
                    SMap<T>(dx.v.data() + off, in_, cols, Eigen::OuterStride<>(ld)).noalias() =
                        CMap<T>(wst.data(), S, in_).transpose() * dYs;
            } else {
                T* col = scratch_data<T>(0, std::size_t(K) * cols);
                im2col3(x_, b0, nb, col);
                dW.noalias() += dYc * CMap<T>(col, K, cols).transpose();
                if (input_grad_) {
                    Map<T>(col, K, cols).noalias() = W.transpose() * dYc;
                    col2im3(col, b0, nb, dx);
                }
            }
        }
        if (stacked)
            for (int tap = 0; tap < 9; ++tap)
                for (int o = 0; o < out_; ++o)
                    for (int ci = 0; ci < in_; ++ci)
                        weight_.grad[(std::size_t(o) * in_ + ci) * 9 + tap] += dWst(tap * out_ + o, ci);
    }
    return dx;
}

// ---------------------------------------------------------------------------

template <class T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels, bool relu, double momentum, double eps)
    : name_(name), ch_(channels), relu_(relu), momentum_(momentum), eps_(eps), gamma_(name + ".gamma", channels),
      beta_(name + ".beta", channels), run_mean_(channels, T(0)), run_var_(channels, T(1))
{
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
}

template <class T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool train)
{
    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    if (x.c != ch_)
        throw Error("BatchNorm2d '" + name_ + "': channel mismatch");
    const auto np = Eigen::Index(x.per_channel());
    auto y = Tensor<T>::uninit(x.c, x.n, x.h, x.w);
    if (!train) {
        cached_ = false;
        xhat_ = Tensor<T>();
        for (int c = 0; c < ch_; ++c) {
            const double inv = 1.0 / std::sqrt(double(run_var_[c]) + eps_);
            const T scale = T(double(gamma_.value[c]) * inv);
            const T shift = T(double(beta_.value[c]) - double(run_mean_[c]) * double(gamma_.value[c]) * inv);
            Eigen::Map<Arr> out(y.channel(c), np);
            out = Eigen::Map<const Arr>(x.channel(c), np) * scale + shift;
            if (relu_)
                out = out.max(T(0));
        }
        return y;
    }
    if (np < 2)
        throw Error("BatchNorm2d '" + name_ + "': training needs more than one value per channel");
    xhat_ = Tensor<T>::uninit(x.c, x.n, x.h, x.w);
    inv_std_.assign(std::size_t(ch_), 0.0);
    for (int c = 0; c < ch_; ++c) {
        Eigen::Map<const Arr> src(x.channel(c), np);
        Eigen::Map<Arr> xh(xhat_.channel(c), np), out(y.channel(c), np);
        const T mean = src.sum() / T(np);
        xh = src - mean;
        const double var = double(xh.square().sum()) / double(np);
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[std::size_t(c)] = inv;
        xh *= T(inv);
        out = xh * gamma_.value[c] + beta_.value[c];
        if (relu_)
            out = out.max(T(0));
        run_mean_[c] = T((1.0 - momentum_) * run_mean_[c] + momentum_ * double(mean));
        run_var_[c] = T((1.0 - momentum_) * run_var_[c] + momentum_ * var * double(np) / double(np - 1));
    }
    cached_ = true;
    return y;
}

template <class T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy)
{
    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    if (!cached_)
        throw Error("BatchNorm2d '" + name_ + "': backward without a training-mode forward");
    require(dy.same_shape(xhat_), "BatchNorm2d: gradient shape mismatch");
    const auto np = Eigen::Index(dy.per_channel());
    auto dx = Tensor<T>::uninit(dy.c, dy.n, dy.h, dy.w);
    for (int c = 0; c < ch_; ++c) {
        Eigen::Map<const Arr> xh(xhat_.channel(c), np);
        Eigen::Map<Arr> g(dx.channel(c), np);
        g = Eigen::Map<const Arr>(dy.channel(c), np);
        if (relu_)
            g = ((xh * gamma_.value[c] + beta_.value[c]) > T(0)).select(g, T(0));
        const double sg = double(g.sum());
        const double sgx = double((g * xh).sum());
        gamma_.grad[c] += T(sgx);
        beta_.grad[c] += T(sg);
        const T mg = T(sg / double(np)), mgx = T(sgx / double(np));
        const T scale = T(double(gamma_.value[c]) * inv_std_[std::size_t(c)]);
        g = scale * (g - mg - xh * mgx);
    }
    return dx;
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, bool train)
{
    Tensor<T> y = x;
    for (auto& v : y.v)
        v = v > T(0) ? v : T(0);
    cached_ = train;
    if (train)
        y_ = y;
    else
        y_ = Tensor<T>();
    return y;
}

template <class T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy)
{
    if (!cached_)
        throw Error("ReLU: backward without a training-mode forward");
    require(dy.same_shape(y_), "ReLU: gradient shape mismatch");
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i)
        if (!(y_.v[i] > T(0)))
            dx.v[i] = T(0);
    return dx;
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> MaxPool2<T>::forward(const Tensor<T>& x, bool train)
{
    if (x.h % 2 || x.w % 2)
        throw Error("MaxPool2: spatial size must be even");
    const int ho = x.h / 2, wo = x.w / 2;
    auto y = Tensor<T>::uninit(x.c, x.n, ho, wo);
    if (train)
        arg_.assign(y.size(), 0);
    std::size_t o = 0;
    for (int c = 0; c < x.c; ++c)
        for (int b = 0; b < x.n; ++b) {
            const T* src = x.plane_ptr(c, b);
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j, ++o) {
                    const T* p = src + std::size_t(2 * i) * x.w + 2 * j;
                    const T cand[4] = {p[0], p[1], p[x.w], p[x.w + 1]};
                    int best = 0;
                    for (int k = 1; k < 4; ++k)
                        if (cand[k] > cand[best])
                            best = k;
                    y.v[o] = cand[best];
                    if (train)
                        arg_[o] = std::uint8_t(best);
                }
        }
    in_h_ = x.h;
    in_w_ = x.w;
    cached_ = train;
    return y;
}

template <class T>
Tensor<T> MaxPool2<T>::backward(const Tensor<T>& dy)
{
    if (!cached_)
        throw Error("MaxPool2: backward without a training-mode forward");
    require(dy.h * 2 == in_h_ && dy.w * 2 == in_w_ && dy.size() == arg_.size(), "MaxPool2: gradient shape mismatch");
    Tensor<T> dx(dy.c, dy.n, in_h_, in_w_);
    std::size_t o = 0;
    for (int c = 0; c < dy.c; ++c)
        for (int b = 0; b < dy.n; ++b) {
            T* dst = dx.plane_ptr(c, b);
            for (int i = 0; i < dy.h; ++i)
                for (int j = 0; j < dy.w; ++j, ++o) {
                    const int a = arg_[o];
                    dst[std::size_t(2 * i + a / 2) * in_w_ + 2 * j + a % 2] += dy.v[o];
                }
        }
    return dx;
}

// ---------------------------------------------------------------------------

template <class T>
ConvTranspose2<T>::ConvTranspose2(std::string name, int in_ch, int out_ch)
    : in_(in_ch), out_(out_ch), weight_(name + ".weight", std::size_t(in_ch) * out_ch * 4),
      bias_(name + ".bias", out_ch)
{
}

template <class T>
Tensor<T> ConvTranspose2<T>::forward(Tensor<T> x, bool train)
{
    if (x.c != in_)
        throw Error("ConvTranspose2 '" + weight_.name + "': channel mismatch");
    const std::size_t np = x.per_channel();
    MatR<T> Y4 = CMap<T>(weight_.value.data(), in_, out_ * 4).transpose() * CMap<T>(x.v.data(), in_, Eigen::Index(np));
    auto y = Tensor<T>::uninit(out_, x.n, x.h * 2, x.w * 2);
    for (int co = 0; co < out_; ++co)
        for (int a = 0; a < 2; ++a)
            for (int bb = 0; bb < 2; ++bb) {
                const T* row = Y4.data() + (std::size_t(co) * 4 + a * 2 + bb) * np;
                const T bias = bias_.value[co];
                for (int n = 0; n < x.n; ++n) {
                    T* dst = y.plane_ptr(co, n);
                    const T* src = row + std::size_t(n) * x.plane();
                    for (int i = 0; i < x.h; ++i)
                        for (int j = 0; j < x.w; ++j)
                            dst[std::size_t(2 * i + a) * y.w + 2 * j + bb] = src[std::size_t(i) * x.w + j] + bias;
                }
            }
    cached_ = train;
    x_ = train ? std::move(x) : Tensor<T>();
    return y;
}

template <class T>
Tensor<T> ConvTranspose2<T>::backward(const Tensor<T>& dy)
{
    if (!cached_)
        throw Error("ConvTranspose2 '" + weight_.name + "': backward without a training-mode forward");
    require(dy.c == out_ && dy.n == x_.n && dy.h == 2 * x_.h && dy.w == 2 * x_.w,
            "ConvTranspose2: gradient shape mismatch");
    const std::size_t np = x_.per_channel();
    MatR<T> dY4(out_ * 4, Eigen::Index(np));
    for (int co = 0; co < out_; ++co) {
        const T* ch = dy.channel(co);
        T s = 0;
        for (std::size_t i = 0; i < dy.per_channel(); ++i)
            s += ch[i];
        bias_.grad[co] += s;
        for (int a = 0; a < 2; ++a)
            for (int bb = 0; bb < 2; ++bb) {
                T* row = dY4.data() + (std::size_t(co) * 4 + a * 2 + bb) * np;
                for (int n = 0; n < x_.n; ++n) {
                    const T* src = dy.plane_ptr(co, n);
                    T* dst = row + std::size_t(n) * x_.plane();
                    for (int i = 0; i < x_.h; ++i)
                        for (int j = 0; j < x_.w; ++j)
                            dst[std::size_t(i) * x_.w + j] = src[std::size_t(2 * i + a) * dy.w + 2 * j + bb];
                }
            }
    }
    CMap<T> X(x_.v.data(), in_, Eigen::Index(np));
    Map<T>(weight_.grad.data(), in_, out_ * 4).noalias() += X * dY4.transpose();
    auto dx = Tensor<T>::uninit(x_.c, x_.n, x_.h, x_.w);
    Map<T>(dx.v.data(), in_, Eigen::Index(np)).noalias() = CMap<T>(weight_.value.data(), in_, out_ * 4) * dY4;
    return dx;
}

// ---------------------------------------------------------------------------

template <class T>
Combine<T>::Combine(std::string name, int channels)
    : k_(channels), weight_(name + ".weight", channels), bias_(name + ".bias", 1)
{
}

template <class T>
Tensor<T> Combine<T>::forward(Tensor<T> z, bool train)
{
    if (z.c != k_)
        throw Error("Combine: expected " + std::to_string(k_) + " channels, got " + std::to_string(z.c));
    auto y = Tensor<T>::uninit(1, z.n, z.h, z.w);
    const std::size_t np = z.per_channel();
    std::fill(y.v.begin(), y.v.end(), bias_.value[0]);
    for (int k = 0; k < k_; ++k) {
        const T wk = weight_.value[k];
        const T* src = z.channel(k);
        for (std::size_t i = 0; i < np; ++i)
            y.v[i] += wk * src[i];
    }
    cached_ = train;
    z_ = train ? std::move(z) : Tensor<T>();
    return y;
}

template <class T>
Tensor<T> Combine<T>::backward(const Tensor<T>& dy)
{
    if (!cached_)
        throw Error("Combine: backward without a training-mode forward");
    require(dy.c == 1 && dy.n == z_.n && dy.h == z_.h && dy.w == z_.w, "Combine: gradient shape mismatch");
    const std::size_t np = z_.per_channel();
    auto dz = Tensor<T>::uninit(z_.c, z_.n, z_.h, z_.w);
    T sb = 0;
    for (std::size_t i = 0; i < np; ++i)
        sb += dy.v[i];
    bias_.grad[0] += sb;
    for (int k = 0; k < k_; ++k) {
        const T* src = z_.channel(k);
        T* d = dz.channel(k);
        const T wk = weight_.value[k];
        T s = 0;
        for (std::size_t i = 0; i < np; ++i) {
            s += dy.v[i] * src[i];
            d[i] = wk * dy.v[i];
        }
        weight_.grad[k] += s;
    }
    return dz;
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b)
{
    require(a.n == b.n && a.h == b.h && a.w == b.w, "concat_channels: shape mismatch");
    Tensor<T> out;
    out.c = a.c + b.c;
    out.n = a.n;
    out.h = a.h;
    out.w = a.w;
    out.v.reserve(a.v.size() + b.v.size());
    out.v.insert(out.v.end(), a.v.begin(), a.v.end());
    out.v.insert(out.v.end(), b.v.begin(), b.v.end());
    return out;
}

template <class T>
void split_channels(const Tensor<T>& d, int a_channels, Tensor<T>& da, Tensor<T>& db)
{
    require(a_channels >= 0 && a_channels <= d.c, "split_channels: bad split");
    da = Tensor<T>(a_channels, d.n, d.h, d.w);
    db = Tensor<T>(d.c - a_channels, d.n, d.h, d.w);
    const auto mid = d.v.begin() + std::ptrdiff_t(da.v.size());
    std::copy(d.v.begin(), mid, da.v.begin());
    std::copy(mid, d.v.end(), db.v.begin());
}

template <class T>
Tensor<T> pad_replicate(const Tensor<T>& x, int h, int w)
{
    require(h >= x.h && w >= x.w, "pad_replicate: target smaller than input");
    if (h == x.h && w == x.w)
        return x;
    auto y = Tensor<T>::uninit(x.c, x.n, h, w);
    for (int c = 0; c < x.c; ++c)
        for (int b = 0; b < x.n; ++b) {
            const T* src = x.plane_ptr(c, b);
            T* dst = y.plane_ptr(c, b);
            for (int i = 0; i < h; ++i) {
                const T* s = src + std::size_t(std::min(i, x.h - 1)) * x.w;
                T* d = dst + std::size_t(i) * w;
                for (int j = 0; j < w; ++j)
                    d[j] = s[std::min(j, x.w - 1)];
            }
        }
    return y;
}

template <class T>
Tensor<T> crop(const Tensor<T>& x, int h, int w)
{
    require(h <= x.h && w <= x.w, "crop: target larger than input");
    if (h == x.h && w == x.w)
        return x;
    auto y = Tensor<T>::uninit(x.c, x.n, h, w);
    for (int c = 0; c < x.c; ++c)
        for (int b = 0; b < x.n; ++b)
            for (int i = 0; i < h; ++i)
                std::copy_n(x.plane_ptr(c, b) + std::size_t(i) * x.w, w, y.plane_ptr(c, b) + std::size_t(i) * w);
    return y;
}

template <class T>
Tensor<T> uncrop(const Tensor<T>& d, int h, int w)
{
    require(h >= d.h && w >= d.w, "uncrop: target smaller than input");
    if (h == d.h && w == d.w)
        return d;
    Tensor<T> y(d.c, d.n, h, w);
    for (int c = 0; c < d.c; ++c)
        for (int b = 0; b < d.n; ++b)
            for (int i = 0; i < d.h; ++i)
                std::copy_n(d.plane_ptr(c, b) + std::size_t(i) * d.w, d.w, y.plane_ptr(c, b) + std::size_t(i) * w);
    return y;
}

#define MLHC_INSTANTIATE(T)                                                                                     \
    template class Conv2d<T>;                                                                                   \
    template class BatchNorm2d<T>;                                                                              \
    template class ReLU<T>;                                                                                     \
    template class MaxPool2<T>;                                                                                 \
    template class ConvTranspose2<T>;                                                                           \
    template class Combine<T>;                                                                                  \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                     \
    template void split_channels(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);                                \
    template Tensor<T> pad_replicate(const Tensor<T>&, int, int);                                               \
    template Tensor<T> crop(const Tensor<T>&, int, int);                                                        \
    template Tensor<T> uncrop(const Tensor<T>&, int, int);

MLHC_INSTANTIATE(float)
MLHC_INSTANTIATE(double)

#undef MLHC_INSTANTIATE

} // namespace mlhc::nn
