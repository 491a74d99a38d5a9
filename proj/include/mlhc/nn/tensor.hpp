// Dense activation tensor and trainable parameter containers.
#pragma once

#include <cstddef>
#include <memory>
#include <new>
#include <utility>
#include <string>
#include <vector>

namespace mlhc::nn {

/// 64-byte aligned allocator whose value-less construct() leaves scalars
/// uninitialised. Fixed alignment keeps vectorised kernels on the same code
/// path, so results do not depend on where a buffer happens to land.
template <class T>
struct BufferAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    BufferAllocator() = default;
    template <class U>
    BufferAllocator(const BufferAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    void construct(U* p) noexcept
    {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args)
    {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }

    template <class U>
    friend bool operator==(const BufferAllocator&, const BufferAllocator<U>&) noexcept
    {
        return true;
    }
};

template <class T>
using Buffer = std::vector<T, BufferAllocator<T>>;

/// Activations laid out [channel][batch][row][col]. Channel-major order lets a
/// whole batch go through one GEMM and makes channel concatenation a plain
/// append.
template <class T>
struct Tensor {
    int c = 0, n = 0, h = 0, w = 0;
    Buffer<T> v;

    Tensor() = default;
    /// Zero-filled.
    Tensor(int c_, int n_, int h_, int w_) : c(c_), n(n_), h(h_), w(w_), v(std::size_t(c_) * n_ * h_ * w_, T(0)) {}
    /// Contents unspecified; for outputs that are written in full.
    static Tensor uninit(int c_, int n_, int h_, int w_)
    {
        Tensor t;
        t.c = c_;
        t.n = n_;
        t.h = h_;
        t.w = w_;
        t.v.resize(std::size_t(c_) * n_ * h_ * w_);
        return t;
    }

    std::size_t plane() const noexcept { return std::size_t(h) * w; }
    std::size_t per_channel() const noexcept { return std::size_t(n) * h * w; }
    std::size_t size() const noexcept { return v.size(); }
    bool same_shape(const Tensor& o) const noexcept { return c == o.c && n == o.n && h == o.h && w == o.w; }

    T* channel(int ch) noexcept { return v.data() + std::size_t(ch) * per_channel(); }
    const T* channel(int ch) const noexcept { return v.data() + std::size_t(ch) * per_channel(); }
    T* plane_ptr(int ch, int b) noexcept { return channel(ch) + std::size_t(b) * plane(); }
    const T* plane_ptr(int ch, int b) const noexcept { return channel(ch) + std::size_t(b) * plane(); }
    T& operator()(int ch, int b, int i, int j) noexcept { return plane_ptr(ch, b)[std::size_t(i) * w + j]; }
    T operator()(int ch, int b, int i, int j) const noexcept { return plane_ptr(ch, b)[std::size_t(i) * w + j]; }
};

template <class T>
struct Param {
    std::string name;
    Buffer<T> value;
    Buffer<T> grad;

    Param() = default;
    Param(std::string n, std::size_t size) : name(std::move(n)), value(size, T(0)), grad(size, T(0)) {}
};

} // namespace mlhc::nn
