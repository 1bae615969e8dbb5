#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kinet::nn {

/// Dense NHWC tensor (batch, height, width, channels), channels fastest.
template <typename T>
struct Tensor4 {
    int n = 0;
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n_, int h_, int w_, int c_, T fill = T(0))
        : n(n_), h(h_), w(w_), c(c_), data(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t sample_size() const { return static_cast<std::size_t>(h) * w * c; }

    std::size_t index(int i, int y, int x, int ch) const {
        assert(i >= 0 && i < n && y >= 0 && y < h && x >= 0 && x < w && ch >= 0 && ch < c);
        return ((static_cast<std::size_t>(i) * h + y) * w + x) * c + ch;
    }
    T& at(int i, int y, int x, int ch) { return data[index(i, y, x, ch)]; }
    const T& at(int i, int y, int x, int ch) const { return data[index(i, y, x, ch)]; }

    std::span<T> sample(int i) { return {data.data() + i * sample_size(), sample_size()}; }
    std::span<const T> sample(int i) const { return {data.data() + i * sample_size(), sample_size()}; }

    bool same_shape(const Tensor4& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out;
        out.n = n;
        out.h = h;
        out.w = w;
        out.c = c;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

template <typename T>
bool all_finite(std::span<const T> values) {
    for (T v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace kinet::nn
