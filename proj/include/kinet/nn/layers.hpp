#pragma once

// Layer kernels for the fixed conv/pool/dropout/dense stack. Storage type T
// is float for training and double for gradient checks; every reduction
// accumulates in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "kinet/nn/tensor.hpp"
#include "kinet/random.hpp"

namespace kinet::nn {

enum class Activation { None, ReLU, Sigmoid };

/// 3x3 kernel, stride 1, zero "same" padding. Weights stored [kh][kw][in][out].
template <typename T>
struct ConvParams {
    int in = 0;
    int out = 0;
    std::vector<T> w;
    std::vector<T> b;

    ConvParams() = default;
    ConvParams(int in_, int out_) : in(in_), out(out_), w(9 * static_cast<std::size_t>(in_) * out_), b(out_) {}
    std::size_t parameter_count() const { return w.size() + b.size(); }
};

/// Fully connected; weights stored [in][out].
template <typename T>
struct DenseParams {
    int in = 0;
    int out = 0;
    std::vector<T> w;
    std::vector<T> b;

    DenseParams() = default;
    DenseParams(int in_, int out_) : in(in_), out(out_), w(static_cast<std::size_t>(in_) * out_), b(out_) {}
    std::size_t parameter_count() const { return w.size() + b.size(); }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <typename T>
void apply_activation(std::span<T> v, Activation act) {
    if (act == Activation::ReLU) {
        for (T& x : v) x = x > T(0) ? x : T(0);
    } else if (act == Activation::Sigmoid) {
        for (T& x : v) x = static_cast<T>(sigmoid(static_cast<double>(x)));
    }
}

/// Pre-activation of a same-padded 3x3 convolution.
template <typename T>
Tensor4<T> conv2d_linear(const Tensor4<T>& x, const ConvParams<T>& p) {
    if (x.c != p.in)
        throw ShapeError("conv2d: input has " + std::to_string(x.c) + " channels, kernel expects " +
                         std::to_string(p.in));
    Tensor4<T> y(x.n, x.h, x.w, p.out);
    const std::size_t k = 9 * static_cast<std::size_t>(p.in);
    // Weights transposed to [out][tap][in] so each output is one contiguous
    // dot product over the zero-padded patch.
    std::vector<double> wt(k * p.out);
    for (std::size_t t = 0; t < k; ++t) {
        for (int co = 0; co < p.out; ++co) wt[co * k + t] = static_cast<double>(p.w[t * p.out + co]);
    }
    std::vector<double> patch(k);
    for (int i = 0; i < x.n; ++i) {
        for (int oy = 0; oy < x.h; ++oy) {
            for (int ox = 0; ox < x.w; ++ox) {
                double* dst = patch.data();
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = oy + ky - 1;
                    for (int kx = 0; kx < 3; ++kx, dst += p.in) {
                        const int ix = ox + kx - 1;
                        if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) {
                            std::fill(dst, dst + p.in, 0.0);
                            continue;
                        }
                        const T* in = &x.data[x.index(i, iy, ix, 0)];
                        for (int ci = 0; ci < p.in; ++ci) dst[ci] = static_cast<double>(in[ci]);
                    }
                }
                T* out = &y.data[y.index(i, oy, ox, 0)];
                int co = 0;
                // Four independent accumulator chains; each still sums in tap order.
                for (; co + 4 <= p.out; co += 4) {
                    const double* w0 = &wt[co * k];
                    const double *w1 = w0 + k, *w2 = w1 + k, *w3 = w2 + k;
                    double a0 = static_cast<double>(p.b[co]), a1 = static_cast<double>(p.b[co + 1]);
                    double a2 = static_cast<double>(p.b[co + 2]), a3 = static_cast<double>(p.b[co + 3]);
                    for (std::size_t t = 0; t < k; ++t) {
                        const double v = patch[t];
                        a0 += v * w0[t];
                        a1 += v * w1[t];
                        a2 += v * w2[t];
                        a3 += v * w3[t];
                    }
                    out[co] = static_cast<T>(a0);
                    out[co + 1] = static_cast<T>(a1);
                    out[co + 2] = static_cast<T>(a2);
                    out[co + 3] = static_cast<T>(a3);
                }
                for (; co < p.out; ++co) {
                    const double* w = &wt[co * k];
                    double acc = static_cast<double>(p.b[co]);
                    for (std::size_t t = 0; t < k; ++t) acc += patch[t] * w[t];
                    out[co] = static_cast<T>(acc);
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvParams<T>& p, Activation act) {
    Tensor4<T> y = conv2d_linear(x, p);
    apply_activation(std::span<T>(y.data), act);
    return y;
}

/// Given dL/dz for the conv output, writes dL/dw and dL/db into `dw`, `db`
/// (double, same layout as the params) and dL/dx into `dx`. Any of the three
/// outputs may be null.
template <typename T>
void conv2d_backward(const Tensor4<T>& x, const ConvParams<T>& p, const Tensor4<T>& dz, std::vector<double>* dw,
                     std::vector<double>* db, Tensor4<T>* dx) {
    if (dw) dw->assign(p.w.size(), 0.0);
    if (db) db->assign(p.b.size(), 0.0);
    std::vector<double> dx_acc;
    if (dx) dx_acc.assign(x.size(), 0.0);
    std::vector<double> g(p.out);
    for (int i = 0; i < x.n; ++i) {
        for (int oy = 0; oy < x.h; ++oy) {
            for (int ox = 0; ox < x.w; ++ox) {
                const T* gz = &dz.data[dz.index(i, oy, ox, 0)];
                bool any = false;
                for (int co = 0; co < p.out; ++co) {
                    g[co] = static_cast<double>(gz[co]);
                    any |= g[co] != 0.0;
                }
                if (!any) continue;
                if (db) {
                    for (int co = 0; co < p.out; ++co) (*db)[co] += g[co];
                }
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = oy + ky - 1;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = ox + kx - 1;
                        if (ix < 0 || ix >= x.w) continue;
                        const std::size_t in_off = x.index(i, iy, ix, 0);
                        const std::size_t tap = static_cast<std::size_t>(ky * 3 + kx) * p.in * p.out;
                        if (dw) {
                            for (int ci = 0; ci < p.in; ++ci) {
                                const double v = static_cast<double>(x.data[in_off + ci]);
                                double* dwrow = &(*dw)[tap + static_cast<std::size_t>(ci) * p.out];
                                for (int co = 0; co < p.out; ++co) dwrow[co] += v * g[co];
                            }
                        }
                        if (dx) {
                            for (int ci = 0; ci < p.in; ++ci) {
                                const T* wrow = &p.w[tap + static_cast<std::size_t>(ci) * p.out];
                                double back = 0.0;
                                for (int co = 0; co < p.out; ++co) back += static_cast<double>(wrow[co]) * g[co];
                                dx_acc[in_off + ci] += back;
                            }
                        }
                    }
                }
            }
        }
    }
    if (dx) {
        *dx = Tensor4<T>(x.n, x.h, x.w, x.c);
        for (std::size_t k = 0; k < dx_acc.size(); ++k) dx->data[k] = static_cast<T>(dx_acc[k]);
    }
}

/// 2x2 stride-2 max pooling. `argmax` receives, per output element, the
/// flat input index of the winning element (first maximum in row-major
/// window order).
template <typename T>
Tensor4<T> maxpool_forward(const Tensor4<T>& x, std::vector<std::int32_t>* argmax = nullptr) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw ShapeError("maxpool: odd spatial size " + std::to_string(x.h) + "x" + std::to_string(x.w));
    Tensor4<T> y(x.n, x.h / 2, x.w / 2, x.c);
    if (argmax) argmax->assign(y.size(), 0);
    for (int i = 0; i < x.n; ++i) {
        for (int oy = 0; oy < y.h; ++oy) {
            for (int ox = 0; ox < y.w; ++ox) {
                for (int ch = 0; ch < x.c; ++ch) {
                    std::size_t best = x.index(i, 2 * oy, 2 * ox, ch);
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t k = x.index(i, 2 * oy + dy, 2 * ox + dx, ch);
                            if (x.data[k] > x.data[best]) best = k;
                        }
                    }
                    const std::size_t o = y.index(i, oy, ox, ch);
                    y.data[o] = x.data[best];
                    if (argmax) (*argmax)[o] = static_cast<std::int32_t>(best);
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> maxpool_backward(const Tensor4<T>& dy, const std::vector<std::int32_t>& argmax, const Tensor4<T>& x_shape) {
    Tensor4<T> dx(x_shape.n, x_shape.h, x_shape.w, x_shape.c);
    for (std::size_t o = 0; o < dy.size(); ++o) dx.data[static_cast<std::size_t>(argmax[o])] += dy.data[o];
    return dx;
}

/// Inverted dropout. In training mode each element survives with
/// probability 1 - rate and is scaled by 1/(1 - rate); the decision for
/// element e is a pure function of (key, e). `mask` receives the per-element
/// multiplier (0 or 1/(1-rate)).
template <typename T>
Tensor4<T> dropout_forward(const Tensor4<T>& x, double rate, bool training, std::uint64_t key,
                           std::vector<T>* mask = nullptr) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
    if (!training || rate == 0.0) {
        if (mask) mask->clear();
        return x;
    }
    Tensor4<T> y = x;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    if (mask) mask->resize(x.size());
    for (std::size_t e = 0; e < x.size(); ++e) {
        const T m = unit_double(splitmix64(key + e)) < rate ? T(0) : keep_scale;
        y.data[e] *= m;
        if (mask) (*mask)[e] = m;
    }
    return y;
}

template <typename T>
Tensor4<T> dropout_backward(const Tensor4<T>& dy, const std::vector<T>& mask) {
    if (mask.empty()) return dy;
    Tensor4<T> dx = dy;
    for (std::size_t e = 0; e < dx.size(); ++e) dx.data[e] *= mask[e];
    return dx;
}

/// x is (N, 1, 1, D) or any tensor whose per-sample size is D.
template <typename T>
Tensor4<T> dense_linear(const Tensor4<T>& x, const DenseParams<T>& p) {
    if (x.sample_size() != static_cast<std::size_t>(p.in))
        throw ShapeError("dense: input has " + std::to_string(x.sample_size()) + " features, layer expects " +
                         std::to_string(p.in));
    Tensor4<T> y(x.n, 1, 1, p.out);
    std::vector<double> acc(p.out);
    for (int i = 0; i < x.n; ++i) {
        const auto in = x.sample(i);
        for (int u = 0; u < p.out; ++u) acc[u] = static_cast<double>(p.b[u]);
        for (int d = 0; d < p.in; ++d) {
            const double v = static_cast<double>(in[d]);
            const T* wrow = &p.w[static_cast<std::size_t>(d) * p.out];
            for (int u = 0; u < p.out; ++u) acc[u] += v * static_cast<double>(wrow[u]);
        }
        for (int u = 0; u < p.out; ++u) y.data[static_cast<std::size_t>(i) * p.out + u] = static_cast<T>(acc[u]);
    }
    return y;
}

template <typename T>
Tensor4<T> dense_forward(const Tensor4<T>& x, const DenseParams<T>& p, Activation act) {
    Tensor4<T> y = dense_linear(x, p);
    apply_activation(std::span<T>(y.data), act);
    return y;
}

/// Given dL/dz of a dense layer, fills dw/db (double) and returns dL/dx
/// shaped like x.
template <typename T>
Tensor4<T> dense_backward(const Tensor4<T>& x, const DenseParams<T>& p, const Tensor4<T>& dz, std::vector<double>& dw,
                          std::vector<double>& db) {
    dw.assign(p.w.size(), 0.0);
    db.assign(p.b.size(), 0.0);
    Tensor4<T> dx(x.n, x.h, x.w, x.c);
    for (int i = 0; i < x.n; ++i) {
        const auto in = x.sample(i);
        auto din = dx.sample(i);
        const T* g = &dz.data[static_cast<std::size_t>(i) * p.out];
        for (int u = 0; u < p.out; ++u) db[u] += static_cast<double>(g[u]);
        for (int d = 0; d < p.in; ++d) {
            const double v = static_cast<double>(in[d]);
            double back = 0.0;
            for (int u = 0; u < p.out; ++u) {
                const double gu = static_cast<double>(g[u]);
                dw[static_cast<std::size_t>(d) * p.out + u] += v * gu;
                back += static_cast<double>(p.w[static_cast<std::size_t>(d) * p.out + u]) * gu;
            }
            din[d] = static_cast<T>(back);
        }
    }
    return dx;
}

/// dL/dz from dL/da for ReLU, using the post-activation values.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& da, const Tensor4<T>& activated) {
    Tensor4<T> dz = da;
    for (std::size_t k = 0; k < dz.size(); ++k) {
        if (!(activated.data[k] > T(0))) dz.data[k] = T(0);
    }
    return dz;
}

}  // namespace kinet::nn
