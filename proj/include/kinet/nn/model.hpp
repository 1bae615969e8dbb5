#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kinet/nn/layers.hpp"
#include "kinet/random.hpp"

namespace kinet::nn {

/// Shape of the conv/pool/dropout stack. The default is the published
/// network; tests shrink it to keep finite differences cheap.
struct NetworkSpec {
    int height = 256;
    int width = 256;
    int channels = 3;
    std::vector<int> conv_filters{4, 4, 8, 8, 16, 16};
    int hidden = 16;
    double dropout_rate = 0.2;

    int blocks() const { return static_cast<int>(conv_filters.size()); }
    int flat_size() const {
        return (height >> blocks()) * (width >> blocks()) * conv_filters.back();
    }
    void validate() const {
        if (height <= 0 || width <= 0 || channels <= 0) throw ShapeError("network input dimensions must be positive");
        if (conv_filters.empty()) throw ShapeError("network needs at least one conv block");
        for (int f : conv_filters) {
            if (f <= 0) throw ShapeError("conv filter counts must be positive");
        }
        if (hidden <= 0) throw ShapeError("hidden width must be positive");
        if ((height % (1 << blocks())) != 0 || (width % (1 << blocks())) != 0)
            throw ShapeError("input size must be divisible by 2^blocks");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ShapeError("dropout rate must be in [0, 1)");
    }
    bool operator==(const NetworkSpec&) const = default;
};

template <typename T>
struct Model;

template <typename T>
Model<T> zero_model(const NetworkSpec& spec);

template <typename T>
struct Model {
    NetworkSpec spec;
    std::vector<ConvParams<T>> conv;
    DenseParams<T> dense;
    DenseParams<T> head;

    std::size_t parameter_count() const {
        std::size_t n = dense.parameter_count() + head.parameter_count();
        for (const auto& c : conv) n += c.parameter_count();
        return n;
    }

    /// Parameter arrays in checkpoint order: each conv (w, b), dense (w, b),
    /// head (w, b).
    std::vector<std::span<T>> arrays() {
        std::vector<std::span<T>> out;
        for (auto& c : conv) {
            out.emplace_back(c.w);
            out.emplace_back(c.b);
        }
        out.emplace_back(dense.w);
        out.emplace_back(dense.b);
        out.emplace_back(head.w);
        out.emplace_back(head.b);
        return out;
    }
    std::vector<std::span<const T>> arrays() const {
        std::vector<std::span<const T>> out;
        for (const auto& c : conv) {
            out.emplace_back(c.w);
            out.emplace_back(c.b);
        }
        out.emplace_back(dense.w);
        out.emplace_back(dense.b);
        out.emplace_back(head.w);
        out.emplace_back(head.b);
        return out;
    }

    template <typename U>
    Model<U> cast() const {
        Model<U> m = zero_model<U>(spec);
        auto dst = m.arrays();
        auto src = arrays();
        for (std::size_t a = 0; a < src.size(); ++a) {
            for (std::size_t k = 0; k < src[a].size(); ++k) dst[a][k] = static_cast<U>(src[a][k]);
        }
        return m;
    }
};

/// Model with every weight and bias zero.
template <typename T>
Model<T> zero_model(const NetworkSpec& spec) {
    spec.validate();
    Model<T> m;
    m.spec = spec;
    int in = spec.channels;
    for (int f : spec.conv_filters) {
        m.conv.emplace_back(in, f);
        in = f;
    }
    m.dense = DenseParams<T>(spec.flat_size(), spec.hidden);
    m.head = DenseParams<T>(spec.hidden, 1);
    return m;
}

/// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out)), conv fans
/// include the 3x3 receptive field), zero biases.
template <typename T>
Model<T> build_model(const NetworkSpec& spec, std::uint64_t seed) {
    Model<T> m = zero_model<T>(spec);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::vector<T>& w, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (T& v : w) v = static_cast<T>(uniform(rng, -limit, limit));
    };
    for (auto& c : m.conv) fill(c.w, 9.0 * c.in, 9.0 * c.out);
    fill(m.dense.w, m.dense.in, m.dense.out);
    fill(m.head.w, m.head.in, m.head.out);
    return m;
}

template <typename T>
Model<T> build_reference_model(std::uint64_t seed) {
    return build_model<T>(NetworkSpec{}, seed);
}

/// One row of the layer table (Keras-style summary).
struct LayerSummary {
    std::string name;
    std::string kind;
    int height = 0;  // 0 for flat outputs
    int width = 0;
    int units = 0;  // channels, or features when flat
    std::size_t params = 0;
};

inline std::vector<LayerSummary> summarize(const NetworkSpec& spec) {
    spec.validate();
    std::vector<LayerSummary> rows;
    auto suffix = [](int i) { return i == 0 ? std::string() : "_" + std::to_string(i); };
    int h = spec.height, w = spec.width, in = spec.channels;
    for (int i = 0; i < spec.blocks(); ++i) {
        const int f = spec.conv_filters[i];
        rows.push_back({"conv2d" + suffix(i), "Conv2D", h, w, f, static_cast<std::size_t>(9 * in * f + f)});
        h /= 2;
        w /= 2;
        rows.push_back({"max_pooling2d" + suffix(i), "MaxPooling2D", h, w, f, 0});
        rows.push_back({"dropout" + suffix(i), "Dropout", h, w, f, 0});
        in = f;
    }
    const int flat = spec.flat_size();
    rows.push_back({"flatten", "Flatten", 0, 0, flat, 0});
    rows.push_back({"dense", "Dense", 0, 0, spec.hidden, static_cast<std::size_t>(flat * spec.hidden + spec.hidden)});
    rows.push_back({"dense_1", "Dense", 0, 0, 1, static_cast<std::size_t>(spec.hidden + 1)});
    return rows;
}

inline std::string shape_string(const LayerSummary& r) {
    if (r.height == 0) return "(None," + std::to_string(r.units) + ")";
    return "(None," + std::to_string(r.height) + "," + std::to_string(r.width) + "," + std::to_string(r.units) + ")";
}

/// Tabular report: one line per layer, then total/trainable/non-trainable.
inline std::string format_summary(const NetworkSpec& spec) {
    auto group = [](std::size_t n) {
        std::string s = std::to_string(n);
        for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
        return s;
    };
    std::string out;
    std::size_t total = 0;
    for (const auto& r : summarize(spec)) {
        std::string label = r.name + "(" + r.kind + ")";
        label.resize(std::max<std::size_t>(label.size() + 1, 32), ' ');
        std::string shape = shape_string(r);
        shape.resize(std::max<std::size_t>(shape.size() + 1, 22), ' ');
        out += label + shape + std::to_string(r.params) + "\n";
        total += r.params;
    }
    out += "Total params: " + group(total) + "\n";
    out += "Trainable params: " + group(total) + "\n";
    out += "Non-trainable params: 0\n";
    return out;
}

// ---------------------------------------------------------------------------
// Forward and backward passes

template <typename T>
struct BlockCache {
    Tensor4<T> input;
    Tensor4<T> activated;  // conv output after ReLU, before pooling
    std::vector<std::int32_t> argmax;
    Tensor4<T> pooled;
    std::vector<T> mask;  // empty in inference mode
    Tensor4<T> output;    // after dropout
};

template <typename T>
struct ForwardCache {
    std::vector<BlockCache<T>> blocks;
    Tensor4<T> hidden;          // dense layer output after ReLU
    std::vector<double> logits;  // pre-sigmoid head output, one per sample
    std::vector<double> probs;
};

struct ForwardOptions {
    bool training = false;
    std::uint64_t dropout_key = 0;  // only read when training
    int last_block = -1;             // stop after this conv block (-1: run the head too)
};

/// Per-layer dropout stream: a pure function of the batch key and block index.
inline std::uint64_t dropout_layer_key(std::uint64_t batch_key, int block) {
    return mix_keys({batch_key, static_cast<std::uint64_t>(block)});
}

template <typename T>
ForwardCache<T> forward(const Model<T>& m, Tensor4<T> x, const ForwardOptions& opt = {}) {
    if (x.h != m.spec.height || x.w != m.spec.width || x.c != m.spec.channels)
        throw ShapeError("input batch is " + std::to_string(x.h) + "x" + std::to_string(x.w) + "x" +
                         std::to_string(x.c) + ", model expects " + std::to_string(m.spec.height) + "x" +
                         std::to_string(m.spec.width) + "x" + std::to_string(m.spec.channels));
    ForwardCache<T> cache;
    const int nblocks = opt.last_block < 0 ? m.spec.blocks() : std::min(opt.last_block + 1, m.spec.blocks());
    cache.blocks.resize(static_cast<std::size_t>(nblocks));
    for (int b = 0; b < nblocks; ++b) {
        BlockCache<T>& bc = cache.blocks[static_cast<std::size_t>(b)];
        if (b == 0)
            bc.input = std::move(x);
        else
            bc.input = cache.blocks[static_cast<std::size_t>(b - 1)].output;
        bc.activated = conv2d_forward(bc.input, m.conv[static_cast<std::size_t>(b)], Activation::ReLU);
        bc.pooled = maxpool_forward(bc.activated, &bc.argmax);
        bc.output = dropout_forward(bc.pooled, m.spec.dropout_rate, opt.training,
                                    dropout_layer_key(opt.dropout_key, b), &bc.mask);
    }
    if (nblocks < m.spec.blocks()) return cache;

    cache.hidden = dense_forward(cache.blocks.back().output, m.dense, Activation::ReLU);
    const Tensor4<T> z = dense_linear(cache.hidden, m.head);
    cache.logits.resize(static_cast<std::size_t>(z.n));
    cache.probs.resize(static_cast<std::size_t>(z.n));
    // Recompute the logit in double from the hidden layer so the head output
    // keeps full precision for the loss.
    for (int i = 0; i < z.n; ++i) {
        double acc = static_cast<double>(m.head.b[0]);
        const auto h = cache.hidden.sample(i);
        for (int u = 0; u < m.head.in; ++u) acc += static_cast<double>(h[u]) * static_cast<double>(m.head.w[u]);
        cache.logits[i] = acc;
        cache.probs[i] = sigmoid(acc);
    }
    return cache;
}

/// Gradient arrays parallel to Model::arrays().
using Gradients = std::vector<std::vector<double>>;

struct BackwardOptions {
    bool parameter_grads = true;
    bool keep_activation_grads = false;  // dL/d(activated) and dL/d(pooled) per block
    bool input_grad = false;
};

template <typename T>
struct BackwardResult {
    Gradients grads;
    std::vector<Tensor4<T>> d_activated;
    std::vector<Tensor4<T>> d_pooled;
    Tensor4<T> d_input;
};

namespace detail {

// Propagates dL/d(output of block `from`) down to the input, filling the
// requested pieces of `r`.
template <typename T>
void backprop_blocks(const Model<T>& m, const ForwardCache<T>& cache, int from, Tensor4<T> d_out,
                     const BackwardOptions& opt, BackwardResult<T>& r) {
    for (int b = from; b >= 0; --b) {
        const BlockCache<T>& bc = cache.blocks[static_cast<std::size_t>(b)];
        Tensor4<T> d_pooled = dropout_backward(d_out, bc.mask);
        Tensor4<T> d_act = maxpool_backward(d_pooled, bc.argmax, bc.activated);
        if (opt.keep_activation_grads) {
            r.d_pooled[static_cast<std::size_t>(b)] = d_pooled;
            r.d_activated[static_cast<std::size_t>(b)] = d_act;
        }
        Tensor4<T> dz = relu_backward(d_act, bc.activated);
        const bool need_dx = b > 0 || opt.input_grad;
        std::vector<double>* dw = opt.parameter_grads ? &r.grads[static_cast<std::size_t>(2 * b)] : nullptr;
        std::vector<double>* db = opt.parameter_grads ? &r.grads[static_cast<std::size_t>(2 * b + 1)] : nullptr;
        Tensor4<T> dx;
        conv2d_backward(bc.input, m.conv[static_cast<std::size_t>(b)], dz, dw, db, need_dx ? &dx : nullptr);
        if (b == 0) {
            if (opt.input_grad) r.d_input = std::move(dx);
        } else {
            d_out = std::move(dx);
        }
    }
}

}  // namespace detail

/// Backpropagates per-sample dL/dlogit values through a full forward cache.
template <typename T>
BackwardResult<T> backward(const Model<T>& m, const ForwardCache<T>& cache, std::span<const double> d_logits,
                           const BackwardOptions& opt = {}) {
    if (cache.blocks.size() != m.conv.size() || cache.logits.empty())
        throw std::logic_error("backward needs a complete forward cache");
    if (d_logits.size() != cache.logits.size()) throw ShapeError("one logit gradient per sample required");
    const std::size_t nb = m.conv.size();
    BackwardResult<T> r;
    if (opt.parameter_grads) r.grads.resize(2 * nb + 4);
    if (opt.keep_activation_grads) {
        r.d_activated.resize(nb);
        r.d_pooled.resize(nb);
    }

    const Tensor4<T>& hidden = cache.hidden;
    const int n = hidden.n;
    // Head: z = h . w + b.
    Tensor4<T> dz_head(n, 1, 1, 1);
    for (int i = 0; i < n; ++i) dz_head.data[static_cast<std::size_t>(i)] = static_cast<T>(d_logits[i]);
    std::vector<double> hw, hb;
    Tensor4<T> d_hidden(n, 1, 1, m.head.in);
    if (opt.parameter_grads) {
        hw.assign(m.head.w.size(), 0.0);
        hb.assign(1, 0.0);
    }
    for (int i = 0; i < n; ++i) {
        const double g = d_logits[i];
        const auto h = hidden.sample(i);
        if (opt.parameter_grads) {
            hb[0] += g;
            for (int u = 0; u < m.head.in; ++u) hw[u] += static_cast<double>(h[u]) * g;
        }
        for (int u = 0; u < m.head.in; ++u)
            d_hidden.data[static_cast<std::size_t>(i) * m.head.in + u] = static_cast<T>(static_cast<double>(m.head.w[u]) * g);
    }
    Tensor4<T> dz_dense = relu_backward(d_hidden, hidden);
    std::vector<double> dw, db;
    const Tensor4<T>& flat = cache.blocks.back().output;
    Tensor4<T> d_flat = dense_backward(flat, m.dense, dz_dense, dw, db);
    if (opt.parameter_grads) {
        r.grads[2 * nb] = std::move(dw);
        r.grads[2 * nb + 1] = std::move(db);
        r.grads[2 * nb + 2] = std::move(hw);
        r.grads[2 * nb + 3] = std::move(hb);
    }
    detail::backprop_blocks(m, cache, static_cast<int>(nb) - 1, std::move(d_flat), opt, r);
    return r;
}

/// dL/d(input) given dL/d(pre-activation) of conv block `block`; the cache
/// must cover at least blocks [0, block].
template <typename T>
Tensor4<T> input_gradient_from_conv(const Model<T>& m, const ForwardCache<T>& cache, int block,
                                    const Tensor4<T>& d_preact) {
    const BlockCache<T>& bc = cache.blocks.at(static_cast<std::size_t>(block));
    Tensor4<T> dx;
    conv2d_backward(bc.input, m.conv[static_cast<std::size_t>(block)], d_preact, nullptr, nullptr, &dx);
    if (block == 0) return dx;
    BackwardOptions opt;
    opt.parameter_grads = false;
    opt.input_grad = true;
    BackwardResult<T> r;
    detail::backprop_blocks(m, cache, block - 1, std::move(dx), opt, r);
    return r.d_input;
}

}  // namespace kinet::nn
