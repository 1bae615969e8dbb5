#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "kinet/image.hpp"
#include "kinet/nn/model.hpp"
#include "kinet/random.hpp"

namespace kinet {

class InterpretError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// RGB bytes to a (1, H, W, 3) tensor in [0, 1].
template <typename T>
nn::Tensor4<T> to_tensor(const Image& img) {
    nn::Tensor4<T> t(1, img.height(), img.width(), 3);
    const auto& b = img.bytes();
    for (std::size_t k = 0; k < b.size(); ++k) t.data[k] = static_cast<T>(b[k]) / T(255);
    return t;
}

template <typename T>
void check_conv_layer(const nn::Model<T>& m, int layer) {
    if (layer < 0 || layer >= m.spec.blocks())
        throw InterpretError("layer " + std::to_string(layer) + " is not a conv layer (valid: 0.." +
                             std::to_string(m.spec.blocks() - 1) + ")");
}

// ---------------------------------------------------------------------------
// Intermediate activations

struct ActivationSheet {
    int layer = 0;
    int channels = 0;
    int panel_width = 0;
    int panel_height = 0;
    std::vector<double> channel_means;  // raw activation means, channel order
    Image sheet;                         // panels left to right, 1 px white separators
};

/// Post-ReLU output of conv layer `layer`, each channel min-max scaled to
/// 0..255 independently (constant channels become 128).
ActivationSheet activation_sheet(const nn::Tensor4<float>& activated, int layer);

template <typename T>
ActivationSheet intermediate_activations(const nn::Model<T>& m, const Image& img, int layer) {
    check_conv_layer(m, layer);
    nn::ForwardOptions opt;
    opt.last_block = layer;
    const auto cache = nn::forward(m, to_tensor<T>(img), opt);
    return activation_sheet(cache.blocks[static_cast<std::size_t>(layer)].activated.template cast<float>(), layer);
}

// ---------------------------------------------------------------------------
// Filter visualization by gradient ascent

struct AscentOptions {
    int steps = 30;
    double step_size = 10.0 / 255.0;
    std::uint64_t seed = 0;
};

struct FilterPattern {
    int layer = 0;
    int filter = 0;
    bool dead = false;            // all weights of the filter are zero
    double initial_score = 0.0;
    double final_score = 0.0;
    std::vector<double> scores;   // score before each step, then the final score
    Image image;                  // deprocessed ascent result
};

/// Mean over the feature map of the filter's pre-activation response.
template <typename T>
double filter_score(const nn::Model<T>& m, const nn::Tensor4<T>& x, int layer, int filter,
                    nn::ForwardCache<T>* cache_out = nullptr) {
    nn::ForwardOptions opt;
    opt.last_block = layer;
    nn::ForwardCache<T> cache = nn::forward(m, x, opt);
    const auto z = nn::conv2d_linear(cache.blocks[static_cast<std::size_t>(layer)].input, m.conv[static_cast<std::size_t>(layer)]);
    double sum = 0.0;
    for (int y = 0; y < z.h; ++y) {
        for (int xx = 0; xx < z.w; ++xx) sum += static_cast<double>(z.at(0, y, xx, filter));
    }
    if (cache_out) *cache_out = std::move(cache);
    return sum / (static_cast<double>(z.h) * z.w);
}

/// Gradient of filter_score with respect to the input image.
template <typename T>
nn::Tensor4<T> filter_score_gradient(const nn::Model<T>& m, const nn::ForwardCache<T>& cache, int layer, int filter) {
    const auto& in = cache.blocks[static_cast<std::size_t>(layer)].input;
    nn::Tensor4<T> dz(1, in.h, in.w, m.conv[static_cast<std::size_t>(layer)].out);
    const T g = static_cast<T>(1.0 / (static_cast<double>(in.h) * in.w));
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) dz.at(0, y, x, filter) = g;
    }
    return nn::input_gradient_from_conv(m, cache, layer, dz);
}

/// Maps an unconstrained input tensor to a displayable image: zero mean,
/// standard deviation 0.15, centered at 0.5, clipped to [0, 1].
Image deprocess(const nn::Tensor4<double>& x);

template <typename T>
FilterPattern maximize_filter(const nn::Model<T>& m, int layer, int filter, const AscentOptions& opt = {}) {
    check_conv_layer(m, layer);
    const auto& conv = m.conv[static_cast<std::size_t>(layer)];
    if (filter < 0 || filter >= conv.out)
        throw InterpretError("filter " + std::to_string(filter) + " out of range for layer " + std::to_string(layer) +
                             " (" + std::to_string(conv.out) + " filters)");
    if (opt.steps < 0) throw InterpretError("steps must be non-negative");

    FilterPattern out;
    out.layer = layer;
    out.filter = filter;
    out.dead = true;
    for (std::size_t k = static_cast<std::size_t>(filter); k < conv.w.size(); k += static_cast<std::size_t>(conv.out)) {
        if (conv.w[k] != T(0)) out.dead = false;
    }

    std::mt19937_64 rng(mix_keys({opt.seed, static_cast<std::uint64_t>(layer), static_cast<std::uint64_t>(filter)}));
    nn::Tensor4<T> x(1, m.spec.height, m.spec.width, m.spec.channels);
    for (T& v : x.data) v = static_cast<T>(128.0 / 255.0 + uniform(rng, -10.0 / 255.0, 10.0 / 255.0));

    nn::ForwardCache<T> cache;
    double score = filter_score(m, x, layer, filter, &cache);
    out.initial_score = score;
    for (int step = 0; step < opt.steps && !out.dead; ++step) {
        out.scores.push_back(score);
        const nn::Tensor4<T> g = filter_score_gradient(m, cache, layer, filter);
        double ss = 0.0;
        for (T v : g.data) ss += static_cast<double>(v) * static_cast<double>(v);
        const double rms = std::sqrt(ss / static_cast<double>(g.size()));
        const double scale = opt.step_size / (rms + 1e-5);
        for (std::size_t k = 0; k < x.size(); ++k)
            x.data[k] = static_cast<T>(static_cast<double>(x.data[k]) + scale * static_cast<double>(g.data[k]));
        score = filter_score(m, x, layer, filter, &cache);
    }
    out.scores.push_back(score);
    out.final_score = score;
    out.image = deprocess(x.template cast<double>());
    return out;
}

// ---------------------------------------------------------------------------
// Class activation heatmap

struct CamOptions {
    bool post_pool = false;  // use the pooled last-conv map instead of the conv output
};

struct Heatmap {
    int grid_height = 0;
    int grid_width = 0;
    std::vector<double> grid;       // rectified, max-normalized, row-major
    std::vector<double> upsampled;  // kImageSize x kImageSize in [0, 1]
    std::vector<double> weights;    // per-channel mean gradient
    double logit = 0.0;
    double probability = 0.0;
    int predicted = 0;
    double score = 0.0;             // logit for class 1, minus logit for class 0
};

/// Bilinear resize with half-pixel centers and edge clamping.
std::vector<double> upsample_bilinear(const std::vector<double>& grid, int gh, int gw, int out_h, int out_w);

/// Fills grid/upsampled from feature maps and channel weights.
void finish_heatmap(Heatmap& h, const std::vector<double>& feature, int fh, int fw, int channels);

template <typename T>
Heatmap class_activation_heatmap(const nn::Model<T>& m, const Image& img, const CamOptions& opt = {}) {
    const auto cache = nn::forward(m, to_tensor<T>(img));
    Heatmap h;
    h.logit = cache.logits[0];
    h.probability = cache.probs[0];
    h.predicted = h.probability >= 0.5 ? 1 : 0;
    const double sign = h.predicted == 1 ? 1.0 : -1.0;
    h.score = sign * h.logit;

    nn::BackwardOptions bopt;
    bopt.parameter_grads = false;
    bopt.keep_activation_grads = true;
    const std::vector<double> d_logit{sign};
    const auto r = nn::backward(m, cache, d_logit, bopt);
    const auto& last = cache.blocks.back();
    const nn::Tensor4<T>& a = opt.post_pool ? last.pooled : last.activated;
    const nn::Tensor4<T>& da = opt.post_pool ? r.d_pooled.back() : r.d_activated.back();

    const double area = static_cast<double>(a.h) * a.w;
    h.weights.assign(static_cast<std::size_t>(a.c), 0.0);
    for (int y = 0; y < a.h; ++y) {
        for (int x = 0; x < a.w; ++x) {
            for (int c = 0; c < a.c; ++c) h.weights[static_cast<std::size_t>(c)] += static_cast<double>(da.at(0, y, x, c));
        }
    }
    for (double& w : h.weights) w /= area;
    std::vector<double> feature(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) feature[k] = static_cast<double>(a.data[k]);
    finish_heatmap(h, feature, a.h, a.w, a.c);
    return h;
}

/// Blue-green-red colormap for t in [0, 1].
Rgb colormap(double t);

/// Per-pixel blend of the colormapped heat over the image with weight
/// alpha * heat, so zero heat leaves the original pixel untouched.
Image overlay(const Image& img, const std::vector<double>& heat, double alpha = 0.4);

}  // namespace kinet
