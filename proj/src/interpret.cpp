#include "kinet/interpret.hpp"

namespace kinet {

ActivationSheet activation_sheet(const nn::Tensor4<float>& a, int layer) {
    if (a.n != 1) throw InterpretError("activation sheet expects a single image");
    ActivationSheet s;
    s.layer = layer;
    s.channels = a.c;
    s.panel_width = a.w;
    s.panel_height = a.h;
    s.sheet = Image(a.c * a.w + (a.c - 1), a.h);
    for (int c = 0; c < a.c; ++c) {
        double lo = a.at(0, 0, 0, c), hi = lo, sum = 0.0;
        for (int y = 0; y < a.h; ++y) {
            for (int x = 0; x < a.w; ++x) {
                const double v = a.at(0, y, x, c);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                sum += v;
            }
        }
        s.channel_means.push_back(sum / (static_cast<double>(a.h) * a.w));
        const int x0 = c * (a.w + 1);
        for (int y = 0; y < a.h; ++y) {
            for (int x = 0; x < a.w; ++x) {
                std::uint8_t g = 128;
                if (hi > lo) g = static_cast<std::uint8_t>(std::lround(255.0 * (a.at(0, y, x, c) - lo) / (hi - lo)));
                s.sheet.set(x0 + x, y, {g, g, g});
            }
        }
    }
    return s;
}

Image deprocess(const nn::Tensor4<double>& x) {
    if (x.n != 1 || x.c != 3) throw InterpretError("deprocess expects one RGB image");
    double mean = 0.0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x.data) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(x.size()));
    Image img(x.w, x.h);
    auto& bytes = img.bytes();
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double v = std::clamp((x.data[k] - mean) / (sd + 1e-5) * 0.15 + 0.5, 0.0, 1.0);
        bytes[k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

std::vector<double> upsample_bilinear(const std::vector<double>& grid, int gh, int gw, int out_h, int out_w) {
    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
    auto src = [](int i, int n_out, int n_in) {
        return std::clamp((i + 0.5) * n_in / n_out - 0.5, 0.0, static_cast<double>(n_in - 1));
    };
    for (int y = 0; y < out_h; ++y) {
        const double sy = src(y, out_h, gh);
        const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, gh - 1);
        const double fy = sy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double sx = src(x, out_w, gw);
            const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, gw - 1);
            const double fx = sx - x0;
            const double top = grid[y0 * gw + x0] * (1 - fx) + grid[y0 * gw + x1] * fx;
            const double bot = grid[y1 * gw + x0] * (1 - fx) + grid[y1 * gw + x1] * fx;
            out[static_cast<std::size_t>(y) * out_w + x] = top * (1 - fy) + bot * fy;
        }
    }
    return out;
}

void finish_heatmap(Heatmap& h, const std::vector<double>& feature, int fh, int fw, int channels) {
    h.grid_height = fh;
    h.grid_width = fw;
    h.grid.assign(static_cast<std::size_t>(fh) * fw, 0.0);
    for (int p = 0; p < fh * fw; ++p) {
        double s = 0.0;
        for (int c = 0; c < channels; ++c) s += h.weights[static_cast<std::size_t>(c)] * feature[static_cast<std::size_t>(p) * channels + c];
        h.grid[static_cast<std::size_t>(p)] = std::max(0.0, s);
    }
    const double peak = *std::max_element(h.grid.begin(), h.grid.end());
    if (peak > 0.0) {
        for (double& v : h.grid) v /= peak;
    }
    h.upsampled = upsample_bilinear(h.grid, fh, fw, kImageSize, kImageSize);
    for (double& v : h.upsampled) v = std::clamp(v, 0.0, 1.0);
}

Rgb colormap(double t) {
    t = std::clamp(t, 0.0, 1.0);
    double r, g, b;
    if (t < 0.5) {
        r = 0.0;
        g = 2.0 * t;
        b = 1.0 - 2.0 * t;
    } else {
        r = 2.0 * t - 1.0;
        g = 2.0 - 2.0 * t;
        b = 0.0;
    }
    auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
    return {q(r), q(g), q(b)};
}

Image overlay(const Image& img, const std::vector<double>& heat, double alpha) {
    if (heat.size() != static_cast<std::size_t>(img.width()) * img.height())
        throw InterpretError("heatmap is " + std::to_string(heat.size()) + " values, image has " +
                             std::to_string(img.width() * img.height()) + " pixels");
    Image out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const double h = std::clamp(heat[static_cast<std::size_t>(y) * img.width() + x], 0.0, 1.0);
            if (h == 0.0) continue;
            const double a = alpha * h;
            const Rgb c = colormap(h), p = img.at(x, y);
            auto mix = [a](std::uint8_t under, std::uint8_t over) {
                return static_cast<std::uint8_t>(std::lround((1.0 - a) * under + a * over));
            };
            out.set(x, y, {mix(p.r, c.r), mix(p.g, c.g), mix(p.b, c.b)});
        }
    }
    return out;
}

}  // namespace kinet
