#include "kinet/render.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

namespace kinet {

namespace {

constexpr int kSub = 4;  // subsamples per pixel axis
constexpr int kSamples = kSub * kSub;

double sub_offset(int i) { return (i + 0.5) / kSub; }

struct PixelBox {
    int x0, y0, x1, y1;  // inclusive
};

PixelBox clip_box(double min_x, double min_y, double max_x, double max_y) {
    return {std::max(0, static_cast<int>(std::floor(min_x))), std::max(0, static_cast<int>(std::floor(min_y))),
            std::min(kImageSize - 1, static_cast<int>(std::floor(max_x))),
            std::min(kImageSize - 1, static_cast<int>(std::floor(max_y)))};
}

// Subsample mask of a capsule (segment a-b dilated by half_width).
void cover_segment(std::vector<std::uint16_t>& mask, Point a, Point b, double half_width) {
    const PixelBox box = clip_box(std::min(a.x, b.x) - half_width, std::min(a.y, b.y) - half_width,
                                  std::max(a.x, b.x) + half_width, std::max(a.y, b.y) + half_width);
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    const double r2 = half_width * half_width;
    for (int y = box.y0; y <= box.y1; ++y) {
        for (int x = box.x0; x <= box.x1; ++x) {
            std::uint16_t bits = 0;
            for (int sy = 0; sy < kSub; ++sy) {
                for (int sx = 0; sx < kSub; ++sx) {
                    const double px = x + sub_offset(sx) - a.x;
                    const double py = y + sub_offset(sy) - a.y;
                    const double t = std::clamp((px * dx + py * dy) / len2, 0.0, 1.0);
                    const double ex = px - t * dx, ey = py - t * dy;
                    if (ex * ex + ey * ey <= r2) bits |= static_cast<std::uint16_t>(1u << (sy * kSub + sx));
                }
            }
            mask[static_cast<std::size_t>(y) * kImageSize + static_cast<std::size_t>(x)] |= bits;
        }
    }
}

std::uint8_t blend(std::uint8_t under, std::uint8_t over, int covered) {
    return static_cast<std::uint8_t>((under * (kSamples - covered) + over * covered + kSamples / 2) / kSamples);
}

}  // namespace

void RenderStyle::validate() const {
    if (!(bar_width >= 1.0)) throw RenderError("bar_width must be at least 1 px");
    if (!(hinge_radius > bar_width / 2)) throw RenderError("hinge_radius must exceed half the bar width");
    if (!(margin_fraction >= 0.0 && margin_fraction < 0.5)) throw RenderError("margin_fraction must be in [0, 0.5)");
}

ImageTransform world_to_image_transform(const Structure& s, double scale, const RenderStyle& style) {
    if (!(scale > 0.0 && scale <= 1.0)) throw RenderError("scale must be in (0, 1]");
    style.validate();
    double min_x = s.joints()[0].x, max_x = min_x, min_y = s.joints()[0].y, max_y = min_y;
    for (const Joint& j : s.joints()) {
        min_x = std::min(min_x, j.x);
        max_x = std::max(max_x, j.x);
        min_y = std::min(min_y, j.y);
        max_y = std::max(max_y, j.y);
    }
    const double extent = std::max(max_x - min_x, max_y - min_y);
    if (!(extent > 0.0)) throw RenderError("structure has a zero-extent bounding box");

    ImageTransform t;
    t.k = scale * kImageSize * (1.0 - 2.0 * style.margin_fraction) / extent;
    const double half = kImageSize / 2.0;
    t.offset_x = half - t.k * (min_x + max_x) / 2.0;
    t.offset_y = half + t.k * (min_y + max_y) / 2.0;
    return t;
}

Image render(const Structure& s, double scale, const RenderStyle& style) {
    const ImageTransform t = world_to_image_transform(s, scale, style);
    Image img(kImageSize, kImageSize);

    std::vector<std::uint16_t> bar_mask(static_cast<std::size_t>(kImageSize) * kImageSize, 0);
    for (const Bar& b : s.bars()) {
        cover_segment(bar_mask, t.apply(s.joint(b.j1).position()), t.apply(s.joint(b.j2).position()),
                      style.bar_width / 2.0);
    }
    for (int y = 0; y < kImageSize; ++y) {
        for (int x = 0; x < kImageSize; ++x) {
            const int covered = std::popcount(bar_mask[static_cast<std::size_t>(y) * kImageSize + x]);
            if (covered == 0) continue;
            img.set(x, y, {blend(255, style.bar_color.r, covered), blend(255, style.bar_color.g, covered),
                           blend(255, style.bar_color.b, covered)});
        }
    }

    const double r2 = style.hinge_radius * style.hinge_radius;
    for (const Joint& j : s.joints()) {
        if (j.kind != JointKind::Hinge) continue;
        const Point c = t.apply(j.position());
        const PixelBox box = clip_box(c.x - style.hinge_radius, c.y - style.hinge_radius,
                                      c.x + style.hinge_radius, c.y + style.hinge_radius);
        for (int y = box.y0; y <= box.y1; ++y) {
            for (int x = box.x0; x <= box.x1; ++x) {
                int covered = 0;
                for (int sy = 0; sy < kSub; ++sy) {
                    for (int sx = 0; sx < kSub; ++sx) {
                        const double dx = x + sub_offset(sx) - c.x, dy = y + sub_offset(sy) - c.y;
                        covered += dx * dx + dy * dy <= r2;
                    }
                }
                if (covered == 0) continue;
                const Rgb under = img.at(x, y);
                img.set(x, y, {blend(under.r, style.hinge_color.r, covered),
                               blend(under.g, style.hinge_color.g, covered),
                               blend(under.b, style.hinge_color.b, covered)});
            }
        }
    }
    return img;
}

}  // namespace kinet
