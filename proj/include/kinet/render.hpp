#pragma once

#include <stdexcept>

#include "kinet/image.hpp"
#include "kinet/structure.hpp"

namespace kinet {

/// Drawing convention: black bars, red filled circles on hinge joints, rigid
/// joints left unmarked (bars simply meet).
struct RenderStyle {
    Rgb bar_color{0, 0, 0};
    double bar_width = 3.0;
    Rgb hinge_color{255, 0, 0};
    double hinge_radius = 5.0;
    double margin_fraction = 0.12;

    void validate() const;
};

class RenderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Isotropic world-to-pixel map: px = offset_x + k * x, py = offset_y - k * y
/// (image rows grow downwards).
struct ImageTransform {
    double k = 1.0;
    double offset_x = 0.0;
    double offset_y = 0.0;

    Point apply(Point p) const { return {offset_x + k * p.x, offset_y - k * p.y}; }
};

/// Centers the structure's bounding box; at scale 1 its longest side spans
/// the image minus a margin_fraction border on both sides.
ImageTransform world_to_image_transform(const Structure& s, double scale, const RenderStyle& style);

/// Deterministic anti-aliased rendering onto a white 256x256 canvas. Coverage
/// comes from a fixed 4x4 subsample grid per pixel.
Image render(const Structure& s, double scale, const RenderStyle& style = {});

}  // namespace kinet
