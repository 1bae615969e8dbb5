#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace kinet {

inline constexpr int kImageSize = 256;

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

/// Row-major interleaved 8-bit RGB raster.
class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = kWhite);

    int width() const { return width_; }
    int height() const { return height_; }

    Rgb at(int x, int y) const {
        const std::uint8_t* p = &pixels_[offset(x, y)];
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, Rgb c) {
        std::uint8_t* p = &pixels_[offset(x, y)];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }

    const std::vector<std::uint8_t>& bytes() const { return pixels_; }
    std::vector<std::uint8_t>& bytes() { return pixels_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t offset(int x, int y) const {
        return 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x));
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Binary P6 fallback for debugging.
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// Writes PNG unless the extension is `.ppm`.
void write_image(const Image& image, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

}  // namespace kinet
