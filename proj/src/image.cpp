#include "kinet/image.hpp"

#include <cstring>
#include <fstream>
#include <string>

#include <png.h>

namespace kinet {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative image size");
    pixels_.resize(3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
        pixels_[i] = fill.r;
        pixels_[i + 1] = fill.g;
        pixels_[i + 2] = fill.b;
    }
}

void write_png(const Image& image, const std::filesystem::path& path) {
    png_image desc;
    std::memset(&desc, 0, sizeof desc);
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(image.width());
    desc.height = static_cast<png_uint_32>(image.height());
    desc.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&desc, path.c_str(), 0, image.bytes().data(), 0, nullptr)) {
        const std::string msg = desc.message;
        png_image_free(&desc);
        throw ImageIoError("cannot write " + path.string() + ": " + msg);
    }
}

Image read_png(const std::filesystem::path& path) {
    png_image desc;
    std::memset(&desc, 0, sizeof desc);
    desc.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&desc, path.c_str())) {
        throw ImageIoError("cannot read " + path.string() + ": " + desc.message);
    }
    desc.format = PNG_FORMAT_RGB;
    Image out(static_cast<int>(desc.width), static_cast<int>(desc.height));
    if (!png_image_finish_read(&desc, nullptr, out.bytes().data(), 0, nullptr)) {
        const std::string msg = desc.message;
        png_image_free(&desc);
        throw ImageIoError("corrupt image " + path.string() + ": " + msg);
    }
    return out;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.bytes().data()),
              static_cast<std::streamsize>(image.bytes().size()));
    if (!out) throw ImageIoError("cannot write " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (!in || magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
        throw ImageIoError("corrupt image " + path.string() + ": not an 8-bit P6 file");
    in.get();
    Image out(w, h);
    in.read(reinterpret_cast<char*>(out.bytes().data()), static_cast<std::streamsize>(out.bytes().size()));
    if (in.gcount() != static_cast<std::streamsize>(out.bytes().size()))
        throw ImageIoError("corrupt image " + path.string() + ": truncated pixel data");
    return out;
}

void write_image(const Image& image, const std::filesystem::path& path) {
    if (path.extension() == ".ppm") {
        write_ppm(image, path);
    } else {
        write_png(image, path);
    }
}

Image read_image(const std::filesystem::path& path) {
    return path.extension() == ".ppm" ? read_ppm(path) : read_png(path);
}

}  // namespace kinet
