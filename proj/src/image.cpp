#include "stylestage/image.hpp"

#include "stylestage/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace stylestage {

namespace {

unsigned char to_byte(double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(clamped * 255.0));
}

}  // namespace

std::vector<unsigned char> encode_png(const Image& image) {
    if (image.shape.channels != 3 || image.shape.width < 1 || image.shape.height < 1) {
        throw ValidationError("cannot encode image of shape " + image.shape.str());
    }
    const int w = image.shape.width;
    const int h = image.shape.height;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at(c, y, x));
        }
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(w);
    png.height = static_cast<png_uint_32>(h);
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
        throw IoError(std::string("png encode failed: ") + png.message);
    }
    std::vector<unsigned char> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
        throw IoError(std::string("png encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

Image decode_png(std::span<const unsigned char> bytes) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw IoError(std::string("png decode failed: ") + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw IoError(std::string("png decode failed: ") + png.message);
    }
    const int w = static_cast<int>(png.width);
    const int h = static_cast<int>(png.height);
    Image img = make_image(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
            }
        }
    }
    return img;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_png(const std::filesystem::path& path, const Image& image) { write_file_atomic(path, encode_png(image)); }

Image read_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
    return decode_png(read_file_bytes(path));
}

Image quantize_8bit(const Image& image) {
    Image out = image;
    for (Eigen::Index i = 0; i < out.values.size(); ++i) out.values(i) = to_byte(out.values(i)) / 255.0;
    return out;
}

}  // namespace stylestage
