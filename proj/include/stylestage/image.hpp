#pragma once

#include "stylestage/tensor.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace stylestage {

// RGB image, channel-major, nominal range [0, 1].
using Image = BasicTensor<double>;

inline Image make_image(int width, int height, double fill = 0.0) {
    Image img(TensorShape{3, height, width});
    img.values.setConstant(fill);
    return img;
}

// Lossless 8-bit RGB PNG. Values are clamped to [0, 1] and rounded.
std::vector<unsigned char> encode_png(const Image& image);
Image decode_png(std::span<const unsigned char> bytes);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
// Write via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);

// 8-bit quantisation applied by the PNG writer.
Image quantize_8bit(const Image& image);

}  // namespace stylestage
