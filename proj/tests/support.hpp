#pragma once

#include "stylestage/backend.hpp"
#include "stylestage/image.hpp"
#include "stylestage/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace testing {

// Scratch directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("stylestage_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline stylestage::Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    stylestage::Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

// Smooth colourful pattern with a checker overlay; values stay inside (0, 1).
inline stylestage::Image pattern_image(int width, int height, double phase = 0.0) {
    stylestage::Image img = stylestage::make_image(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = static_cast<double>(x) / width;
            const double v = static_cast<double>(y) / height;
            img.at(0, y, x) = 0.5 + 0.4 * std::sin(6.0 * u + phase);
            img.at(1, y, x) = 0.5 + 0.4 * std::cos(4.0 * v - phase);
            img.at(2, y, x) = 0.3 + 0.3 * (((x * 8 / width) + (y * 8 / height)) % 2);
        }
    }
    return img;
}

// Two flat halves split at column `edge`.
inline stylestage::Image step_edge_image(int width, int height, int edge, double left = 0.9, double right = 0.1) {
    stylestage::Image img = stylestage::make_image(width, height);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) img.at(c, y, x) = x < edge ? left : right;
        }
    }
    return img;
}

inline stylestage::StyleExample style_example(const std::string& id, stylestage::Image image,
                                              const std::string& context) {
    stylestage::StyleExample ex;
    ex.id = id;
    ex.image = std::move(image);
    ex.caption.image_id = id;
    ex.caption.auto_caption = context;
    return ex;
}

inline stylestage::StyleDataset single_image_dataset(double phase = 0.0) {
    stylestage::StyleDataset ds;
    ds.examples.push_back(style_example("style", pattern_image(256, 256, phase), "of a house by a river"));
    return ds;
}

}  // namespace testing
