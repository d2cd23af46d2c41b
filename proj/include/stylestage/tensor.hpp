#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

namespace stylestage {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Channel-major (C x H x W) geometry of a flat tensor.
struct TensorShape {
    int channels = 0;
    int height = 0;
    int width = 0;

    Eigen::Index size() const {
        return static_cast<Eigen::Index>(channels) * height * width;
    }
    Eigen::Index index(int c, int y, int x) const {
        return (static_cast<Eigen::Index>(c) * height + y) * width + x;
    }
    std::string str() const;

    friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

template <typename Scalar>
struct BasicTensor {
    using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    TensorShape shape;
    VectorType values;

    BasicTensor() = default;
    explicit BasicTensor(TensorShape s) : shape(s), values(VectorType::Zero(s.size())) {}
    BasicTensor(TensorShape s, VectorType v) : shape(s), values(std::move(v)) {}

    Scalar& at(int c, int y, int x) { return values(shape.index(c, y, x)); }
    Scalar at(int c, int y, int x) const { return values(shape.index(c, y, x)); }
};

// Latent code z (and noise tensors of the same geometry).
using LatentCode = BasicTensor<double>;
using NoiseTensor = BasicTensor<double>;

}  // namespace stylestage
