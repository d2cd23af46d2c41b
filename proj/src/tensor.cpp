#include "stylestage/tensor.hpp"

namespace stylestage {

std::string TensorShape::str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

}  // namespace stylestage
