#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stylestage {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

constexpr std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t state = kFnvOffset) {
    for (unsigned char b : bytes) {
        state ^= b;
        state *= 0x100000001b3ULL;
    }
    return state;
}

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t state = kFnvOffset) {
    return fnv1a(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()), state);
}

template <typename Derived>
std::uint64_t fnv1a(const Eigen::DenseBase<Derived>& m, std::uint64_t state = kFnvOffset) {
    const typename Derived::PlainObject plain = m;
    return fnv1a(std::span(reinterpret_cast<const unsigned char*>(plain.data()),
                           static_cast<std::size_t>(plain.size()) * sizeof(typename Derived::Scalar)),
                 state);
}

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const unsigned char> bytes);
inline std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string base64_encode(std::span<const unsigned char> bytes);
// Throws ContentError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace stylestage
