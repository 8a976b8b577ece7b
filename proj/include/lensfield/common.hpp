// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lensfield {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rgb = Eigen::Array3d;

inline constexpr double kPi = 3.14159265358979323846;

/// Precondition on an argument was violated (out-of-range pixel, z <= 0, ...).
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// A computation produced a non-finite or degenerate value.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration input.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// File system or format failure. The message always names the path.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

template <typename... Args>
std::string concat(const Args &...args) {
    std::ostringstream os;
    os.precision(17);
    (os << ... << args);
    return os.str();
}

inline std::string to_string(const Vec3 &v) {
    return concat("(", v.x(), ", ", v.y(), ", ", v.z(), ")");
}

/// 64-bit finalizer from splitmix64. Used to derive per-pixel seeds.
constexpr uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

constexpr uint64_t hash_combine(uint64_t seed, uint64_t value) {
    return mix64(seed ^ mix64(value));
}

template <typename... Ts>
constexpr uint64_t hash_values(uint64_t seed, Ts... values) {
    ((seed = hash_combine(seed, static_cast<uint64_t>(values))), ...);
    return seed;
}

/// Uniform double in [0, 1) from the top 53 bits of a hash.
constexpr double hash_to_unit(uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline bool all_finite(const Vec3 &v) { return v.allFinite(); }

} // namespace lensfield
