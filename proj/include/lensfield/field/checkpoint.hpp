// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/field/voxel_field.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

// Field checkpoint layout (all little-endian):
//   char[8]   magic "LFVF0001"
//   uint32    resolution x, y, z (cells)
//   float64   bbox lo x, y, z, hi x, y, z
//   uint32    density activation id (1 = softplus), color activation id (2 = sigmoid)
//   float32   density parameters, one per corner, x fastest
//   float32   color parameters, (r, g, b) per corner, same corner order

namespace lensfield {

inline constexpr char kCheckpointMagic[8] = {'L', 'F', 'V', 'F', '0', '0', '0', '1'};
inline constexpr uint32_t kActivationSoftplus = 1;
inline constexpr uint32_t kActivationSigmoid = 2;

namespace detail {

template <typename T>
void put_le(std::vector<char> &out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get_le(const std::vector<char> &in, size_t &pos, const std::string &path) {
    if (pos + sizeof(T) > in.size())
        throw IoError(concat(path, ": truncated field checkpoint"));
    char bytes[sizeof(T)];
    std::memcpy(bytes, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    pos += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

} // namespace detail

inline std::vector<char> encode_checkpoint(const VoxelField &field) {
    std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 8);
    const Resolution &r = field.resolution();
    detail::put_le<uint32_t>(out, r.x);
    detail::put_le<uint32_t>(out, r.y);
    detail::put_le<uint32_t>(out, r.z);
    for (int a = 0; a < 3; ++a)
        detail::put_le<double>(out, field.bbox().lo[a]);
    for (int a = 0; a < 3; ++a)
        detail::put_le<double>(out, field.bbox().hi[a]);
    detail::put_le<uint32_t>(out, kActivationSoftplus);
    detail::put_le<uint32_t>(out, kActivationSigmoid);
    const auto params = field.params();
    const size_t n = field.corner_count();
    out.reserve(out.size() + params.size() * 4);
    for (size_t c = 0; c < n; ++c)
        detail::put_le<float>(out, params[c * VoxelField::kChannels]);
    for (size_t c = 0; c < n; ++c)
        for (int ch = 1; ch < 4; ++ch)
            detail::put_le<float>(out, params[c * VoxelField::kChannels + ch]);
    return out;
}

inline VoxelField decode_checkpoint(const std::vector<char> &in, const std::string &path = "<memory>") {
    if (in.size() < 8 || std::memcmp(in.data(), kCheckpointMagic, 8) != 0)
        throw IoError(concat(path, ": not a field checkpoint (bad magic)"));
    size_t pos = 8;
    Resolution r;
    r.x = static_cast<int>(detail::get_le<uint32_t>(in, pos, path));
    r.y = static_cast<int>(detail::get_le<uint32_t>(in, pos, path));
    r.z = static_cast<int>(detail::get_le<uint32_t>(in, pos, path));
    Aabb box;
    for (int a = 0; a < 3; ++a)
        box.lo[a] = detail::get_le<double>(in, pos, path);
    for (int a = 0; a < 3; ++a)
        box.hi[a] = detail::get_le<double>(in, pos, path);
    const uint32_t density_act = detail::get_le<uint32_t>(in, pos, path);
    const uint32_t color_act = detail::get_le<uint32_t>(in, pos, path);
    if (density_act != kActivationSoftplus || color_act != kActivationSigmoid)
        throw IoError(concat(path, ": unsupported activation ids ", density_act, "/", color_act));
    VoxelField field(r, box);
    const size_t n = field.corner_count();
    if (in.size() - pos != n * 4 * sizeof(float))
        throw IoError(concat(path, ": parameter payload has ", in.size() - pos, " bytes, expected ",
                             n * 4 * sizeof(float)));
    auto params = field.mutable_params();
    for (size_t c = 0; c < n; ++c)
        params[c * VoxelField::kChannels] = detail::get_le<float>(in, pos, path);
    for (size_t c = 0; c < n; ++c)
        for (int ch = 1; ch < 4; ++ch)
            params[c * VoxelField::kChannels + ch] = detail::get_le<float>(in, pos, path);
    return field;
}

inline void save_checkpoint(const std::filesystem::path &path, const VoxelField &field) {
    const auto bytes = encode_checkpoint(field);
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError(concat("cannot open ", path.string(), " for writing"));
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os)
        throw IoError(concat("failed writing ", path.string()));
}

inline VoxelField load_checkpoint(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError(concat("cannot open ", path.string()));
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path.string());
}

} // namespace lensfield
