// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/render/color.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace lensfield {

/// Linear-radiance RGB image, row-major, channels interleaved.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(size_t(w) * h * 3, 0.0f) {}

    size_t pixel_count() const { return size_t(width) * height; }
    Rgb at(int x, int y) const {
        const float *p = &rgb[(size_t(y) * width + x) * 3];
        return Rgb(p[0], p[1], p[2]);
    }
    void set(int x, int y, const Rgb &c) {
        float *p = &rgb[(size_t(y) * width + x) * 3];
        p[0] = static_cast<float>(c[0]);
        p[1] = static_cast<float>(c[1]);
        p[2] = static_cast<float>(c[2]);
    }
    bool operator==(const Image &) const = default;
};

/// 8-bit RGB image holding encoded (sRGB) values.
struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;

    Image8() = default;
    Image8(int w, int h) : width(w), height(h), rgb(size_t(w) * h * 3, 0) {}
    bool operator==(const Image8 &) const = default;
};

inline uint8_t quantize_srgb(double linear) {
    return static_cast<uint8_t>(std::lround(linear_to_srgb(linear) * 255.0));
}

inline Image8 encode_srgb8(const Image &img) {
    Image8 out(img.width, img.height);
    for (size_t i = 0; i < img.rgb.size(); ++i)
        out.rgb[i] = quantize_srgb(img.rgb[i]);
    return out;
}

inline Image decode_srgb8(const Image8 &img) {
    Image out(img.width, img.height);
    for (size_t i = 0; i < img.rgb.size(); ++i)
        out.rgb[i] = static_cast<float>(srgb_to_linear(img.rgb[i] / 255.0));
    return out;
}

inline void write_png(const std::filesystem::path &path, const Image8 &img) {
    std::unique_ptr<FILE, int (*)(FILE *)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp)
        throw IoError(concat("cannot open ", path.string(), " for writing"));
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(concat("libpng initialisation failed for ", path.string()));
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(concat("failed writing PNG ", path.string()));
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(&img.rgb[size_t(y) * img.width * 3]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image8 read_png(const std::filesystem::path &path) {
    std::unique_ptr<FILE, int (*)(FILE *)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
    if (!fp)
        throw IoError(concat("cannot open ", path.string()));
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(concat("libpng initialisation failed for ", path.string()));
    }
    Image8 out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(concat("failed reading PNG ", path.string()));
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16)
        png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.rgb.assign(size_t(out.width) * out.height * 3, 0);
    for (int y = 0; y < out.height; ++y)
        png_read_row(png, &out.rgb[size_t(y) * out.width * 3], nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

/// Portable float map, little-endian, bottom row first.
inline void write_pfm(const std::filesystem::path &path, const Image &img) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError(concat("cannot open ", path.string(), " for writing"));
    os << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
    static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");
    for (int y = img.height - 1; y >= 0; --y)
        os.write(reinterpret_cast<const char *>(&img.rgb[size_t(y) * img.width * 3]),
                 static_cast<std::streamsize>(size_t(img.width) * 3 * sizeof(float)));
    if (!os)
        throw IoError(concat("failed writing ", path.string()));
}

inline Image read_pfm(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError(concat("cannot open ", path.string()));
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    is >> magic >> w >> h >> scale;
    is.get();
    if (!is || magic != "PF" || w <= 0 || h <= 0)
        throw IoError(concat(path.string(), ": not an RGB PFM file"));
    if (scale >= 0.0)
        throw IoError(concat(path.string(), ": big-endian PFM is not supported"));
    Image img(w, h);
    for (int y = h - 1; y >= 0; --y)
        is.read(reinterpret_cast<char *>(&img.rgb[size_t(y) * w * 3]), static_cast<std::streamsize>(size_t(w) * 3 * sizeof(float)));
    if (!is)
        throw IoError(concat(path.string(), ": truncated PFM data"));
    return img;
}

} // namespace lensfield
