// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/optics/camera.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lensfield {

/// 17 significant digits: every double survives a text round trip bit-exactly.
inline std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_real(std::string_view text, std::string_view what) {
    double v = 0.0;
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ConfigError(concat("cannot parse '", text, "' as a number for ", what));
    return v;
}

inline void write_camera(std::ostream &os, const Camera &c) {
    os << "camera\n";
    os << "width " << c.width << "\n";
    os << "height " << c.height << "\n";
    os << "fx " << format_real(c.fx) << "\n";
    os << "fy " << format_real(c.fy) << "\n";
    os << "cx " << format_real(c.cx) << "\n";
    os << "cy " << format_real(c.cy) << "\n";
    os << "rotation";
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k)
            os << ' ' << format_real(c.rotation(r, k));
    os << "\ntranslation";
    for (int k = 0; k < 3; ++k)
        os << ' ' << format_real(c.translation[k]);
    os << "\naperture_radius " << format_real(c.aperture_radius) << "\n";
    os << "focal_length " << format_real(c.focal_length) << "\n";
    os << "focus_distance " << format_real(c.focus_distance) << "\n";
    os << "end\n";
}

inline void write_cameras(std::ostream &os, const std::vector<Camera> &cameras) {
    os << "# lensfield cameras v1 (lengths in meters, rotation camera-to-world row-major)\n";
    for (const Camera &c : cameras)
        write_camera(os, c);
}

/// Parses every `camera ... end` entry of a camera document.
inline std::vector<Camera> read_cameras(std::istream &is, const std::string &source = "<stream>") {
    std::vector<Camera> cameras;
    std::string line;
    int lineno = 0;
    bool open = false;
    Camera cur;
    unsigned seen = 0;
    constexpr unsigned kAll = (1u << 11) - 1;
    auto fail = [&](const std::string &msg) { throw ConfigError(concat(source, ":", lineno, ": ", msg)); };
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key))
            continue;
        if (key == "camera") {
            if (open)
                fail("nested camera entry");
            open = true;
            cur = Camera{};
            seen = 0;
            continue;
        }
        if (!open)
            fail("field '" + key + "' outside a camera entry");
        if (key == "end") {
            if (seen != kAll)
                fail("camera entry is missing fields");
            cur.validate();
            cameras.push_back(cur);
            open = false;
            continue;
        }
        std::vector<std::string> vals;
        for (std::string v; ls >> v;)
            vals.push_back(v);
        auto need = [&](size_t count) {
            if (vals.size() != count)
                fail(concat("field '", key, "' expects ", count, " values"));
        };
        auto real = [&](size_t i) { return parse_real(vals[i], key); };
        if (key == "width" || key == "height") {
            need(1);
            int v = 0;
            auto res = std::from_chars(vals[0].data(), vals[0].data() + vals[0].size(), v);
            if (res.ec != std::errc())
                fail("bad integer for " + key);
            (key == "width" ? cur.width : cur.height) = v;
            seen |= key == "width" ? 1u : 2u;
        } else if (key == "fx") {
            need(1), cur.fx = real(0), seen |= 4u;
        } else if (key == "fy") {
            need(1), cur.fy = real(0), seen |= 8u;
        } else if (key == "cx") {
            need(1), cur.cx = real(0), seen |= 16u;
        } else if (key == "cy") {
            need(1), cur.cy = real(0), seen |= 32u;
        } else if (key == "rotation") {
            need(9);
            for (int i = 0; i < 9; ++i)
                cur.rotation(i / 3, i % 3) = real(i);
            seen |= 64u;
        } else if (key == "translation") {
            need(3);
            for (int i = 0; i < 3; ++i)
                cur.translation[i] = real(i);
            seen |= 128u;
        } else if (key == "aperture_radius") {
            need(1), cur.aperture_radius = real(0), seen |= 256u;
        } else if (key == "focal_length") {
            need(1), cur.focal_length = real(0), seen |= 512u;
        } else if (key == "focus_distance") {
            need(1), cur.focus_distance = real(0), seen |= 1024u;
        } else {
            fail("unknown camera field '" + key + "'");
        }
    }
    if (open)
        throw ConfigError(concat(source, ": unterminated camera entry"));
    return cameras;
}

inline void save_cameras(const std::filesystem::path &path, const std::vector<Camera> &cameras) {
    std::ofstream os(path);
    if (!os)
        throw IoError(concat("cannot open ", path.string(), " for writing"));
    write_cameras(os, cameras);
    if (!os)
        throw IoError(concat("failed writing ", path.string()));
}

inline std::vector<Camera> load_cameras(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is)
        throw IoError(concat("cannot open ", path.string()));
    return read_cameras(is, path.string());
}

} // namespace lensfield
