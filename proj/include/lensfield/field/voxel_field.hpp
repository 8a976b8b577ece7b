// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/optics/camera.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace lensfield {

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Raw parameter whose softplus is `y` (y > 0).
inline double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

inline double inverse_sigmoid(double c) { return std::log(c / (1.0 - c)); }

struct Aabb {
    Vec3 lo = Vec3::Constant(-1.0);
    Vec3 hi = Vec3::Constant(1.0);

    Vec3 extent() const { return hi - lo; }
    bool contains(const Vec3 &x) const { return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all(); }

    /// Parametric overlap [t0, t1] of the ray with the box, if any.
    std::optional<std::pair<double, double>> intersect(const Ray &ray) const {
        double t0 = -std::numeric_limits<double>::infinity();
        double t1 = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            const double d = ray.direction[a];
            const double o = ray.origin[a];
            if (d == 0.0) {
                if (o < lo[a] || o > hi[a])
                    return std::nullopt;
                continue;
            }
            double ta = (lo[a] - o) / d;
            double tb = (hi[a] - o) / d;
            if (ta > tb)
                std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        if (t0 > t1)
            return std::nullopt;
        return std::make_pair(t0, t1);
    }

    bool operator==(const Aabb &) const = default;
};

struct Resolution {
    int x = 128;
    int y = 128;
    int z = 128;

    size_t cells() const { return size_t(x) * y * z; }
    size_t corners() const { return size_t(x + 1) * (y + 1) * (z + 1); }
    bool operator==(const Resolution &) const = default;
};

/// Density (1/m) and linear color at a point.
struct FieldSample {
    double sigma = 0.0;
    Rgb color = Rgb::Zero();
};

class OccupancyGrid;

/// Dense grid of pre-activation parameters stored at voxel corners and
/// interpolated trilinearly. Density uses softplus, color uses sigmoid.
/// Parameters are interleaved per corner as (density, r, g, b).
class VoxelField {
  public:
    static constexpr int kChannels = 4;
    static constexpr float kDefaultDensityParam = -1.0f;
    static constexpr float kDefaultColorParam = 0.0f;

    VoxelField() : VoxelField(Resolution{1, 1, 1}, Aabb{}) {}

    VoxelField(Resolution res, Aabb bbox, float density_param = kDefaultDensityParam,
               float color_param = kDefaultColorParam)
        : res_(res), bbox_(bbox) {
        if (res.x < 1 || res.y < 1 || res.z < 1)
            throw DomainError(concat("VoxelField: resolution must be >= 1, got ", res.x, "x", res.y, "x", res.z));
        if (!((bbox.hi.array() > bbox.lo.array()).all()))
            throw DomainError("VoxelField: bounding box must have positive extent");
        params_.resize(res.corners() * kChannels);
        for (size_t c = 0; c < res.corners(); ++c) {
            params_[c * kChannels] = density_param;
            params_[c * kChannels + 1] = params_[c * kChannels + 2] = params_[c * kChannels + 3] = color_param;
        }
        cell_ = bbox.extent().cwiseQuotient(Vec3(res.x, res.y, res.z));
        inv_cell_ = cell_.cwiseInverse();
    }

    const Resolution &resolution() const { return res_; }
    const Aabb &bbox() const { return bbox_; }
    const Vec3 &cell_size() const { return cell_; }
    size_t corner_count() const { return res_.corners(); }
    size_t param_count() const { return params_.size(); }

    std::span<const float> params() const { return params_; }

    /// Writable parameter view; invalidates tapes recorded earlier.
    std::span<float> mutable_params() {
        ++version_;
        return params_;
    }

    /// Stamp identifying the current parameter state.
    uint64_t version() const { return version_; }

    size_t corner_index(int i, int j, int k) const { return (size_t(k) * (res_.y + 1) + j) * (res_.x + 1) + i; }

    Vec3 corner_position(int i, int j, int k) const {
        return bbox_.lo + Vec3(i, j, k).cwiseProduct(cell_);
    }

    /// Cell containing `x` and the fractional position inside it.
    struct Location {
        size_t base = 0;  // corner index of the cell's lower corner
        size_t cell = 0;  // linear cell index
        std::array<double, 3> frac{};
        std::array<int, 3> index{};
    };

    Location locate(const Vec3 &x) const {
        const Vec3 u = (x - bbox_.lo).cwiseProduct(inv_cell_);
        const int n[3] = {res_.x, res_.y, res_.z};
        int idx[3];
        Location loc;
        for (int a = 0; a < 3; ++a) {
            idx[a] = std::clamp(static_cast<int>(std::floor(u[a])), 0, n[a] - 1);
            loc.frac[a] = u[a] - idx[a];
            loc.index[a] = idx[a];
        }
        loc.base = corner_index(idx[0], idx[1], idx[2]);
        loc.cell = (size_t(idx[2]) * res_.y + idx[1]) * res_.x + idx[0];
        return loc;
    }

    /// Ray parameter at which `ray` leaves the aligned block of `span`^3
    /// cells that contains the cell of `loc`.
    double cell_exit(const Location &loc, const Vec3 &origin, const Vec3 &direction, int span = 1) const {
        const int n[3] = {res_.x, res_.y, res_.z};
        double t = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            const double d = direction[a];
            if (d == 0.0)
                continue;
            const int lo = loc.index[a] / span * span;
            const int face = d > 0.0 ? std::min(lo + span, n[a]) : lo;
            t = std::min(t, (bbox_.lo[a] + face * cell_[a] - origin[a]) / d);
        }
        return t;
    }

    /// Corner offsets of a cell in the order dx + 2 dy + 4 dz.
    std::array<size_t, 8> corner_offsets() const {
        const size_t sx = 1, sy = res_.x + 1, sz = size_t(res_.x + 1) * (res_.y + 1);
        return {0, sx, sy, sx + sy, sz, sz + sx, sz + sy, sz + sy + sx};
    }

    static std::array<double, 8> trilinear_weights(const std::array<double, 3> &f) {
        std::array<double, 8> w{};
        for (int c = 0; c < 8; ++c) {
            w[c] = ((c & 1) ? f[0] : 1.0 - f[0]) * ((c & 2) ? f[1] : 1.0 - f[1]) * ((c & 4) ? f[2] : 1.0 - f[2]);
        }
        return w;
    }

    /// Interpolated pre-activation (density, r, g, b).
    /// Nested linear interpolation along x, then y, then z; a constant
    /// neighbourhood interpolates to itself exactly.
    std::array<double, 4> interpolate_raw(const Location &loc) const {
        const auto off = corner_offsets();
        const auto &f = loc.frac;
        std::array<double, 4> raw;
        for (int ch = 0; ch < kChannels; ++ch) {
            std::array<double, 8> v;
            for (int c = 0; c < 8; ++c)
                v[c] = params_[(loc.base + off[c]) * kChannels + ch];
            double y[4];
            for (int c = 0; c < 4; ++c)
                y[c] = v[2 * c] + f[0] * (v[2 * c + 1] - v[2 * c]);
            const double z0 = y[0] + f[1] * (y[1] - y[0]);
            const double z1 = y[2] + f[1] * (y[3] - y[2]);
            raw[ch] = z0 + f[2] * (z1 - z0);
        }
        return raw;
    }

    FieldSample sample_at(const Location &loc) const {
        const auto raw = interpolate_raw(loc);
        return FieldSample{softplus(raw[0]), Rgb(sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3]))};
    }

    FieldSample query(const Vec3 &x) const {
        if (!x.allFinite())
            throw NumericError("VoxelField::query: non-finite position " + to_string(x));
        if (!bbox_.contains(x))
            return FieldSample{};
        return sample_at(locate(x));
    }

    /// Backward of query. Adds d(sigma, color)/d(params) contracted with the
    /// adjoints into `param_grad` (same layout as params(), may be empty) and
    /// returns the contracted spatial gradient.
    Vec3 query_grad(const Vec3 &x, double d_sigma, const Rgb &d_color, std::span<double> param_grad) const {
        if (!bbox_.contains(x) || !x.allFinite())
            return Vec3::Zero();
        const Location loc = locate(x);
        const auto raw = interpolate_raw(loc);
        std::array<double, 4> g;
        g[0] = d_sigma * sigmoid(raw[0]);
        for (int ch = 0; ch < 3; ++ch) {
            const double c = sigmoid(raw[1 + ch]);
            g[1 + ch] = d_color[ch] * c * (1.0 - c);
        }
        const auto off = corner_offsets();
        const auto w = trilinear_weights(loc.frac);
        const auto &f = loc.frac;
        std::array<double, 8> q;
        for (int c = 0; c < 8; ++c) {
            const size_t corner = loc.base + off[c];
            const float *p = &params_[corner * kChannels];
            q[c] = g[0] * p[0] + g[1] * p[1] + g[2] * p[2] + g[3] * p[3];
            if (!param_grad.empty()) {
                double *pg = &param_grad[corner * kChannels];
                for (int ch = 0; ch < kChannels; ++ch)
                    pg[ch] += w[c] * g[ch];
            }
        }
        // Differences along each axis, weighted by the other two coordinates.
        Vec3 d_frac = Vec3::Zero();
        for (int axis = 0; axis < 3; ++axis) {
            const int bit = 1 << axis;
            for (int c = 0; c < 8; ++c) {
                if (c & bit)
                    continue;
                double weight = 1.0;
                for (int other = 0; other < 3; ++other)
                    if (other != axis)
                        weight *= (c & (1 << other)) ? f[other] : 1.0 - f[other];
                d_frac[axis] += (q[c | bit] - q[c]) * weight;
            }
        }
        return d_frac.cwiseProduct(inv_cell_);
    }

    float &raw(size_t corner, int channel) {
        ++version_;
        return params_[corner * kChannels + channel];
    }
    float raw(size_t corner, int channel) const { return params_[corner * kChannels + channel]; }

    // Optional acceleration grid, owned by the field so renderers can find it.
    void set_occupancy(std::shared_ptr<const OccupancyGrid> grid) { occupancy_ = std::move(grid); }
    const OccupancyGrid *occupancy() const { return occupancy_.get(); }

  private:
    Resolution res_;
    Aabb bbox_;
    Vec3 cell_;
    Vec3 inv_cell_;
    std::vector<float> params_;
    uint64_t version_ = 0;
    std::shared_ptr<const OccupancyGrid> occupancy_;
};

/// One bit per cell; a cleared bit means the cell's activated density never
/// exceeds `threshold`, so samples there may be skipped. A coarse layer marks
/// blocks of kBlock^3 cells that contain any occupied cell.
class OccupancyGrid {
  public:
    static constexpr int kBlock = 8;

    OccupancyGrid(Resolution res, double threshold)
        : res_(res), threshold_(threshold), bits_((res.cells() + 63) / 64),
          blocks_{(res.x + kBlock - 1) / kBlock, (res.y + kBlock - 1) / kBlock, (res.z + kBlock - 1) / kBlock},
          block_bits_(blocks_.cells(), 0) {}

    const Resolution &resolution() const { return res_; }
    double threshold() const { return threshold_; }

    bool occupied(size_t cell) const { return (bits_[cell >> 6] >> (cell & 63)) & 1u; }
    void set_occupied(size_t cell) {
        bits_[cell >> 6] |= uint64_t(1) << (cell & 63);
        const size_t i = cell % res_.x, j = (cell / res_.x) % res_.y, k = cell / (size_t(res_.x) * res_.y);
        block_bits_[block_index(int(i), int(j), int(k))] = 1;
    }

    /// Whether the block holding cell (i, j, k) has any occupied cell.
    bool block_occupied(const std::array<int, 3> &cell) const {
        return block_bits_[block_index(cell[0], cell[1], cell[2])] != 0;
    }

    size_t occupied_count() const {
        size_t n = 0;
        for (uint64_t w : bits_)
            n += static_cast<size_t>(__builtin_popcountll(w));
        return n;
    }
    size_t empty_count() const { return res_.cells() - occupied_count(); }

  private:
    size_t block_index(int i, int j, int k) const {
        return (size_t(k / kBlock) * blocks_.y + j / kBlock) * blocks_.x + i / kBlock;
    }

    Resolution res_;
    double threshold_;
    std::vector<uint64_t> bits_;
    Resolution blocks_;
    std::vector<uint8_t> block_bits_;
};

/// Conservative occupancy: softplus is monotone, so the largest activated
/// density inside a cell is the activation of its largest corner parameter.
inline OccupancyGrid rebuild_occupancy(const VoxelField &field, double threshold) {
    if (!(threshold >= 0.0))
        throw DomainError(concat("rebuild_occupancy: threshold must be >= 0, got ", threshold));
    const Resolution &r = field.resolution();
    OccupancyGrid grid(r, threshold);
    const auto off = field.corner_offsets();
    const auto params = field.params();
    size_t cell = 0;
    for (int k = 0; k < r.z; ++k)
        for (int j = 0; j < r.y; ++j)
            for (int i = 0; i < r.x; ++i, ++cell) {
                const size_t base = field.corner_index(i, j, k);
                float hi = -std::numeric_limits<float>::infinity();
                for (size_t o : off)
                    hi = std::max(hi, params[(base + o) * VoxelField::kChannels]);
                if (softplus(hi) > threshold)
                    grid.set_occupied(cell);
            }
    return grid;
}

inline void attach_occupancy(VoxelField &field, double threshold) {
    field.set_occupancy(std::make_shared<const OccupancyGrid>(rebuild_occupancy(field, threshold)));
}

} // namespace lensfield
