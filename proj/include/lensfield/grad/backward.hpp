// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/field/voxel_field.hpp"
#include "lensfield/render/render.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace lensfield {

/// Backward pass attempted on a tape recorded against different parameters.
class StaleTapeError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

struct RayGrad {
    Vec3 d_origin = Vec3::Zero();
    Vec3 d_direction = Vec3::Zero();
};

/// Exact reverse pass of render_ray's discrete estimator. `adjoint` is
/// dL/d(ray color); parameter gradients are added into `param_grad` (same
/// layout as VoxelField::params(), may be empty).
///
/// With w_k = T_k a_k and S_k = sum_{j>k} w_j c_j + T_end * background,
///   dC/dc_k     = w_k
///   dC/dsigma_k = step * (T_{k+1} c_k - S_k)
/// Sample positions x_k = o + t_k d give dC/do and dC/dd through the field's
/// spatial gradient.
inline RayGrad backward_ray(const VoxelField &field, const RayTape &tape, const Rgb &adjoint,
                            std::span<double> param_grad) {
    if (tape.field_version != field.version())
        throw StaleTapeError(concat("backward_ray: tape recorded at field version ", tape.field_version,
                                    ", field is at version ", field.version()));
    if (!param_grad.empty() && param_grad.size() != field.param_count())
        throw DomainError(concat("backward_ray: gradient buffer has ", param_grad.size(), " entries, expected ",
                                 field.param_count()));
    RayGrad out;
    if ((adjoint == 0.0).all())
        return out;
    Rgb suffix = tape.final_transmittance * tape.background;
    const auto &samples = tape.samples;
    for (size_t k = samples.size(); k-- > 0;) {
        const TapeSample &s = samples[k];
        const double t_next = (k + 1 < samples.size()) ? samples[k + 1].transmittance : tape.final_transmittance;
        const double weight = s.transmittance * s.alpha;
        const double d_sigma = tape.step * (adjoint * (t_next * s.color - suffix)).sum();
        const Rgb d_color = adjoint * weight;
        suffix += weight * s.color;
        const Vec3 d_x = field.query_grad(s.x, d_sigma, d_color, param_grad);
        out.d_origin += d_x;
        out.d_direction += s.t * d_x;
    }
    return out;
}

/// Reverse pass of render_pixel: the pixel color is the mean of its rays, so
/// each ray receives adjoint / n.
inline std::vector<RayGrad> backward_pixel(const VoxelField &field, const PixelTape &tape, const Rgb &adjoint,
                                           std::span<double> param_grad) {
    std::vector<RayGrad> grads(tape.ray_count);
    const Rgb per_ray = adjoint / tape.ray_count;
    for (int i = 0; i < tape.ray_count; ++i)
        grads[i] = backward_ray(field, tape.rays[i], per_ray, param_grad);
    return grads;
}

} // namespace lensfield
