// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"

#include <cmath>

namespace lensfield {

/// x^2 for |x| <= 1, |x| otherwise. Continuous in value, kinked at |x| = 1.
inline double smooth_l1(double x) {
    const double a = std::abs(x);
    return a <= 1.0 ? x * x : a;
}

inline double smooth_l1_grad(double x) {
    if (std::abs(x) <= 1.0)
        return 2.0 * x;
    return x > 0.0 ? 1.0 : -1.0;
}

/// Sum over channels.
inline double smooth_l1(const Rgb &r) { return smooth_l1(r[0]) + smooth_l1(r[1]) + smooth_l1(r[2]); }

inline Rgb smooth_l1_grad(const Rgb &r) { return Rgb(smooth_l1_grad(r[0]), smooth_l1_grad(r[1]), smooth_l1_grad(r[2])); }

} // namespace lensfield
