// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"

#include <cmath>

namespace lensfield {

/// Piecewise-constant learning rate with two multiplicative reductions.
struct LrSchedule {
    double base = 1e-2;
    int steps = 1;
    double factor = 0.33;
    double first = 0.6;  // fraction of steps
    double second = 0.8; // fraction of steps

    void validate() const {
        if (steps < 1)
            throw ConfigError(concat("LrSchedule: steps must be > 0, got ", steps));
        if (!(base >= 0.0))
            throw ConfigError(concat("LrSchedule: learning rate must be >= 0, got ", base));
        if (!(factor > 0.0 && factor <= 1.0))
            throw ConfigError(concat("LrSchedule: decay factor must be in (0, 1], got ", factor));
        if (!(first >= 0.0 && first <= second && second <= 1.0))
            throw ConfigError(concat("LrSchedule: boundaries must satisfy 0 <= ", first, " <= ", second, " <= 1"));
    }

    int boundary(double fraction) const { return static_cast<int>(std::floor(fraction * steps)); }
};

inline double lr_at(int step, const LrSchedule &s) {
    if (step < 0 || step >= s.steps)
        throw DomainError(concat("lr_at: step ", step, " outside [0, ", s.steps, ")"));
    double lr = s.base;
    if (step >= s.boundary(s.first))
        lr *= s.factor;
    if (step >= s.boundary(s.second))
        lr *= s.factor;
    return lr;
}

} // namespace lensfield
