// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/optics/camera.hpp"
#include "lensfield/render/image.hpp"

#include <vector>

namespace lensfield {

/// A calibrated view and its linear-radiance image.
struct View {
    Camera camera;
    Image image;
};

/// In-memory dataset: defocused training views, all-in-focus validation views
/// at held-out poses, and optional all-in-focus images at the training poses.
struct Dataset {
    std::vector<View> train;
    std::vector<View> val;
    std::vector<View> train_sharp;

    size_t train_pixel_count() const {
        size_t n = 0;
        for (const View &v : train)
            n += v.image.pixel_count();
        return n;
    }
};

} // namespace lensfield
