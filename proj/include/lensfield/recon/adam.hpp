// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace lensfield {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;

    bool operator==(const AdamHyper &) const = default;
};

/// Dense Adam over a flat parameter vector.
class Adam {
  public:
    Adam() = default;
    explicit Adam(size_t size, AdamHyper hyper = {}) : hyper_(hyper), m_(size, 0.0), v_(size, 0.0) {}

    size_t size() const { return m_.size(); }
    long steps_taken() const { return t_; }
    const std::vector<double> &first_moment() const { return m_; }
    const std::vector<double> &second_moment() const { return v_; }
    const AdamHyper &hyper() const { return hyper_; }

    /// One update; `lr_of(i)` gives the learning rate of entry i.
    template <typename T, typename LrFn>
    void step(std::span<T> params, std::span<const double> grad, LrFn &&lr_of) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw DomainError(concat("Adam::step: expected ", m_.size(), " entries, got ", params.size(),
                                     " parameters and ", grad.size(), " gradients"));
        ++t_;
        const double b1 = hyper_.beta1, b2 = hyper_.beta2;
        const double c1 = 1.0 / (1.0 - std::pow(b1, double(t_)));
        const double c2 = 1.0 / (1.0 - std::pow(b2, double(t_)));
        for (size_t i = 0; i < m_.size(); ++i) {
            const double g = grad[i];
            m_[i] = b1 * m_[i] + (1.0 - b1) * g;
            v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
            if (m_[i] == 0.0)
                continue;
            const double update = lr_of(i) * (m_[i] * c1) / (std::sqrt(v_[i] * c2) + hyper_.eps);
            params[i] = static_cast<T>(params[i] - update);
        }
    }

    bool operator==(const Adam &) const = default;

  private:
    AdamHyper hyper_;
    std::vector<double> m_;
    std::vector<double> v_;
    long t_ = 0;
};

} // namespace lensfield
