#pragma once

#include <cstdint>
#include <span>

#include "gendx/matrix.hpp"

namespace gendx {

struct AdamConfig {
    double alpha = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

/// Moment estimates for one flat parameter vector.
struct AdamState {
    explicit AdamState(std::size_t params, AdamConfig config = {});

    AdamConfig config;
    std::uint64_t step = 0;
    Vector first_moment;
    Vector second_moment;
};

/// One bias-corrected Adam update, in place.  params/grads must match the
/// state's size; non-finite gradients are rejected.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace gendx
