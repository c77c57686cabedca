#include "gendx/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace gendx {

void AdamConfig::validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("AdamConfig: alpha must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("AdamConfig: beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("AdamConfig: beta2 must be in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("AdamConfig: epsilon must be positive");
}

AdamState::AdamState(std::size_t params, AdamConfig cfg)
    : config(cfg), first_moment(params, 0.0), second_moment(params, 0.0) {
    config.validate();
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    const std::size_t n = state.first_moment.size();
    if (params.size() != n || grads.size() != n) {
        throw std::invalid_argument("adam_step: params/grads size does not match state");
    }
    check_finite(grads, "adam_step gradients");

    const AdamConfig& c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
        v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        params[i] -= c.alpha * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

}  // namespace gendx
