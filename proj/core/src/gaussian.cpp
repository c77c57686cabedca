#include "gendx/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gendx {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // ln(2 pi)

void require_valid(const GaussianPair& g) {
    if (g.mean.size() != g.variance.size()) {
        throw std::invalid_argument("GaussianPair: mean dim " + std::to_string(g.mean.size()) +
                                    " != variance dim " + std::to_string(g.variance.size()));
    }
    for (std::size_t i = 0; i < g.variance.size(); ++i) {
        if (!(g.variance[i] > 0.0)) {
            throw std::invalid_argument("GaussianPair: variance[" + std::to_string(i) +
                                        "] must be positive");
        }
    }
}

}  // namespace

double gaussian_log_term(double x, double mean, double variance) {
    const double d = x - mean;
    return -0.5 * kLogTwoPi - 0.5 * std::log(variance) - d * d / (2.0 * variance);
}

double gaussian_log_pdf_diag(std::span<const double> x, const GaussianPair& g) {
    require_valid(g);
    if (x.size() != g.dim()) {
        throw std::invalid_argument("gaussian_log_pdf_diag: x dim " + std::to_string(x.size()) +
                                    " != Gaussian dim " + std::to_string(g.dim()));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sum += gaussian_log_term(x[k], g.mean[k], g.variance[k]);
    }
    return sum;
}

double kl_diag_to_standard(const GaussianPair& g) {
    require_valid(g);
    double sum = 0.0;
    for (std::size_t k = 0; k < g.dim(); ++k) {
        sum += g.mean[k] * g.mean[k] + g.variance[k] - std::log(g.variance[k]) - 1.0;
    }
    return 0.5 * sum;
}

Vector reparam_sample(const GaussianPair& g, RngStream& rng) {
    // Zero variance is legal here (degenerate Gaussian: the draw is the
    // mean); the stream still advances one normal per dimension.
    if (g.mean.size() != g.variance.size()) {
        throw std::invalid_argument("reparam_sample: mean/variance dim mismatch");
    }
    Vector z(g.dim());
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (!(g.variance[k] >= 0.0)) {
            throw std::invalid_argument("reparam_sample: variance[" + std::to_string(k) +
                                        "] must be non-negative");
        }
        z[k] = g.mean[k] + std::sqrt(g.variance[k]) * rng.normal();
    }
    return z;
}

Vector dropout_mask(std::size_t dim, double drop_prob, RngStream& rng) {
    if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
        throw std::invalid_argument("dropout_mask: drop_prob must be in [0, 1)");
    }
    Vector mask(dim, 1.0);
    if (drop_prob == 0.0) {
        return mask;
    }
    const double keep = 1.0 / (1.0 - drop_prob);
    for (std::size_t k = 0; k < dim; ++k) {
        mask[k] = rng.uniform() < drop_prob ? 0.0 : keep;
    }
    return mask;
}

}  // namespace gendx
