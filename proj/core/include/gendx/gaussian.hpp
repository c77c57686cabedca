#pragma once

#include <span>

#include "gendx/matrix.hpp"
#include "gendx/rng.hpp"

namespace gendx {

/// Diagonal-covariance Gaussian as (mean, variance) vectors.
struct GaussianPair {
    Vector mean;
    Vector variance;

    std::size_t dim() const { return mean.size(); }
};

/// One coordinate's contribution to the diagonal Gaussian log-density:
///   -1/2 ln(2 pi) - 1/2 ln(var) - (x - mean)^2 / (2 var).
/// The full log-pdf and the per-region error decomposition both sum exactly
/// these terms, so the two agree to the last bit.
double gaussian_log_term(double x, double mean, double variance);

/// Log-density of x under the diagonal Gaussian g.  Requires matching
/// dimensions and strictly positive variances.
double gaussian_log_pdf_diag(std::span<const double> x, const GaussianPair& g);

/// KL(N(mean, diag(var)) || N(0, I)) in closed form.
double kl_diag_to_standard(const GaussianPair& g);

/// Reparameterized draw mean + sqrt(var) * eps, one normal per dimension.
Vector reparam_sample(const GaussianPair& g, RngStream& rng);

/// Inverted-dropout mask: entries are 0 with probability drop_prob, else
/// 1 / (1 - drop_prob) so the masked input is unbiased.  drop_prob in [0, 1).
Vector dropout_mask(std::size_t dim, double drop_prob, RngStream& rng);

}  // namespace gendx
