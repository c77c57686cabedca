#pragma once

#include <array>
#include <utility>
#include <vector>

#include "gendx/dataset.hpp"
#include "gendx/label.hpp"
#include "gendx/matrix.hpp"
#include "gendx/rng.hpp"

namespace gendx::baselines {

struct GmmFitOptions {
    std::size_t components = 5;
    std::size_t max_em_iters = 500;
    double rel_tol = 1e-6;      // stop on relative log-likelihood change
    double reg_scale = 1e-6;    // ridge: reg_scale * trace(sample cov)/dim on each covariance

    void validate() const;
};

/// Full-covariance Gaussian mixture.  Construction validates shapes and
/// weights and Cholesky-factorizes every covariance, so log_pdf() is cheap
/// and the object is immutable and thread-safe.
class GmmModel {
public:
    GmmModel(Vector weights, std::vector<Vector> means, std::vector<Matrix> covariances);

    std::size_t components() const { return weights_.size(); }
    std::size_t dim() const { return means_.front().size(); }
    const Vector& weights() const { return weights_; }
    const std::vector<Vector>& means() const { return means_; }
    const std::vector<Matrix>& covariances() const { return covariances_; }

    /// log sum_j w_j N(x; mu_j, Sigma_j), evaluated stably via the component
    /// Cholesky factors and log-sum-exp.
    double log_pdf(std::span<const double> x) const;

private:
    Vector weights_;
    std::vector<Vector> means_;
    std::vector<Matrix> covariances_;
    std::vector<Matrix> chol_;        // lower-triangular factors
    Vector log_norm_;                 // ln w_j - ln((2 pi)^{d/2} |L_j|)
};

struct GmmFitResult {
    GmmModel model;
    Vector log_likelihood_trace;  // total data log-likelihood per EM iteration
    bool converged = false;
};

/// Expectation-maximization fit.  Means seed by distance-weighted sampling
/// from the data, covariances start at the regularized pooled covariance,
/// weights uniform.  Components that collapse (vanishing responsibility or a
/// failed factorization) are reset to the pooled covariance around a random
/// data point.  The log-likelihood trace is non-decreasing up to the
/// regularizer.  Requires frames.rows() > components.
GmmFitResult gmm_fit(const Matrix& frames, const GmmFitOptions& options, RngStream& rng);

/// One mixture per class.
struct GmmPair {
    GmmModel control;
    GmmModel patient;
    GmmFitOptions options;
};

/// Per-class EM diagnostics from gmm_fit_pair.
struct GmmPairDiag {
    std::array<Vector, 2> log_likelihood_traces;  // control, patient
    std::array<bool, 2> converged{false, false};
};

/// Fits one mixture per class on the pooled frames of that class's subjects.
GmmPair gmm_fit_pair(const Dataset& dataset, const GmmFitOptions& options, RngStream& rng,
                     GmmPairDiag* diag = nullptr);

/// Per-class scores sum_t log p(x_t | y); the frame-independence diagnosis
/// evidence.
std::array<double, 2> gmm_scores(const GmmPair& pair, const Matrix& frames);

/// Bayes comparison of the class scores with the given patient prior; exact
/// ties resolve to control.
ClassLabel gmm_diagnose(const GmmPair& pair, const Matrix& frames, double prior_patient = 0.5);

}  // namespace gendx::baselines
