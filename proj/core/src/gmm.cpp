#include "gendx/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "gendx/dgm.hpp"

namespace gendx::baselines {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

// In-place lower Cholesky; false when the matrix is not positive definite.
bool cholesky(const Matrix& a, Matrix& lower) {
    const std::size_t d = a.rows();
    lower = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
            if (i == j) {
                if (!(s > 0.0)) return false;
                lower(i, i) = std::sqrt(s);
            } else {
                lower(i, j) = s / lower(j, j);
            }
        }
    }
    return true;
}

// ln N(x; mu, L L^T) given the Cholesky factor.
double gaussian_log_density(std::span<const double> x, const Vector& mu, const Matrix& lower,
                            Vector& solve_buf) {
    const std::size_t d = mu.size();
    solve_buf.resize(d);
    double quad = 0.0;
    double log_det = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double s = x[i] - mu[i];
        for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * solve_buf[k];
        solve_buf[i] = s / lower(i, i);
        quad += solve_buf[i] * solve_buf[i];
        log_det += std::log(lower(i, i));
    }
    return -0.5 * static_cast<double>(d) * kLogTwoPi - log_det - 0.5 * quad;
}

}  // namespace

void GmmFitOptions::validate() const {
    if (components == 0) throw std::invalid_argument("GmmFitOptions: components must be >= 1");
    if (max_em_iters == 0) throw std::invalid_argument("GmmFitOptions: max_em_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw std::invalid_argument("GmmFitOptions: rel_tol must be positive");
    if (!(reg_scale > 0.0)) throw std::invalid_argument("GmmFitOptions: reg_scale must be positive");
}

GmmModel::GmmModel(Vector weights, std::vector<Vector> means, std::vector<Matrix> covariances)
    : weights_(std::move(weights)), means_(std::move(means)),
      covariances_(std::move(covariances)) {
    if (weights_.empty() || means_.size() != weights_.size() ||
        covariances_.size() != weights_.size()) {
        throw std::invalid_argument("GmmModel: weights/means/covariances size mismatch");
    }
    const std::size_t d = means_.front().size();
    if (d == 0) throw std::invalid_argument("GmmModel: zero dimension");
    double weight_sum = 0.0;
    for (std::size_t j = 0; j < weights_.size(); ++j) {
        if (!(weights_[j] > 0.0)) {
            throw std::invalid_argument("GmmModel: weight " + std::to_string(j) +
                                        " must be positive");
        }
        weight_sum += weights_[j];
        if (means_[j].size() != d) {
            throw std::invalid_argument("GmmModel: mean " + std::to_string(j) + " has wrong dim");
        }
        if (covariances_[j].rows() != d || covariances_[j].cols() != d) {
            throw std::invalid_argument("GmmModel: covariance " + std::to_string(j) +
                                        " has wrong shape");
        }
    }
    if (std::abs(weight_sum - 1.0) > 1e-12) {
        throw std::invalid_argument("GmmModel: weights must sum to 1");
    }
    chol_.resize(weights_.size());
    log_norm_.resize(weights_.size());
    for (std::size_t j = 0; j < weights_.size(); ++j) {
        if (!cholesky(covariances_[j], chol_[j])) {
            throw std::invalid_argument("GmmModel: covariance " + std::to_string(j) +
                                        " is not positive definite");
        }
        double log_det = 0.0;
        for (std::size_t i = 0; i < d; ++i) log_det += std::log(chol_[j](i, i));
        log_norm_[j] = std::log(weights_[j]) - 0.5 * static_cast<double>(d) * kLogTwoPi - log_det;
    }
}

double GmmModel::log_pdf(std::span<const double> x) const {
    const std::size_t d = dim();
    if (x.size() != d) {
        throw std::invalid_argument("GmmModel::log_pdf: x dim " + std::to_string(x.size()) +
                                    " != " + std::to_string(d));
    }
    Vector solve_buf;
    double max_term = -std::numeric_limits<double>::infinity();
    Vector terms(components());
    for (std::size_t j = 0; j < components(); ++j) {
        // log_norm_ already folds in ln w_j and the normalizer.
        double quad = 0.0;
        solve_buf.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            double s = x[i] - means_[j][i];
            for (std::size_t k = 0; k < i; ++k) s -= chol_[j](i, k) * solve_buf[k];
            solve_buf[i] = s / chol_[j](i, i);
            quad += solve_buf[i] * solve_buf[i];
        }
        terms[j] = log_norm_[j] - 0.5 * quad;
        max_term = std::max(max_term, terms[j]);
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - max_term);
    return max_term + std::log(sum);
}

namespace {

struct EmState {
    Vector weights;
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    std::vector<Matrix> chol;
};

Vector random_data_point(const Matrix& frames, RngStream& rng) {
    const std::size_t t =
        static_cast<std::size_t>(rng.uniform() * static_cast<double>(frames.rows()));
    const auto row = frames.row(t);
    return Vector(row.begin(), row.end());
}

// Replaces any component whose covariance fails to factorize.
void repair(EmState& st, const Matrix& reg_cov, const Matrix& frames, RngStream& rng) {
    const std::size_t k = st.weights.size();
    bool reweight = false;
    for (std::size_t j = 0; j < k; ++j) {
        if (!cholesky(st.covs[j], st.chol[j])) {
            st.means[j] = random_data_point(frames, rng);
            st.covs[j] = reg_cov;
            st.weights[j] = 1.0 / static_cast<double>(k);
            reweight = true;
            if (!cholesky(st.covs[j], st.chol[j])) {
                throw std::runtime_error("gmm_fit: regularized covariance not positive definite");
            }
        }
    }
    if (reweight) {
        double sum = 0.0;
        for (double w : st.weights) sum += w;
        for (double& w : st.weights) w /= sum;
    }
}

}  // namespace

GmmFitResult gmm_fit(const Matrix& frames, const GmmFitOptions& options, RngStream& rng) {
    options.validate();
    const std::size_t n = frames.rows();
    const std::size_t d = frames.cols();
    const std::size_t k = options.components;
    if (n <= k) {
        throw std::invalid_argument("gmm_fit: need more than " + std::to_string(k) +
                                    " frames, got " + std::to_string(n));
    }

    // Pooled statistics and the ridge derived from them.
    Vector pooled_mean(d, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t i = 0; i < d; ++i) pooled_mean[i] += frames(t, i);
    }
    for (double& m : pooled_mean) m /= static_cast<double>(n);
    Matrix pooled_cov(d, d);
    for (std::size_t t = 0; t < n; ++t) {
        const auto row = frames.row(t);
        for (std::size_t i = 0; i < d; ++i) {
            const double di = row[i] - pooled_mean[i];
            for (std::size_t j = 0; j <= i; ++j) {
                pooled_cov(i, j) += di * (row[j] - pooled_mean[j]);
            }
        }
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            pooled_cov(i, j) /= static_cast<double>(n);
            pooled_cov(j, i) = pooled_cov(i, j);
        }
        trace += pooled_cov(i, i);
    }
    if (!(trace > 0.0)) {
        throw std::invalid_argument("gmm_fit: data has zero variance");
    }
    const double reg = options.reg_scale * trace / static_cast<double>(d);
    Matrix reg_cov = pooled_cov;
    for (std::size_t i = 0; i < d; ++i) reg_cov(i, i) += reg;

    // Distance-weighted mean seeding, pooled covariances, uniform weights.
    EmState st;
    st.weights.assign(k, 1.0 / static_cast<double>(k));
    st.covs.assign(k, reg_cov);
    st.chol.resize(k);
    st.means.push_back(random_data_point(frames, rng));
    Vector dist2(n);
    while (st.means.size() < k) {
        double total = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            double best = std::numeric_limits<double>::infinity();
            const auto row = frames.row(t);
            for (const Vector& m : st.means) {
                double s = 0.0;
                for (std::size_t i = 0; i < d; ++i) s += (row[i] - m[i]) * (row[i] - m[i]);
                best = std::min(best, s);
            }
            dist2[t] = best;
            total += best;
        }
        if (total > 0.0) {
            double r = rng.uniform() * total;
            std::size_t pick = n - 1;
            for (std::size_t t = 0; t < n; ++t) {
                r -= dist2[t];
                if (r <= 0.0) {
                    pick = t;
                    break;
                }
            }
            const auto row = frames.row(pick);
            st.means.emplace_back(row.begin(), row.end());
        } else {
            st.means.push_back(random_data_point(frames, rng));
        }
    }

    Matrix resp(n, k);
    Vector solve_buf, terms(k);
    Vector trace_ll;
    bool converged = false;

    for (std::size_t em = 0; em < options.max_em_iters; ++em) {
        repair(st, reg_cov, frames, rng);

        // E-step and the total log-likelihood under the current parameters.
        double ll = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const auto row = frames.row(t);
            double max_term = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                terms[j] = std::log(st.weights[j]) +
                           gaussian_log_density(row, st.means[j], st.chol[j], solve_buf);
                max_term = std::max(max_term, terms[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += std::exp(terms[j] - max_term);
            const double lse = max_term + std::log(sum);
            ll += lse;
            for (std::size_t j = 0; j < k; ++j) resp(t, j) = std::exp(terms[j] - lse);
        }
        if (!std::isfinite(ll)) {
            throw std::runtime_error("gmm_fit: non-finite log-likelihood at EM iteration " +
                                     std::to_string(em));
        }
        if (!trace_ll.empty() &&
            std::abs(ll - trace_ll.back()) <= options.rel_tol * (std::abs(trace_ll.back()) + 1e-12)) {
            trace_ll.push_back(ll);
            converged = true;
            break;
        }
        trace_ll.push_back(ll);

        // M-step.
        for (std::size_t j = 0; j < k; ++j) {
            double nk = 0.0;
            for (std::size_t t = 0; t < n; ++t) nk += resp(t, j);
            if (nk < 1e-10 * static_cast<double>(n)) {
                // Collapsed component: restart it from the pooled covariance.
                st.means[j] = random_data_point(frames, rng);
                st.covs[j] = reg_cov;
                st.weights[j] = 1.0 / static_cast<double>(k);
                continue;
            }
            st.weights[j] = nk / static_cast<double>(n);
            Vector& mu = st.means[j];
            std::fill(mu.begin(), mu.end(), 0.0);
            for (std::size_t t = 0; t < n; ++t) {
                const double r = resp(t, j);
                const auto row = frames.row(t);
                for (std::size_t i = 0; i < d; ++i) mu[i] += r * row[i];
            }
            for (double& m : mu) m /= nk;
            Matrix& cov = st.covs[j];
            cov = Matrix(d, d);
            for (std::size_t t = 0; t < n; ++t) {
                const double r = resp(t, j);
                const auto row = frames.row(t);
                for (std::size_t i = 0; i < d; ++i) {
                    const double di = row[i] - mu[i];
                    for (std::size_t jj = 0; jj <= i; ++jj) {
                        cov(i, jj) += r * di * (row[jj] - mu[jj]);
                    }
                }
            }
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t jj = 0; jj <= i; ++jj) {
                    cov(i, jj) /= nk;
                    cov(jj, i) = cov(i, jj);
                }
                cov(i, i) += reg;
            }
        }
        double wsum = 0.0;
        for (double w : st.weights) wsum += w;
        for (double& w : st.weights) w /= wsum;
    }

    repair(st, reg_cov, frames, rng);
    GmmFitResult result{GmmModel(st.weights, st.means, st.covs), std::move(trace_ll), converged};
    return result;
}

GmmPair gmm_fit_pair(const Dataset& dataset, const GmmFitOptions& options, RngStream& rng,
                     GmmPairDiag* diag) {
    if (!dataset.all_labeled()) {
        throw std::invalid_argument("gmm_fit_pair: all subjects must be labeled");
    }
    if (!dataset.has_both_classes()) {
        throw std::invalid_argument("gmm_fit_pair: dataset must contain both classes");
    }
    std::array<std::unique_ptr<GmmModel>, 2> fitted;
    for (int cls = 0; cls < 2; ++cls) {
        Vector pool;
        std::size_t rows = 0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (dataset.subject(i).label->value() != cls) continue;
            const Matrix& frames = dataset.frames_of(i);
            pool.insert(pool.end(), frames.data().begin(), frames.data().end());
            rows += frames.rows();
        }
        Matrix stacked(rows, dataset.n_x(), std::move(pool));
        RngStream class_rng(rng.next_u64());
        GmmFitResult result = gmm_fit(stacked, options, class_rng);
        if (diag) {
            diag->log_likelihood_traces[static_cast<std::size_t>(cls)] =
                std::move(result.log_likelihood_trace);
            diag->converged[static_cast<std::size_t>(cls)] = result.converged;
        }
        fitted[cls] = std::make_unique<GmmModel>(std::move(result.model));
    }
    return GmmPair{std::move(*fitted[0]), std::move(*fitted[1]), options};
}

std::array<double, 2> gmm_scores(const GmmPair& pair, const Matrix& frames) {
    if (frames.rows() == 0) throw std::invalid_argument("gmm_scores: empty recording");
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t t = 0; t < frames.rows(); ++t) {
        s0 += pair.control.log_pdf(frames.row(t));
        s1 += pair.patient.log_pdf(frames.row(t));
    }
    return {s0, s1};
}

ClassLabel gmm_diagnose(const GmmPair& pair, const Matrix& frames, double prior_patient) {
    const auto scores = gmm_scores(pair, frames);
    return dgm::decide_label(scores[0], scores[1], prior_patient);
}

}  // namespace gendx::baselines
