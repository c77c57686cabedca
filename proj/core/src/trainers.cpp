#include "gendx/trainers.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace gendx {

namespace {

std::size_t as_count(const std::string& key, double v) {
    if (!(v >= 0.0) || v != std::floor(v)) {
        throw std::invalid_argument("candidate key '" + key + "' must be a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

eval::DiagnosisResult make_result(double s0, double s1, double prior_patient) {
    eval::DiagnosisResult r;
    r.score_control = s0;
    r.score_patient = s1;
    const auto post = dgm::class_posterior(s0, s1, prior_patient);
    r.posterior_control = post[0];
    r.posterior_patient = post[1];
    r.predicted = dgm::decide_label(s0, s1, prior_patient);
    return r;
}

}  // namespace

eval::Trainer make_dgm_trainer(const dgm::DgmHyper& base) {
    return [base](const Dataset& train, const eval::HyperCandidate& candidate,
                  std::uint64_t seed) -> eval::Diagnoser {
        dgm::DgmHyper hyper = base;
        hyper.n_x = train.n_x();
        for (const auto& [key, value] : candidate.params) {
            if (key == "n_h") hyper.n_h = as_count(key, value);
            else if (key == "n_z") hyper.n_z = as_count(key, value);
            else if (key == "drop_prob") hyper.drop_prob = value;
            else if (key == "max_iters") hyper.max_iters = as_count(key, value);
            else if (key == "batch_frames") hyper.batch_frames = as_count(key, value);
            else if (key == "plateau_iters") hyper.plateau_iters = as_count(key, value);
            else if (key == "eval_every") hyper.eval_every = as_count(key, value);
            else throw std::invalid_argument("dgm trainer: unknown candidate key '" + key + "'");
        }
        RngStream rng(seed);
        auto model = std::make_shared<dgm::DgmModel>(dgm::train(train, hyper, rng).first);
        const double prior = hyper.prior_patient;
        return [model, prior](const Matrix& frames) {
            const double s0 = dgm::subject_elbo(*model, frames, ClassLabel::control());
            const double s1 = dgm::subject_elbo(*model, frames, ClassLabel::patient());
            return make_result(s0, s1, prior);
        };
    };
}

eval::Trainer make_gmm_trainer(const baselines::GmmFitOptions& base, double prior_patient) {
    return [base, prior_patient](const Dataset& train, const eval::HyperCandidate& candidate,
                                 std::uint64_t seed) -> eval::Diagnoser {
        baselines::GmmFitOptions options = base;
        for (const auto& [key, value] : candidate.params) {
            if (key == "components") options.components = as_count(key, value);
            else throw std::invalid_argument("gmm trainer: unknown candidate key '" + key + "'");
        }
        RngStream rng(seed);
        auto pair = std::make_shared<baselines::GmmPair>(baselines::gmm_fit_pair(train, options, rng));
        return [pair, prior_patient](const Matrix& frames) {
            const auto scores = baselines::gmm_scores(*pair, frames);
            return make_result(scores[0], scores[1], prior_patient);
        };
    };
}

eval::Trainer make_mlp_trainer(const baselines::MlpHyper& base) {
    return [base](const Dataset& train, const eval::HyperCandidate& candidate,
                  std::uint64_t seed) -> eval::Diagnoser {
        baselines::MlpHyper hyper = base;
        hyper.n_x = train.n_x();
        for (const auto& [key, value] : candidate.params) {
            if (key == "n_h") hyper.n_h = as_count(key, value);
            else if (key == "drop_prob") hyper.drop_prob = value;
            else if (key == "max_iters") hyper.max_iters = as_count(key, value);
            else if (key == "batch_frames") hyper.batch_frames = as_count(key, value);
            else if (key == "plateau_iters") hyper.plateau_iters = as_count(key, value);
            else if (key == "eval_every") hyper.eval_every = as_count(key, value);
            else throw std::invalid_argument("mlp trainer: unknown candidate key '" + key + "'");
        }
        RngStream rng(seed);
        auto clf = std::make_shared<baselines::MlpClassifier>(
            baselines::mlp_train(train, hyper, rng).first);
        return [clf](const Matrix& frames) {
            const auto scores = baselines::mlp_scores(*clf, frames);
            return make_result(scores[0], scores[1], 0.5);
        };
    };
}

}  // namespace gendx
