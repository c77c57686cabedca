#include "gendx/mlp_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gendx/gaussian.hpp"
#include "gendx/sampler.hpp"

namespace gendx::baselines {

namespace {

double softplus(double t) {
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

thread_local FeedForward::Cache tls_cache;

double frame_logit(const MlpClassifier& clf, std::span<const double> x,
                   std::span<const double> mask, FeedForward::Cache* cache) {
    const RunMode mode = mask.empty() ? RunMode::eval : RunMode::train;
    clf.net.forward(x, {}, mask, mode, cache ? cache : &tls_cache);
    return (cache ? cache : &tls_cache)->layers.back().output[0];
}

}  // namespace

void MlpHyper::validate() const {
    if (n_x == 0) throw std::invalid_argument("MlpHyper: n_x must be positive");
    if (n_h == 0) throw std::invalid_argument("MlpHyper: n_h must be positive");
    if (hidden_layers == 0) throw std::invalid_argument("MlpHyper: hidden_layers must be >= 1");
    if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
        throw std::invalid_argument("MlpHyper: drop_prob must be in [0, 1)");
    }
    adam.validate();
    if (max_iters == 0) throw std::invalid_argument("MlpHyper: max_iters must be >= 1");
    if (eval_every == 0) throw std::invalid_argument("MlpHyper: eval_every must be >= 1");
    if (batch_frames < 2 || batch_frames % 2 != 0) {
        throw std::invalid_argument("MlpHyper: batch_frames must be even and >= 2");
    }
    if (plateau_iters == 0) throw std::invalid_argument("MlpHyper: plateau_iters must be >= 1");
    if (!(weight_init_std >= 0.0)) {
        throw std::invalid_argument("MlpHyper: weight_init_std must be >= 0");
    }
}

MlpClassifier MlpClassifier::init(const MlpHyper& hyper, RngStream& rng) {
    hyper.validate();
    std::vector<LayerSpec> specs;
    for (std::size_t l = 0; l < hyper.hidden_layers; ++l) {
        LayerSpec spec;
        spec.in_dim = l == 0 ? hyper.n_x : hyper.n_h;
        spec.out_dim = hyper.n_h;
        spec.layer_norm = true;
        spec.activation = Activation::relu;
        specs.push_back(spec);
    }
    specs.push_back({hyper.n_h, 1, 0, false, Activation::identity});
    MlpClassifier clf;
    clf.hyper = hyper;
    clf.net = FeedForward::init(std::move(specs), hyper.weight_init_std, rng);
    return clf;
}

double MlpClassifier::predict_patient_prob(std::span<const double> x) const {
    const double logit = frame_logit(*this, x, {}, nullptr);
    return 1.0 / (1.0 + std::exp(-logit));
}

double mlp_frame_loss_grad(const MlpClassifier& clf, std::span<const double> x, ClassLabel y,
                           std::span<const double> dropout_mask, std::span<double> grads) {
    FeedForward::Cache& cache = tls_cache;
    const double logit = frame_logit(clf, x, dropout_mask, &cache);
    const double target = y.is_patient() ? 1.0 : 0.0;
    // Fused logistic + cross-entropy: loss = softplus(logit) - target * logit,
    // d loss / d logit = q - target.
    const double loss = softplus(logit) - target * logit;
    const double q = 1.0 / (1.0 + std::exp(-logit));
    const std::array<double, 1> dout{q - target};
    clf.net.backward(cache, dout, grads, nullptr);
    return loss;
}

namespace {

struct EvalResult {
    double cross_entropy = 0.0;
    double train_bacc = 0.0;
};

EvalResult evaluate_training_set(const MlpClassifier& clf, const Dataset& dataset) {
    EvalResult r;
    std::array<std::size_t, 2> total{0, 0}, correct{0, 0};
    std::size_t frames_seen = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Matrix& frames = dataset.frames_of(i);
        const ClassLabel truth = *dataset.subject(i).label;
        const double target = truth.is_patient() ? 1.0 : 0.0;
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t t = 0; t < frames.rows(); ++t) {
            const double logit = frame_logit(clf, frames.row(t), {}, nullptr);
            r.cross_entropy += softplus(logit) - target * logit;
            const double q = std::clamp(1.0 / (1.0 + std::exp(-logit)), 1e-12, 1.0 - 1e-12);
            s1 += std::log(q);
            s0 += std::log1p(-q);
        }
        frames_seen += frames.rows();
        const ClassLabel pred = s1 > s0 ? ClassLabel::patient() : ClassLabel::control();
        const auto cls = static_cast<std::size_t>(truth.value());
        ++total[cls];
        if (pred == truth) ++correct[cls];
    }
    r.cross_entropy /= static_cast<double>(frames_seen);
    r.train_bacc = 0.5 * (static_cast<double>(correct[0]) / static_cast<double>(total[0]) +
                          static_cast<double>(correct[1]) / static_cast<double>(total[1]));
    return r;
}

}  // namespace

std::pair<MlpClassifier, MlpTrainLog> mlp_train(const Dataset& dataset, const MlpHyper& hyper,
                                                RngStream& rng) {
    hyper.validate();
    if (!dataset.all_labeled()) {
        throw std::invalid_argument("mlp_train: all subjects must be labeled");
    }
    if (!dataset.has_both_classes()) {
        throw std::invalid_argument("mlp_train: dataset must contain both classes");
    }
    if (dataset.n_x() != hyper.n_x) {
        throw std::invalid_argument("mlp_train: dataset has " + std::to_string(dataset.n_x()) +
                                    " regions but hyper.n_x is " + std::to_string(hyper.n_x));
    }

    MlpClassifier clf = MlpClassifier::init(hyper, rng);
    BalancedSampler sampler(dataset, RngStream(rng.next_u64()));

    const std::size_t np = clf.net.param_count();
    Vector params(np);
    clf.net.get_params(params);
    AdamState opt(np, hyper.adam);
    Vector grads(np);
    Vector mask;

    MlpTrainLog log;
    Vector best_params;
    double best_bacc = -1.0;
    double best_ce = 0.0;
    double best_smoothed = std::numeric_limits<double>::infinity();
    std::size_t last_improve = 0;
    Vector window;

    bool stopped = false;
    std::size_t iter = 0;
    while (iter < hyper.max_iters && !stopped) {
        ++iter;
        const auto batch = sampler.draw_batch(hyper.batch_frames);
        std::fill(grads.begin(), grads.end(), 0.0);
        double mean_loss = 0.0;
        for (const BalancedSampler::Draw& draw : batch) {
            const auto frame = dataset.frames_of(draw.subject_index).row(draw.frame_index);
            std::span<const double> mask_span;
            if (hyper.drop_prob > 0.0) {
                mask = dropout_mask(hyper.n_x, hyper.drop_prob, rng);
                mask_span = mask;
            }
            mean_loss += mlp_frame_loss_grad(clf, frame, draw.label, mask_span, grads);
        }
        const double scale = 1.0 / static_cast<double>(batch.size());
        mean_loss *= scale;
        for (double& g : grads) g *= scale;
        if (!std::isfinite(mean_loss)) {
            throw std::runtime_error("mlp_train: non-finite loss at iteration " +
                                     std::to_string(iter));
        }
        adam_step(params, grads, opt);
        clf.net.set_params(params);

        if (iter % hyper.eval_every == 0 || iter == hyper.max_iters) {
            const EvalResult eval = evaluate_training_set(clf, dataset);
            log.checkpoints.push_back({iter, eval.cross_entropy, eval.train_bacc});
            if (eval.train_bacc > best_bacc) {
                best_bacc = eval.train_bacc;
                best_ce = eval.cross_entropy;
                log.best_iteration = iter;
                best_params = params;
            }
            window.push_back(eval.cross_entropy);
            if (window.size() > 3) window.erase(window.begin());
            double smoothed = 0.0;
            for (double v : window) smoothed += v;
            smoothed /= static_cast<double>(window.size());
            if (smoothed < best_smoothed) {
                best_smoothed = smoothed;
                last_improve = iter;
            } else if (iter - last_improve >= hyper.plateau_iters) {
                stopped = true;
            }
        }
    }

    log.iterations_run = iter;
    log.plateau_stopped = stopped;
    log.best_train_bacc = best_bacc;
    log.final_cross_entropy = best_ce;
    clf.net.set_params(best_params);
    return {std::move(clf), std::move(log)};
}

std::array<double, 2> mlp_scores(const MlpClassifier& clf, const Matrix& frames) {
    if (frames.rows() == 0) throw std::invalid_argument("mlp_scores: empty recording");
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t t = 0; t < frames.rows(); ++t) {
        const double q = std::clamp(clf.predict_patient_prob(frames.row(t)), 1e-12, 1.0 - 1e-12);
        s1 += std::log(q);
        s0 += std::log1p(-q);
    }
    return {s0, s1};
}

ClassLabel mlp_diagnose(const MlpClassifier& clf, const Matrix& frames) {
    const auto scores = mlp_scores(clf, frames);
    return scores[1] > scores[0] ? ClassLabel::patient() : ClassLabel::control();
}

}  // namespace gendx::baselines
