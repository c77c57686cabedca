#include "gendx/dgm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gendx/sampler.hpp"

namespace gendx::dgm {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

// Reusable forward/backward buffers; one set per thread so parallel
// cross-validation cells do not contend.
struct Scratch {
    FeedForward::Cache enc_cache, dec_cache;
    Vector z, var_z, var_x;
    std::vector<bool> clamped;
    Vector enc_out_grad, dec_out_grad, d_z;
};

thread_local Scratch tls;

std::vector<std::span<const double>> encoder_aux(const DgmModel& model,
                                                 const std::array<double, 2>& one_hot) {
    std::vector<std::span<const double>> aux(model.encoder.layers().size());
    aux[model.hyper.hidden_layers - 1] = one_hot;
    return aux;
}

std::vector<std::span<const double>> decoder_aux(const DgmModel& model,
                                                 const std::array<double, 2>& one_hot) {
    std::vector<std::span<const double>> aux(model.decoder.layers().size());
    aux[0] = one_hot;
    return aux;
}

// Shared forward (and optional backward) pass for the per-frame loss.
double run_frame(const DgmModel& model, std::span<const double> x, ClassLabel y,
                 std::span<const double> dropout_mask, std::span<const double> eps, bool with_grad,
                 std::span<double> encoder_grads, std::span<double> decoder_grads) {
    const DgmHyper& h = model.hyper;
    if (x.size() != h.n_x) {
        throw std::invalid_argument("frame dim " + std::to_string(x.size()) + " != n_x " +
                                    std::to_string(h.n_x));
    }
    if (!eps.empty() && eps.size() != h.n_z) {
        throw std::invalid_argument("eps dim must be n_z");
    }

    const std::array<double, 2> one_hot = y.one_hot();
    Scratch& s = tls;

    const Vector& enc_out =
        [&]() -> const Vector& {
        const auto aux = encoder_aux(model, one_hot);
        model.encoder.forward(x, aux, dropout_mask,
                              dropout_mask.empty() ? RunMode::eval : RunMode::train, &s.enc_cache);
        return s.enc_cache.layers.back().output;
    }();

    const std::size_t n_z = h.n_z;
    s.z.resize(n_z);
    s.var_z.resize(n_z);
    double kl = 0.0;
    for (std::size_t j = 0; j < n_z; ++j) {
        const double mu = enc_out[j];
        const double a = enc_out[n_z + j];  // log variance
        const double var = std::exp(a);
        s.var_z[j] = var;
        s.z[j] = mu + (eps.empty() ? 0.0 : std::sqrt(var) * eps[j]);
        kl += mu * mu + var - a - 1.0;
    }
    kl *= 0.5;

    const Vector& dec_out =
        [&]() -> const Vector& {
        const auto aux = decoder_aux(model, one_hot);
        model.decoder.forward(s.z, aux, {}, RunMode::eval, &s.dec_cache);
        return s.dec_cache.layers.back().output;
    }();

    const std::size_t n_x = h.n_x;
    s.var_x.resize(n_x);
    s.clamped.resize(n_x);
    double log_p = 0.0;
    for (std::size_t k = 0; k < n_x; ++k) {
        const double var = std::exp(dec_out[n_x + k]);
        const bool clamp = var < h.variance_floor;
        s.var_x[k] = clamp ? h.variance_floor : var;
        s.clamped[k] = clamp;
        log_p += gaussian_log_term(x[k], dec_out[k], s.var_x[k]);
    }
    const double loss = kl - log_p;

    if (!with_grad) return loss;

    if (encoder_grads.size() != model.encoder.param_count() ||
        decoder_grads.size() != model.decoder.param_count()) {
        throw std::invalid_argument("gradient span sizes do not match parameter counts");
    }

    s.dec_out_grad.resize(2 * n_x);
    for (std::size_t k = 0; k < n_x; ++k) {
        const double diff = x[k] - dec_out[k];
        s.dec_out_grad[k] = -diff / s.var_x[k];
        s.dec_out_grad[n_x + k] = s.clamped[k] ? 0.0 : 0.5 - diff * diff / (2.0 * s.var_x[k]);
    }
    model.decoder.backward(s.dec_cache, s.dec_out_grad, decoder_grads, &s.d_z);

    s.enc_out_grad.resize(2 * n_z);
    for (std::size_t j = 0; j < n_z; ++j) {
        const double mu = enc_out[j];
        const double var = s.var_z[j];
        s.enc_out_grad[j] = mu + s.d_z[j];
        double da = 0.5 * (var - 1.0);
        if (!eps.empty()) da += s.d_z[j] * eps[j] * 0.5 * std::sqrt(var);
        s.enc_out_grad[n_z + j] = da;
    }
    model.encoder.backward(s.enc_cache, s.enc_out_grad, encoder_grads, nullptr);
    return loss;
}

}  // namespace

void DgmHyper::validate() const {
    if (n_x == 0) throw std::invalid_argument("DgmHyper: n_x must be positive");
    if (n_z == 0) throw std::invalid_argument("DgmHyper: n_z must be positive");
    if (n_h <= n_z) {
        throw std::invalid_argument("DgmHyper: n_h (" + std::to_string(n_h) +
                                    ") must exceed n_z (" + std::to_string(n_z) + ")");
    }
    if (hidden_layers == 0) throw std::invalid_argument("DgmHyper: hidden_layers must be >= 1");
    if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
        throw std::invalid_argument("DgmHyper: drop_prob must be in [0, 1)");
    }
    adam.validate();
    if (max_iters == 0) throw std::invalid_argument("DgmHyper: max_iters must be >= 1");
    if (eval_every == 0) throw std::invalid_argument("DgmHyper: eval_every must be >= 1");
    if (batch_frames < 2 || batch_frames % 2 != 0) {
        throw std::invalid_argument("DgmHyper: batch_frames must be even and >= 2");
    }
    if (plateau_iters == 0) throw std::invalid_argument("DgmHyper: plateau_iters must be >= 1");
    if (!(prior_patient >= 0.0 && prior_patient <= 1.0)) {
        throw std::invalid_argument("DgmHyper: prior_patient must be in [0, 1]");
    }
    if (!(weight_init_std >= 0.0)) {
        throw std::invalid_argument("DgmHyper: weight_init_std must be >= 0");
    }
    if (!(variance_floor > 0.0)) {
        throw std::invalid_argument("DgmHyper: variance_floor must be positive");
    }
}

DgmModel DgmModel::init(const DgmHyper& hyper, RngStream& rng) {
    hyper.validate();
    std::vector<LayerSpec> enc;
    for (std::size_t l = 0; l < hyper.hidden_layers; ++l) {
        LayerSpec spec;
        spec.in_dim = l == 0 ? hyper.n_x : hyper.n_h;
        spec.out_dim = hyper.n_h;
        spec.aux_dim = l + 1 == hyper.hidden_layers ? 2 : 0;
        spec.layer_norm = true;
        spec.activation = Activation::relu;
        enc.push_back(spec);
    }
    enc.push_back({hyper.n_h, 2 * hyper.n_z, 0, false, Activation::identity});

    std::vector<LayerSpec> dec;
    for (std::size_t l = 0; l < hyper.hidden_layers; ++l) {
        LayerSpec spec;
        spec.in_dim = l == 0 ? hyper.n_z : hyper.n_h;
        spec.out_dim = hyper.n_h;
        spec.aux_dim = l == 0 ? 2 : 0;
        spec.layer_norm = true;
        spec.activation = Activation::relu;
        dec.push_back(spec);
    }
    dec.push_back({hyper.n_h, 2 * hyper.n_x, 0, false, Activation::identity});

    DgmModel model;
    model.hyper = hyper;
    model.encoder = FeedForward::init(std::move(enc), hyper.weight_init_std, rng);
    model.decoder = FeedForward::init(std::move(dec), hyper.weight_init_std, rng);
    return model;
}

GaussianPair encode(const DgmModel& model, std::span<const double> x, ClassLabel y,
                    std::span<const double> dropout_mask) {
    const std::array<double, 2> one_hot = y.one_hot();
    const auto aux = encoder_aux(model, one_hot);
    const Vector out = model.encoder.forward(
        x, aux, dropout_mask, dropout_mask.empty() ? RunMode::eval : RunMode::train, nullptr);
    const std::size_t n_z = model.hyper.n_z;
    GaussianPair g;
    g.mean.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n_z));
    g.variance.resize(n_z);
    for (std::size_t j = 0; j < n_z; ++j) g.variance[j] = std::exp(out[n_z + j]);
    return g;
}

GaussianPair decode(const DgmModel& model, std::span<const double> z, ClassLabel y) {
    const std::array<double, 2> one_hot = y.one_hot();
    const auto aux = decoder_aux(model, one_hot);
    const Vector out = model.decoder.forward(z, aux, {}, RunMode::eval, nullptr);
    const std::size_t n_x = model.hyper.n_x;
    GaussianPair g;
    g.mean.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n_x));
    g.variance.resize(n_x);
    for (std::size_t k = 0; k < n_x; ++k) {
        g.variance[k] = std::max(std::exp(out[n_x + k]), model.hyper.variance_floor);
    }
    return g;
}

double frame_loss(const DgmModel& model, std::span<const double> x, ClassLabel y,
                  std::span<const double> dropout_mask, std::span<const double> eps) {
    return run_frame(model, x, y, dropout_mask, eps, false, {}, {});
}

double frame_loss_grad(const DgmModel& model, std::span<const double> x, ClassLabel y,
                       std::span<const double> dropout_mask, std::span<const double> eps,
                       std::span<double> encoder_grads, std::span<double> decoder_grads) {
    return run_frame(model, x, y, dropout_mask, eps, true, encoder_grads, decoder_grads);
}

double frame_elbo(const DgmModel& model, std::span<const double> x, ClassLabel y, ZMode mode,
                  RngStream* rng) {
    if (mode == ZMode::map) {
        return -frame_loss(model, x, y, {}, {});
    }
    if (!rng) throw std::invalid_argument("frame_elbo: sampling mode needs an RngStream");
    Vector eps(model.hyper.n_z);
    for (double& e : eps) e = rng->normal();
    return -frame_loss(model, x, y, {}, eps);
}

double subject_elbo(const DgmModel& model, const Matrix& frames, ClassLabel y) {
    if (frames.rows() == 0) throw std::invalid_argument("subject_elbo: empty recording");
    double sum = 0.0;
    for (std::size_t t = 0; t < frames.rows(); ++t) {
        sum += -frame_loss(model, frames.row(t), y, {}, {});
    }
    return sum;
}

double dataset_elbo(const DgmModel& model, const Dataset& dataset) {
    if (!dataset.all_labeled()) {
        throw std::invalid_argument("dataset_elbo: all subjects must be labeled");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        sum += subject_elbo(model, dataset.frames_of(i), *dataset.subject(i).label);
    }
    return sum;
}

std::array<double, 2> class_posterior(double score_control, double score_patient,
                                      double prior_patient) {
    if (!(prior_patient >= 0.0 && prior_patient <= 1.0)) {
        throw std::invalid_argument("class_posterior: prior_patient must be in [0, 1]");
    }
    const double a0 = std::log(1.0 - prior_patient) + score_control;
    const double a1 = std::log(prior_patient) + score_patient;
    const double m = std::max(a0, a1);
    const double e0 = std::exp(a0 - m);
    const double e1 = std::exp(a1 - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

ClassLabel decide_label(double score_control, double score_patient, double prior_patient) {
    if (!(prior_patient >= 0.0 && prior_patient <= 1.0)) {
        throw std::invalid_argument("decide_label: prior_patient must be in [0, 1]");
    }
    const double a0 = std::log(1.0 - prior_patient) + score_control;
    const double a1 = std::log(prior_patient) + score_patient;
    return a1 > a0 ? ClassLabel::patient() : ClassLabel::control();
}

std::array<double, 2> posterior(const DgmModel& model, const Matrix& frames,
                                double prior_patient) {
    const double s0 = subject_elbo(model, frames, ClassLabel::control());
    const double s1 = subject_elbo(model, frames, ClassLabel::patient());
    return class_posterior(s0, s1, prior_patient);
}

ClassLabel diagnose(const DgmModel& model, const Matrix& frames, double prior_patient) {
    const double s0 = subject_elbo(model, frames, ClassLabel::control());
    const double s1 = subject_elbo(model, frames, ClassLabel::patient());
    return decide_label(s0, s1, prior_patient);
}

namespace {

struct EvalResult {
    double dataset_elbo = 0.0;
    double train_bacc = 0.0;
};

// Scores every subject under both labels once; feeds both the progress
// scalar and the training-set balanced accuracy.
EvalResult evaluate_training_set(const DgmModel& model, const Dataset& dataset) {
    EvalResult r;
    std::array<std::size_t, 2> total{0, 0}, correct{0, 0};
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Matrix& frames = dataset.frames_of(i);
        const double s0 = subject_elbo(model, frames, ClassLabel::control());
        const double s1 = subject_elbo(model, frames, ClassLabel::patient());
        const ClassLabel truth = *dataset.subject(i).label;
        r.dataset_elbo += truth.is_patient() ? s1 : s0;
        const ClassLabel pred = decide_label(s0, s1, model.hyper.prior_patient);
        const auto cls = static_cast<std::size_t>(truth.value());
        ++total[cls];
        if (pred == truth) ++correct[cls];
    }
    r.train_bacc = 0.5 * (static_cast<double>(correct[0]) / static_cast<double>(total[0]) +
                          static_cast<double>(correct[1]) / static_cast<double>(total[1]));
    return r;
}

}  // namespace

std::pair<DgmModel, TrainLog> train(const Dataset& dataset, const DgmHyper& hyper,
                                    RngStream& rng) {
    hyper.validate();
    if (!dataset.all_labeled()) throw std::invalid_argument("train: all subjects must be labeled");
    if (!dataset.has_both_classes()) {
        throw std::invalid_argument("train: dataset must contain both classes");
    }
    if (dataset.n_x() != hyper.n_x) {
        throw std::invalid_argument("train: dataset has " + std::to_string(dataset.n_x()) +
                                    " regions but hyper.n_x is " + std::to_string(hyper.n_x));
    }

    DgmModel model = DgmModel::init(hyper, rng);
    BalancedSampler sampler(dataset, RngStream(rng.next_u64()));

    const std::size_t ne = model.encoder.param_count();
    const std::size_t nd = model.decoder.param_count();
    Vector params(ne + nd);
    model.encoder.get_params(std::span(params).first(ne));
    model.decoder.get_params(std::span(params).subspan(ne));
    AdamState opt(ne + nd, hyper.adam);

    Vector grads(ne + nd);
    Vector eps(hyper.n_z);
    Vector mask;
    TrainLog log;
    Vector best_params;
    double best_bacc = -1.0;
    double best_elbo = 0.0;
    double best_smoothed = -std::numeric_limits<double>::infinity();
    std::size_t last_improve = 0;
    Vector window;  // last few dataset ELBOs for plateau smoothing

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
            for (double& e : eps) e = rng.normal();
            mean_loss += frame_loss_grad(model, frame, draw.label, mask_span, eps,
                                         std::span(grads).first(ne),
                                         std::span(grads).subspan(ne));
        }
        const double scale = 1.0 / static_cast<double>(batch.size());
        mean_loss *= scale;
        for (double& g : grads) g *= scale;
        if (!std::isfinite(mean_loss)) {
            throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(iter));
        }
        adam_step(params, grads, opt);
        model.encoder.set_params(std::span<const double>(params).first(ne));
        model.decoder.set_params(std::span<const double>(params).subspan(ne));

        if (iter % hyper.eval_every == 0 || iter == hyper.max_iters) {
            const EvalResult eval = evaluate_training_set(model, dataset);
            log.checkpoints.push_back({iter, eval.dataset_elbo, eval.train_bacc});
            if (eval.train_bacc > best_bacc) {
                best_bacc = eval.train_bacc;
                best_elbo = eval.dataset_elbo;
                log.best_iteration = iter;
                best_params = params;
            }
            window.push_back(eval.dataset_elbo);
            if (window.size() > 3) window.erase(window.begin());
            double smoothed = 0.0;
            for (double v : window) smoothed += v;
            smoothed /= static_cast<double>(window.size());
            if (smoothed > best_smoothed) {
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
    log.final_dataset_elbo = best_elbo;
    model.encoder.set_params(std::span<const double>(best_params).first(ne));
    model.decoder.set_params(std::span<const double>(best_params).subspan(ne));
    return {std::move(model), std::move(log)};
}

double region_recon_error(const DgmModel& model, std::span<const double> x, ClassLabel y,
                          std::size_t region) {
    if (region >= model.hyper.n_x) {
        throw std::invalid_argument("region_recon_error: region out of range");
    }
    const GaussianPair qz = encode(model, x, y);
    const GaussianPair px = decode(model, qz.mean, y);
    return -gaussian_log_term(x[region], px.mean[region], px.variance[region]);
}

double contribution_frame(const DgmModel& model, std::span<const double> x, ClassLabel y_true,
                          std::size_t region) {
    return region_recon_error(model, x, y_true.flipped(), region) -
           region_recon_error(model, x, y_true, region);
}

namespace {

// Adds this frame's per-region (wrong - true) error differences into acc.
void frame_contributions(const DgmModel& model, std::span<const double> x, ClassLabel y_true,
                         Vector& acc) {
    const GaussianPair qt = encode(model, x, y_true);
    const GaussianPair pt = decode(model, qt.mean, y_true);
    const ClassLabel y_wrong = y_true.flipped();
    const GaussianPair qw = encode(model, x, y_wrong);
    const GaussianPair pw = decode(model, qw.mean, y_wrong);
    for (std::size_t k = 0; k < acc.size(); ++k) {
        acc[k] += -gaussian_log_term(x[k], pw.mean[k], pw.variance[k]) +
                  gaussian_log_term(x[k], pt.mean[k], pt.variance[k]);
    }
}

}  // namespace

Vector contribution_regions(const DgmModel& model, const Dataset& dataset) {
    if (!dataset.all_labeled()) {
        throw std::invalid_argument("contribution_regions: all subjects must be labeled");
    }
    if (!dataset.has_both_classes()) {
        throw std::invalid_argument("contribution_regions: dataset must contain both classes");
    }
    if (dataset.n_x() != model.hyper.n_x) {
        throw std::invalid_argument("contribution_regions: region count mismatch");
    }
    const std::size_t n_x = model.hyper.n_x;
    Vector class_mean(n_x, 0.0), result(n_x, 0.0);
    for (int cls = 0; cls < 2; ++cls) {
        std::fill(class_mean.begin(), class_mean.end(), 0.0);
        std::size_t class_subjects = 0;
        Vector subject_acc(n_x);
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (dataset.subject(i).label->value() != cls) continue;
            const Matrix& frames = dataset.frames_of(i);
            std::fill(subject_acc.begin(), subject_acc.end(), 0.0);
            for (std::size_t t = 0; t < frames.rows(); ++t) {
                frame_contributions(model, frames.row(t), ClassLabel::from_int(cls), subject_acc);
            }
            const double inv_frames = 1.0 / static_cast<double>(frames.rows());
            for (std::size_t k = 0; k < n_x; ++k) class_mean[k] += subject_acc[k] * inv_frames;
            ++class_subjects;
        }
        const double inv_subjects = 1.0 / static_cast<double>(class_subjects);
        for (std::size_t k = 0; k < n_x; ++k) result[k] += 0.5 * class_mean[k] * inv_subjects;
    }
    return result;
}

double contribution_region(const DgmModel& model, const Dataset& dataset, std::size_t region) {
    if (region >= model.hyper.n_x) {
        throw std::invalid_argument("contribution_region: region out of range");
    }
    return contribution_regions(model, dataset)[region];
}

}  // namespace gendx::dgm
