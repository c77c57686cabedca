#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

#include "gendx/adam.hpp"
#include "gendx/dataset.hpp"
#include "gendx/gaussian.hpp"
#include "gendx/network.hpp"
#include "gendx/rng.hpp"

namespace gendx::dgm {

/// Hyperparameters of the conditional deep generative model.
struct DgmHyper {
    std::size_t n_x = 116;        // observed regions
    std::size_t n_z = 5;          // latent dimension
    std::size_t n_h = 100;        // hidden width
    std::size_t hidden_layers = 2;
    double drop_prob = 0.0;       // encoder input dropout
    AdamConfig adam{};
    std::size_t max_iters = 20000;
    std::size_t eval_every = 100;   // checkpoint cadence, iterations
    std::size_t batch_frames = 128;
    std::size_t plateau_iters = 2000;  // stop after this long without data-ELBO improvement
    double prior_patient = 0.5;
    double weight_init_std = 0.02;
    double variance_floor = 1e-6;  // decoder output variance clamp

    void validate() const;
};

/// Encoder/decoder pair.  The encoder maps a frame (with input dropout during
/// training) through hidden_layers layer-normalized ReLU layers — the one-hot
/// label joins the last hidden layer's input — to [mu_z | log var_z].  The
/// decoder maps [z ; one-hot label] through the mirrored stack to
/// [mu_x | log var_x].  Variance heads live in log space; encode()/decode()
/// exponentiate, and decode() floors the variance at hyper.variance_floor.
struct DgmModel {
    FeedForward encoder;
    FeedForward decoder;
    DgmHyper hyper;

    static DgmModel init(const DgmHyper& hyper, RngStream& rng);

    std::size_t param_count() const { return encoder.param_count() + decoder.param_count(); }
};

/// Posterior q(z | x, y).  A non-empty dropout_mask (length n_x) is applied
/// to x, as during training; empty means the deterministic eval path.
GaussianPair encode(const DgmModel& model, std::span<const double> x, ClassLabel y,
                    std::span<const double> dropout_mask = {});

/// Observation model p(x | z, y).
GaussianPair decode(const DgmModel& model, std::span<const double> z, ClassLabel y);

/// Training loss for one frame: KL(q(z|x,y) || N(0,I)) - log p(x|z,y) at the
/// reparameterized z = mu_z + sqrt(var_z) * eps.  `eps` empty means eps = 0,
/// i.e. the posterior-mean (MAP) point used throughout evaluation.
double frame_loss(const DgmModel& model, std::span<const double> x, ClassLabel y,
                  std::span<const double> dropout_mask, std::span<const double> eps);

/// frame_loss plus analytic gradients, accumulated (+=) into the flat
/// encoder/decoder gradient spans.
double frame_loss_grad(const DgmModel& model, std::span<const double> x, ClassLabel y,
                       std::span<const double> dropout_mask, std::span<const double> eps,
                       std::span<double> encoder_grads, std::span<double> decoder_grads);

enum class ZMode { map, sample };

/// Single-frame evidence lower bound under label y.  `sample` draws one
/// reparameterized z from `rng`; `map` uses z = mu_z.
double frame_elbo(const DgmModel& model, std::span<const double> x, ClassLabel y,
                  ZMode mode = ZMode::map, RngStream* rng = nullptr);

/// Sum of MAP frame ELBOs over a subject's recording.
double subject_elbo(const DgmModel& model, const Matrix& frames, ClassLabel y);

/// Sum of subject ELBOs under each subject's own label; the training-progress
/// scalar.  Requires a fully labeled dataset.
double dataset_elbo(const DgmModel& model, const Dataset& dataset);

/// Two-class posterior from per-class log evidence scores and the patient
/// prior: p(y|x) proportional to p(y) exp(score_y), computed in log space.
/// prior_patient must lie in [0, 1].
std::array<double, 2> class_posterior(double score_control, double score_patient,
                                      double prior_patient);

/// argmax of the posterior; exact ties resolve to control.
ClassLabel decide_label(double score_control, double score_patient, double prior_patient);

std::array<double, 2> posterior(const DgmModel& model, const Matrix& frames, double prior_patient);
ClassLabel diagnose(const DgmModel& model, const Matrix& frames, double prior_patient);

struct TrainLog {
    struct Checkpoint {
        std::size_t iteration;
        double dataset_elbo;
        double train_bacc;
    };
    std::vector<Checkpoint> checkpoints;
    std::size_t iterations_run = 0;
    std::size_t best_iteration = 0;  // earliest checkpoint with the best training BACC
    double best_train_bacc = 0.0;
    double final_dataset_elbo = 0.0;  // at the returned (best) parameters
    bool plateau_stopped = false;
};

/// Trains a fresh model on a labeled two-class cohort with class-balanced
/// minibatches and Adam.  Every eval_every iterations the full training set
/// is scored under both labels once, yielding the dataset ELBO and the
/// training BACC; the parameters with the best BACC (earliest on ties) are
/// returned.  Training stops at max_iters or once the smoothed dataset ELBO
/// has not improved for plateau_iters iterations.
std::pair<DgmModel, TrainLog> train(const Dataset& dataset, const DgmHyper& hyper, RngStream& rng);

/// Region k's share of the frame reconstruction error under label y at the
/// MAP z: 1/2 ln(2 pi var_k) + (x_k - mu_k)^2 / (2 var_k).  Summing over k
/// and subtracting the KL recovers the MAP frame ELBO exactly.
double region_recon_error(const DgmModel& model, std::span<const double> x, ClassLabel y,
                          std::size_t region);

/// Error under the wrong label minus error under the true label; positive
/// when region k is reconstructed better by the true class's decoder.
double contribution_frame(const DgmModel& model, std::span<const double> x, ClassLabel y_true,
                          std::size_t region);

/// Cohort-level contribution weight W(k): frame contributions averaged per
/// subject, then per class, then across the two classes, so imbalanced
/// cohorts weight both classes equally.
double contribution_region(const DgmModel& model, const Dataset& dataset, std::size_t region);

/// W(k) for all regions in one pass over the data.
Vector contribution_regions(const DgmModel& model, const Dataset& dataset);

}  // namespace gendx::dgm
