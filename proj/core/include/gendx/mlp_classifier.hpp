#pragma once

#include <array>
#include <utility>

#include "gendx/adam.hpp"
#include "gendx/dataset.hpp"
#include "gendx/label.hpp"
#include "gendx/network.hpp"
#include "gendx/rng.hpp"

namespace gendx::baselines {

/// Hyperparameters of the frame-wise discriminative baseline; training
/// conditions mirror the generative model's (balanced batches, Adam,
/// checkpoint cadence, best-BACC snapshot).
struct MlpHyper {
    std::size_t n_x = 116;
    std::size_t n_h = 100;
    std::size_t hidden_layers = 2;
    double drop_prob = 0.0;  // input dropout
    AdamConfig adam{};
    std::size_t max_iters = 20000;
    std::size_t eval_every = 100;
    std::size_t batch_frames = 128;
    std::size_t plateau_iters = 2000;
    double weight_init_std = 0.02;

    void validate() const;
};

/// Frame classifier: layer-normalized ReLU stack ending in a single logit.
/// The logistic is applied at prediction time; training differentiates the
/// fused logistic-cross-entropy for stability.
struct MlpClassifier {
    FeedForward net;
    MlpHyper hyper;

    static MlpClassifier init(const MlpHyper& hyper, RngStream& rng);

    /// q(y = patient | frame), in (0, 1).
    double predict_patient_prob(std::span<const double> x) const;
};

struct MlpTrainLog {
    struct Checkpoint {
        std::size_t iteration;
        double cross_entropy;  // mean over the training frames
        double train_bacc;
    };
    std::vector<Checkpoint> checkpoints;
    std::size_t iterations_run = 0;
    std::size_t best_iteration = 0;
    double best_train_bacc = 0.0;
    double final_cross_entropy = 0.0;
    bool plateau_stopped = false;
};

/// Per-frame cross-entropy loss and its gradient through the logit.
double mlp_frame_loss_grad(const MlpClassifier& clf, std::span<const double> x, ClassLabel y,
                           std::span<const double> dropout_mask, std::span<double> grads);

std::pair<MlpClassifier, MlpTrainLog> mlp_train(const Dataset& dataset, const MlpHyper& hyper,
                                                RngStream& rng);

/// Frame-ensemble scores (sum_t ln q(y=0|x_t), sum_t ln q(y=1|x_t)); the
/// per-frame probabilities are clamped to [1e-12, 1 - 1e-12] first.
std::array<double, 2> mlp_scores(const MlpClassifier& clf, const Matrix& frames);

/// argmax of the summed log-probabilities; exact ties resolve to control.
ClassLabel mlp_diagnose(const MlpClassifier& clf, const Matrix& frames);

}  // namespace gendx::baselines
