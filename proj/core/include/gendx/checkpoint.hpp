#pragma once

#include <cstdint>
#include <string>

#include "gendx/dgm.hpp"
#include "gendx/gmm.hpp"
#include "gendx/mlp_classifier.hpp"

namespace gendx {

/// Training provenance stored in every checkpoint header.  `objective` is the
/// model's own progress scalar: dataset ELBO for the generative model, mean
/// cross-entropy for the discriminative one, total log-likelihood for the
/// mixtures.
struct TrainMeta {
    std::uint64_t seed = 0;
    std::uint64_t iterations_run = 0;
    std::uint64_t best_iteration = 0;
    double best_train_bacc = 0.0;
    double objective = 0.0;
};

/// Checkpoint container: 8-byte magic "GDXCKPT\0", u32 version, u32 reserved,
/// u64 header length, a JSON header (type tag, hyperparameters, training
/// meta, array directory), then the arrays as u64 count + raw little-endian
/// doubles.  Writing is deterministic; load followed by save reproduces the
/// file byte for byte.
void save_dgm_checkpoint(const std::string& path, const dgm::DgmModel& model,
                         const TrainMeta& meta);
dgm::DgmModel load_dgm_checkpoint(const std::string& path, TrainMeta* meta = nullptr);

void save_gmm_checkpoint(const std::string& path, const baselines::GmmPair& pair,
                         const TrainMeta& meta);
baselines::GmmPair load_gmm_checkpoint(const std::string& path, TrainMeta* meta = nullptr);

void save_mlp_checkpoint(const std::string& path, const baselines::MlpClassifier& clf,
                         const TrainMeta& meta);
baselines::MlpClassifier load_mlp_checkpoint(const std::string& path, TrainMeta* meta = nullptr);

/// Reads just the header's type tag: "dgm", "gmm_pair" or "mlp".
std::string checkpoint_type(const std::string& path);

}  // namespace gendx
