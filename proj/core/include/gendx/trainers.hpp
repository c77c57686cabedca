#pragma once

#include "gendx/cross_validation.hpp"
#include "gendx/dgm.hpp"
#include "gendx/gmm.hpp"
#include "gendx/mlp_classifier.hpp"

namespace gendx {

/// Cross-validation trainer factories.  Each returned Trainer copies the base
/// hyperparameters, applies the candidate's overrides, sets the region count
/// from the training cohort and trains from the cell seed.  Unknown override
/// keys throw, which the harness records as a failed candidate.
///
/// Recognized keys — dgm: n_h, n_z, drop_prob, max_iters, batch_frames,
/// plateau_iters, eval_every; gmm: components; mlp: n_h, drop_prob,
/// max_iters, batch_frames, plateau_iters, eval_every.
eval::Trainer make_dgm_trainer(const dgm::DgmHyper& base);
eval::Trainer make_gmm_trainer(const baselines::GmmFitOptions& base, double prior_patient = 0.5);
eval::Trainer make_mlp_trainer(const baselines::MlpHyper& base);

}  // namespace gendx
