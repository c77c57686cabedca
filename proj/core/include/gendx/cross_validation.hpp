#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gendx/dataset.hpp"
#include "gendx/metrics.hpp"

namespace gendx::eval {

/// One train/test split by subject id.
struct FoldSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

/// Stratified k-fold: each class is shuffled with the seed and dealt round-
/// robin, so fold class proportions match the cohort within one subject.
/// Requires every class to have at least `folds` members.
std::vector<FoldSplit> stratified_kfold(const Dataset& dataset, std::size_t folds,
                                        std::uint64_t seed);

/// One hyperparameter setting; keys are model-specific (e.g. "n_h", "n_z",
/// "drop_prob").  `id` names the setting in reports.
struct HyperCandidate {
    std::string id;
    std::map<std::string, double> params;
};

/// What a trained model says about one subject's recording.
struct DiagnosisResult {
    double score_control = 0.0;  // per-class log evidence
    double score_patient = 0.0;
    double posterior_control = 0.0;
    double posterior_patient = 0.0;
    ClassLabel predicted = ClassLabel::control();
};

using Diagnoser = std::function<DiagnosisResult(const Matrix& frames)>;

/// Trains on the given cohort and returns a scorer for unseen recordings.
/// `seed` is the cell's derived seed; a trainer must draw all randomness
/// from it.
using Trainer =
    std::function<Diagnoser(const Dataset& train, const HyperCandidate& candidate,
                            std::uint64_t seed)>;

struct CellKey {
    std::size_t candidate = 0;
    std::size_t trial = 0;
    std::size_t fold = 0;
};

/// Observation hooks.  on_train_frame_access fires for every frame read the
/// trainer makes, tagged with the cell; with parallel jobs it may fire from
/// worker threads.
struct CvHooks {
    std::function<void(const CellKey&, const std::string& subject_id)> on_train_frame_access;
};

struct CvConfig {
    std::size_t trials = 10;
    std::size_t folds = 10;
    std::uint64_t base_seed = 0;
    std::vector<HyperCandidate> candidates;
    std::size_t jobs = 1;  // worker threads over (candidate, trial, fold) cells

    void validate() const;
};

struct SubjectDiagnosis {
    std::string subject_id;
    std::optional<ClassLabel> truth;
    DiagnosisResult result;
};

/// One (trial, fold) evaluation of a candidate.
struct CvCell {
    std::size_t trial = 0;
    std::size_t fold = 0;
    std::vector<SubjectDiagnosis> diagnoses;  // held-out subjects, split order
    std::string error;                        // nonempty if the trainer threw
};

struct CandidateResult {
    HyperCandidate candidate;
    std::vector<CvCell> cells;  // trial-major, then fold
    bool failed = false;        // any cell errored; excluded from selection
    ConfusionCounts pooled_counts;
    MetricReport pooled;                  // micro-aggregated over all cells
    std::vector<MetricReport> per_trial;  // pooled within each trial
};

struct CvReport {
    std::size_t trials = 0;
    std::size_t folds = 0;
    std::uint64_t base_seed = 0;
    std::vector<CandidateResult> candidates;
    /// Index of the selected candidate (highest pooled BACC, first on ties);
    /// npos when every candidate failed.
    std::size_t selected = static_cast<std::size_t>(-1);

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Repeated stratified cross-validation over a candidate grid.
///
/// Every (candidate, trial, fold) cell derives its own seed from base_seed,
/// so results do not depend on execution order or the jobs count.  Trainers
/// see only the fold's training subjects — the held-out frames are physically
/// absent from the dataset handed to them — and an access probe on that
/// training view feeds the hooks.  A trainer exception disqualifies the
/// candidate but is recorded, not rethrown.
CvReport cross_validate(const Dataset& dataset, const Trainer& trainer, const CvConfig& config,
                        const CvHooks* hooks = nullptr);

}  // namespace gendx::eval
