#include "gendx/cross_validation.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <stdexcept>
#include <thread>

#include "gendx/rng.hpp"

namespace gendx::eval {

std::vector<FoldSplit> stratified_kfold(const Dataset& dataset, std::size_t folds,
                                        std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("stratified_kfold: need at least 2 folds");
    if (!dataset.all_labeled()) {
        throw std::invalid_argument("stratified_kfold: all subjects must be labeled");
    }
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        by_class[static_cast<std::size_t>(dataset.subject(i).label->value())].push_back(i);
    }
    for (int cls = 0; cls < 2; ++cls) {
        if (by_class[static_cast<std::size_t>(cls)].size() < folds) {
            throw std::invalid_argument("stratified_kfold: class " + std::to_string(cls) +
                                        " has fewer subjects than folds");
        }
    }

    std::vector<std::vector<std::size_t>> test_sets(folds);
    for (int cls = 0; cls < 2; ++cls) {
        auto& indices = by_class[static_cast<std::size_t>(cls)];
        RngStream rng(derive_seed(seed, {static_cast<std::uint64_t>(cls)}));
        for (std::size_t i = indices.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
            std::swap(indices[i - 1], indices[j]);
        }
        for (std::size_t i = 0; i < indices.size(); ++i) {
            test_sets[i % folds].push_back(indices[i]);
        }
    }

    std::vector<FoldSplit> splits(folds);
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<bool> in_test(dataset.size(), false);
        for (std::size_t idx : test_sets[f]) in_test[idx] = true;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            (in_test[i] ? splits[f].test_ids : splits[f].train_ids)
                .push_back(dataset.subject(i).id);
        }
    }
    return splits;
}

void CvConfig::validate() const {
    if (trials == 0) throw std::invalid_argument("CvConfig: trials must be >= 1");
    if (folds < 2) throw std::invalid_argument("CvConfig: folds must be >= 2");
    if (candidates.empty()) throw std::invalid_argument("CvConfig: empty candidate grid");
    if (jobs == 0) throw std::invalid_argument("CvConfig: jobs must be >= 1");
}

namespace {

void run_cell(const Dataset& dataset, const Trainer& trainer, const HyperCandidate& candidate,
              const FoldSplit& split, const CellKey& key, std::uint64_t seed,
              const CvHooks* hooks, CvCell& cell) {
    cell.trial = key.trial;
    cell.fold = key.fold;
    try {
        Dataset train_view = dataset.subset(split.train_ids);
        if (hooks && hooks->on_train_frame_access) {
            auto fire = hooks->on_train_frame_access;
            train_view.set_access_probe(
                [fire, key](const std::string& id) { fire(key, id); });
        }
        const Diagnoser diagnose = trainer(train_view, candidate, seed);
        for (const std::string& id : split.test_ids) {
            const auto idx = dataset.index_of(id);
            SubjectDiagnosis sd;
            sd.subject_id = id;
            sd.truth = dataset.subject(*idx).label;
            sd.result = diagnose(dataset.frames_of(*idx));
            cell.diagnoses.push_back(std::move(sd));
        }
    } catch (const std::exception& e) {
        cell.diagnoses.clear();
        cell.error = e.what();
    }
}

MetricReport pooled_metrics(const std::vector<const CvCell*>& cells, ConfusionCounts* out_counts) {
    std::vector<ClassLabel> preds, truths;
    for (const CvCell* cell : cells) {
        for (const SubjectDiagnosis& sd : cell->diagnoses) {
            preds.push_back(sd.result.predicted);
            truths.push_back(*sd.truth);
        }
    }
    const ConfusionCounts counts = confusion(preds, truths);
    if (out_counts) *out_counts = counts;
    return metrics(counts);
}

}  // namespace

CvReport cross_validate(const Dataset& dataset, const Trainer& trainer, const CvConfig& config,
                        const CvHooks* hooks) {
    config.validate();
    if (!trainer) throw std::invalid_argument("cross_validate: null trainer");
    if (!dataset.all_labeled()) {
        throw std::invalid_argument("cross_validate: all subjects must be labeled");
    }

    // Folds are fixed per trial before any training happens; every cell then
    // derives its own seed, so execution order and the jobs count cannot
    // change any result.
    std::vector<std::vector<FoldSplit>> trial_folds(config.trials);
    for (std::size_t t = 0; t < config.trials; ++t) {
        trial_folds[t] =
            stratified_kfold(dataset, config.folds, derive_seed(config.base_seed, {0xF01D, t}));
    }

    const std::size_t n_cand = config.candidates.size();
    const std::size_t cells_per_cand = config.trials * config.folds;
    std::vector<std::vector<CvCell>> cells(n_cand, std::vector<CvCell>(cells_per_cand));

    struct Job {
        CellKey key;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    jobs.reserve(n_cand * cells_per_cand);
    for (std::size_t c = 0; c < n_cand; ++c) {
        for (std::size_t t = 0; t < config.trials; ++t) {
            for (std::size_t f = 0; f < config.folds; ++f) {
                jobs.push_back({{c, t, f}, derive_seed(config.base_seed, {1, c, t, f})});
            }
        }
    }

    auto work = [&](const Job& job) {
        const CellKey& key = job.key;
        run_cell(dataset, trainer, config.candidates[key.candidate],
                 trial_folds[key.trial][key.fold], key, job.seed, hooks,
                 cells[key.candidate][key.trial * config.folds + key.fold]);
    };

    const std::size_t workers = std::min(config.jobs, jobs.size());
    if (workers <= 1) {
        for (const Job& job : jobs) work(job);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    work(jobs[i]);
                }
            });
        }
        for (std::thread& th : pool) th.join();
    }

    CvReport report;
    report.trials = config.trials;
    report.folds = config.folds;
    report.base_seed = config.base_seed;
    for (std::size_t c = 0; c < n_cand; ++c) {
        CandidateResult res;
        res.candidate = config.candidates[c];
        res.cells = std::move(cells[c]);
        res.failed = std::any_of(res.cells.begin(), res.cells.end(),
                                 [](const CvCell& cell) { return !cell.error.empty(); });
        if (!res.failed) {
            std::vector<const CvCell*> all;
            for (const CvCell& cell : res.cells) all.push_back(&cell);
            res.pooled = pooled_metrics(all, &res.pooled_counts);
            for (std::size_t t = 0; t < config.trials; ++t) {
                std::vector<const CvCell*> in_trial;
                for (std::size_t f = 0; f < config.folds; ++f) {
                    in_trial.push_back(&res.cells[t * config.folds + f]);
                }
                res.per_trial.push_back(pooled_metrics(in_trial, nullptr));
            }
        }
        report.candidates.push_back(std::move(res));
    }

    for (std::size_t c = 0; c < n_cand; ++c) {
        if (report.candidates[c].failed) continue;
        if (report.selected == CvReport::npos ||
            report.candidates[c].pooled.bacc > report.candidates[report.selected].pooled.bacc) {
            report.selected = c;
        }
    }
    return report;
}

}  // namespace gendx::eval
