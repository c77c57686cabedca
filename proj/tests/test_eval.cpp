#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <array>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "gendx/cross_validation.hpp"
#include "gendx/metrics.hpp"
#include "gendx/rng.hpp"
#include "gendx/synth.hpp"

using namespace gendx;
using namespace gendx::eval;

namespace {

const ClassLabel C = ClassLabel::control();
const ClassLabel P = ClassLabel::patient();

// Tiny labeled cohort whose region-0 mean separates the classes exactly.
Dataset mean_split_cohort(std::size_t per_class, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<SubjectRecord> subs;
    for (int cls = 0; cls < 2; ++cls) {
        for (std::size_t s = 0; s < per_class; ++s) {
            Matrix m(4, 2);
            for (std::size_t t = 0; t < 4; ++t) {
                m(t, 0) = (cls ? 2.0 : -2.0) + 0.2 * rng.normal();
                m(t, 1) = rng.normal();
            }
            subs.push_back({(cls ? "pat-" : "con-") + std::to_string(s),
                            ClassLabel::from_int(cls), std::move(m)});
        }
    }
    return Dataset(std::move(subs), {"r0", "r1"}, Provenance{});
}

double mean_region0(const Matrix& frames) {
    double s = 0.0;
    for (std::size_t t = 0; t < frames.rows(); ++t) s += frames(t, 0);
    return s / static_cast<double>(frames.rows());
}

DiagnosisResult threshold_result(double m) {
    DiagnosisResult r;
    r.score_control = -m;
    r.score_patient = m;
    r.posterior_patient = m > 0.0 ? 1.0 : 0.0;
    r.posterior_control = 1.0 - r.posterior_patient;
    r.predicted = m > 0.0 ? P : C;
    return r;
}

// Trainer that reads every training frame (so the access probe fires) and
// classifies held-out recordings by the sign of the region-0 mean.
Diagnoser oracle_trainer(const Dataset& train, const HyperCandidate&, std::uint64_t) {
    double touched = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) touched += mean_region0(train.frames_of(i));
    (void)touched;
    return [](const Matrix& frames) { return threshold_result(mean_region0(frames)); };
}

Diagnoser constant_control_trainer(const Dataset&, const HyperCandidate&, std::uint64_t) {
    return [](const Matrix&) {
        DiagnosisResult r;
        r.posterior_control = 1.0;
        r.predicted = C;
        return r;
    };
}

bool same_report(const CvReport& a, const CvReport& b) {
    if (a.selected != b.selected || a.candidates.size() != b.candidates.size()) return false;
    for (std::size_t c = 0; c < a.candidates.size(); ++c) {
        const CandidateResult& x = a.candidates[c];
        const CandidateResult& y = b.candidates[c];
        if (x.failed != y.failed || !(x.pooled_counts == y.pooled_counts)) return false;
        if (x.pooled.bacc != y.pooled.bacc || x.pooled.mcc != y.pooled.mcc) return false;
        if (x.cells.size() != y.cells.size()) return false;
        for (std::size_t i = 0; i < x.cells.size(); ++i) {
            const CvCell& p = x.cells[i];
            const CvCell& q = y.cells[i];
            if (p.trial != q.trial || p.fold != q.fold || p.error != q.error) return false;
            if (p.diagnoses.size() != q.diagnoses.size()) return false;
            for (std::size_t j = 0; j < p.diagnoses.size(); ++j) {
                if (p.diagnoses[j].subject_id != q.diagnoses[j].subject_id) return false;
                if (p.diagnoses[j].result.predicted != q.diagnoses[j].result.predicted)
                    return false;
                if (p.diagnoses[j].result.score_patient != q.diagnoses[j].result.score_patient)
                    return false;
            }
        }
    }
    return true;
}

}  // namespace

TEST_CASE("confusion counts a hand-checked example") {
    const std::vector<ClassLabel> preds{P, C, P, P};
    const std::vector<ClassLabel> truths{P, C, C, P};
    const ConfusionCounts c = confusion(preds, truths);
    CHECK(c.tp == 2);
    CHECK(c.tn == 1);
    CHECK(c.fp == 1);
    CHECK(c.fn == 0);
    CHECK(c.total() == 4);

    CHECK_THROWS_AS(confusion(preds, std::vector<ClassLabel>{P}), std::invalid_argument);
    CHECK(confusion({}, {}).total() == 0);
}

TEST_CASE("confusion is pair-permutation invariant and additive") {
    RngStream rng(3);
    std::vector<ClassLabel> preds, truths;
    for (int i = 0; i < 40; ++i) {
        preds.push_back(ClassLabel::from_int(rng.uniform() < 0.5 ? 0 : 1));
        truths.push_back(ClassLabel::from_int(rng.uniform() < 0.5 ? 0 : 1));
    }
    const ConfusionCounts whole = confusion(preds, truths);

    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform() * i)]);
    }
    std::vector<ClassLabel> sp, st;
    for (std::size_t i : order) {
        sp.push_back(preds[i]);
        st.push_back(truths[i]);
    }
    CHECK(confusion(sp, st) == whole);

    const std::span<const ClassLabel> pp(preds), tt(truths);
    ConfusionCounts sum = confusion(pp.subspan(0, 15), tt.subspan(0, 15));
    sum += confusion(pp.subspan(15), tt.subspan(15));
    CHECK(sum == whole);
}

TEST_CASE("metrics on a fully mixed example") {
    // tp=3 tn=4 fp=2 fn=1.
    const MetricReport r = metrics({3, 4, 2, 1});
    CHECK(r.acc == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(r.sen == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.spec == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
    CHECK(r.ppv == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(r.npv == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(r.bacc == doctest::Approx(17.0 / 24.0).epsilon(1e-15));
    CHECK(r.mcc == doctest::Approx(10.0 / std::sqrt(600.0)).epsilon(1e-12));
    CHECK(r.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("metrics degrade gracefully on degenerate slices") {
    SUBCASE("all-control predictions on a 117/48 cohort") {
        const MetricReport r = metrics({0, 117, 0, 48});
        CHECK(r.acc == doctest::Approx(117.0 / 165.0).epsilon(1e-15));
        CHECK(std::abs(r.acc - 0.709) < 0.001);
        CHECK(r.sen == 0.0);
        CHECK(r.spec == 1.0);
        CHECK(r.ppv == 0.0);   // no positive predictions: 0/0 -> 0
        CHECK(r.npv == doctest::Approx(117.0 / 165.0).epsilon(1e-15));
        CHECK(r.bacc == 0.5);
        CHECK(r.mcc == 0.0);   // zero margin: 0/0 -> 0
        CHECK(r.f1 == 0.0);
    }
    SUBCASE("uniform confusion is chance") {
        const MetricReport r = metrics({25, 25, 25, 25});
        CHECK(r.acc == 0.5);
        CHECK(r.sen == 0.5);
        CHECK(r.spec == 0.5);
        CHECK(r.bacc == 0.5);
        CHECK(r.mcc == 0.0);
        CHECK(r.f1 == 0.5);
    }
    SUBCASE("perfect and inverted predictions saturate MCC") {
        const MetricReport good = metrics({10, 10, 0, 0});
        CHECK(good.acc == 1.0);
        CHECK(good.bacc == 1.0);
        CHECK(good.mcc == 1.0);
        CHECK(good.f1 == 1.0);
        const MetricReport bad = metrics({0, 0, 10, 10});
        CHECK(bad.acc == 0.0);
        CHECK(bad.mcc == -1.0);
        CHECK(bad.f1 == 0.0);
    }
    SUBCASE("no samples throws") {
        CHECK_THROWS_AS(metrics(ConfusionCounts{}), std::invalid_argument);
    }
}

TEST_CASE("stratified_kfold partitions the cohort with class balance") {
    const Dataset ds = mean_split_cohort(10, 21);
    const auto splits = stratified_kfold(ds, 10, 77);
    REQUIRE(splits.size() == 10);

    std::set<std::string> seen;
    for (const FoldSplit& s : splits) {
        CHECK(s.test_ids.size() == 2);
        CHECK(s.train_ids.size() == 18);
        std::size_t test_patients = 0;
        for (const std::string& id : s.test_ids) {
            CHECK(seen.insert(id).second);  // disjoint across folds
            test_patients += ds.subject(*ds.index_of(id)).label->is_patient() ? 1u : 0u;
        }
        CHECK(test_patients == 1);  // one subject per class per fold

        // train + test of one fold is the whole cohort.
        std::set<std::string> together(s.train_ids.begin(), s.train_ids.end());
        together.insert(s.test_ids.begin(), s.test_ids.end());
        CHECK(together.size() == ds.size());
    }
    CHECK(seen.size() == ds.size());
}

TEST_CASE("stratified_kfold balances uneven classes within one subject") {
    RngStream rng(4);
    std::vector<SubjectRecord> subs;
    for (int i = 0; i < 7; ++i) {
        subs.push_back({"c" + std::to_string(i), C, Matrix(1, 1, {rng.normal()})});
    }
    for (int i = 0; i < 5; ++i) {
        subs.push_back({"p" + std::to_string(i), P, Matrix(1, 1, {rng.normal()})});
    }
    const Dataset ds(std::move(subs), {"r"}, Provenance{});
    const auto splits = stratified_kfold(ds, 5, 9);
    for (const FoldSplit& s : splits) {
        std::size_t con = 0, pat = 0;
        for (const std::string& id : s.test_ids) {
            (ds.subject(*ds.index_of(id)).label->is_patient() ? pat : con) += 1;
        }
        CHECK(pat == 1);            // 5 patients over 5 folds
        CHECK((con == 1 || con == 2));  // 7 controls over 5 folds
    }
}

TEST_CASE("stratified_kfold determinism and validation") {
    const Dataset ds = mean_split_cohort(6, 22);
    const auto a = stratified_kfold(ds, 3, 5);
    const auto b = stratified_kfold(ds, 3, 5);
    REQUIRE(a.size() == b.size());
    for (std::size_t f = 0; f < a.size(); ++f) {
        CHECK(a[f].train_ids == b[f].train_ids);
        CHECK(a[f].test_ids == b[f].test_ids);
    }
    const auto c = stratified_kfold(ds, 3, 6);
    bool any_diff = false;
    for (std::size_t f = 0; f < a.size(); ++f) any_diff |= (a[f].test_ids != c[f].test_ids);
    CHECK(any_diff);

    CHECK_THROWS_AS(stratified_kfold(ds, 1, 5), std::invalid_argument);
    CHECK_THROWS_AS(stratified_kfold(ds, 7, 5), std::invalid_argument);  // 6 per class < 7

    std::vector<SubjectRecord> subs;
    subs.push_back({"a", C, Matrix(1, 1, {0.0})});
    subs.push_back({"b", std::nullopt, Matrix(1, 1, {0.0})});
    const Dataset unlabeled(std::move(subs), {"r"}, Provenance{});
    CHECK_THROWS_AS(stratified_kfold(unlabeled, 2, 5), std::invalid_argument);
}

TEST_CASE("CvConfig validation") {
    CvConfig cfg;
    cfg.candidates.push_back({"only", {}});
    CHECK_NOTHROW(cfg.validate());
    CvConfig bad = cfg;
    bad.trials = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.folds = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.candidates.clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.jobs = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("cross_validate scores an oracle perfectly and a constant at chance") {
    const Dataset ds = mean_split_cohort(6, 31);
    CvConfig cfg;
    cfg.trials = 2;
    cfg.folds = 3;
    cfg.base_seed = 11;
    cfg.candidates = {{"oracle", {}}};

    const CvReport report = cross_validate(ds, oracle_trainer, cfg);
    REQUIRE(report.candidates.size() == 1);
    const CandidateResult& res = report.candidates[0];
    CHECK(!res.failed);
    CHECK(report.selected == 0);
    CHECK(res.pooled.bacc == 1.0);
    CHECK(res.pooled.acc == 1.0);
    CHECK(res.pooled_counts.total() == ds.size() * cfg.trials);
    REQUIRE(res.per_trial.size() == 2);
    CHECK(res.per_trial[0].bacc == 1.0);
    CHECK(res.per_trial[1].bacc == 1.0);

    // Cells are trial-major and cover every fold once.
    REQUIRE(res.cells.size() == cfg.trials * cfg.folds);
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        for (std::size_t f = 0; f < cfg.folds; ++f) {
            const CvCell& cell = res.cells[t * cfg.folds + f];
            CHECK(cell.trial == t);
            CHECK(cell.fold == f);
            CHECK(cell.error.empty());
            CHECK(cell.diagnoses.size() == 4);  // 12 subjects over 3 folds
        }
    }

    const CvReport chance = cross_validate(ds, constant_control_trainer, cfg);
    CHECK(chance.candidates[0].pooled.bacc == 0.5);
    CHECK(chance.candidates[0].pooled.acc == 0.5);  // balanced cohort: control fraction
    CHECK(chance.candidates[0].pooled.sen == 0.0);
    CHECK(chance.candidates[0].pooled.spec == 1.0);
}

TEST_CASE("cross_validate records failures and excludes them from selection") {
    const Dataset ds = mean_split_cohort(4, 32);
    CvConfig cfg;
    cfg.trials = 1;
    cfg.folds = 2;
    cfg.base_seed = 7;
    cfg.candidates = {{"bad", {}}, {"good", {}}};

    const Trainer trainer = [](const Dataset& train, const HyperCandidate& cand,
                               std::uint64_t seed) -> Diagnoser {
        if (cand.id == "bad") throw std::runtime_error("synthetic failure");
        return oracle_trainer(train, cand, seed);
    };
    const CvReport report = cross_validate(ds, trainer, cfg);
    REQUIRE(report.candidates.size() == 2);
    CHECK(report.candidates[0].failed);
    CHECK(report.candidates[0].cells[0].error == "synthetic failure");
    CHECK(report.candidates[0].cells[0].diagnoses.empty());
    CHECK(!report.candidates[1].failed);
    CHECK(report.selected == 1);  // the failed candidate cannot win

    // Every candidate failing leaves nothing selected.
    const Trainer all_bad = [](const Dataset&, const HyperCandidate&,
                               std::uint64_t) -> Diagnoser {
        throw std::runtime_error("nope");
    };
    CHECK(cross_validate(ds, all_bad, cfg).selected == CvReport::npos);
}

TEST_CASE("cross_validate selection prefers the first of tied candidates") {
    const Dataset ds = mean_split_cohort(4, 33);
    CvConfig cfg;
    cfg.trials = 1;
    cfg.folds = 2;
    cfg.base_seed = 3;
    cfg.candidates = {{"twin-a", {}}, {"twin-b", {}}};
    const CvReport report = cross_validate(ds, oracle_trainer, cfg);
    CHECK(report.candidates[0].pooled.bacc == report.candidates[1].pooled.bacc);
    CHECK(report.selected == 0);
}

TEST_CASE("cross_validate hands trainers distinct per-cell seeds") {
    const Dataset ds = mean_split_cohort(4, 34);
    CvConfig cfg;
    cfg.trials = 2;
    cfg.folds = 2;
    cfg.base_seed = 99;
    cfg.candidates = {{"a", {}}, {"b", {}}};

    std::vector<std::uint64_t> seeds;
    const Trainer trainer = [&seeds](const Dataset& train, const HyperCandidate& cand,
                                     std::uint64_t seed) {
        seeds.push_back(seed);
        return oracle_trainer(train, cand, seed);
    };
    cross_validate(ds, trainer, cfg);
    REQUIRE(seeds.size() == 8);
    CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == 8);

    std::vector<std::uint64_t> again;
    const Trainer trainer2 = [&again](const Dataset& train, const HyperCandidate& cand,
                                      std::uint64_t seed) {
        again.push_back(seed);
        return oracle_trainer(train, cand, seed);
    };
    cross_validate(ds, trainer2, cfg);
    CHECK(again == seeds);
}

TEST_CASE("training never touches held-out subjects") {
    const Dataset ds = mean_split_cohort(5, 35);
    CvConfig cfg;
    cfg.trials = 2;
    cfg.folds = 5;
    cfg.base_seed = 13;
    cfg.candidates = {{"audited", {}}};

    std::map<std::array<std::size_t, 3>, std::set<std::string>> touched;
    CvHooks hooks;
    hooks.on_train_frame_access = [&touched](const CellKey& key, const std::string& id) {
        touched[{key.candidate, key.trial, key.fold}].insert(id);
    };
    const CvReport report = cross_validate(ds, oracle_trainer, cfg, &hooks);

    std::size_t cells_seen = 0;
    for (const CvCell& cell : report.candidates[0].cells) {
        const auto it = touched.find({std::size_t{0}, cell.trial, cell.fold});
        REQUIRE(it != touched.end());
        CHECK(it->second.size() == ds.size() - cell.diagnoses.size());
        for (const SubjectDiagnosis& sd : cell.diagnoses) {
            CHECK(it->second.count(sd.subject_id) == 0);  // zero held-out accesses
        }
        ++cells_seen;
    }
    CHECK(cells_seen == cfg.trials * cfg.folds);
}

TEST_CASE("cross_validate reports are independent of the jobs count") {
    const Dataset ds = mean_split_cohort(5, 36);
    CvConfig cfg;
    cfg.trials = 2;
    cfg.folds = 3;
    cfg.base_seed = 17;
    cfg.candidates = {{"a", {{"n_h", 8.0}}}, {"b", {{"n_h", 16.0}}}};

    // Seed-dependent predictions make ordering bugs visible.
    const Trainer trainer = [](const Dataset& train, const HyperCandidate&, std::uint64_t seed) {
        double shift = 0.0;
        for (std::size_t i = 0; i < train.size(); ++i) shift += mean_region0(train.frames_of(i));
        shift /= static_cast<double>(train.size());
        RngStream rng(seed);
        const double jitter = 1e-9 * rng.normal();
        return Diagnoser([shift, jitter](const Matrix& frames) {
            return threshold_result(mean_region0(frames) - shift + jitter);
        });
    };

    const CvReport serial = cross_validate(ds, trainer, cfg);
    CvConfig par = cfg;
    par.jobs = 3;
    const CvReport parallel = cross_validate(ds, trainer, par);
    CHECK(same_report(serial, parallel));
}
