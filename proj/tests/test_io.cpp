#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/types.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "gendx/checkpoint.hpp"
#include "gendx/reports.hpp"
#include "gendx/synth.hpp"
#include "gendx/trainers.hpp"
#include "json.hpp"

using namespace gendx;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("gendx_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

json parse_file(const std::string& path) { return json::parse(read_bytes(path)); }

dgm::DgmHyper small_dgm_hyper() {
    dgm::DgmHyper h;
    h.n_x = 3;
    h.n_z = 2;
    h.n_h = 5;
    h.weight_init_std = 0.1;
    return h;
}

TrainMeta sample_meta() {
    TrainMeta m;
    m.seed = 77;
    m.iterations_run = 123;
    m.best_iteration = 100;
    m.best_train_bacc = 0.875;
    m.objective = -41.5;
    return m;
}

Dataset tiny_cohort(std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<SubjectRecord> subs;
    for (int cls = 0; cls < 2; ++cls) {
        for (int s = 0; s < 3; ++s) {
            Matrix m(10, 2);
            for (std::size_t t = 0; t < 10; ++t) {
                m(t, 0) = (cls ? 1.5 : -1.5) + 0.3 * rng.normal();
                m(t, 1) = rng.normal();
            }
            subs.push_back({(cls ? "p" : "c") + std::to_string(s), ClassLabel::from_int(cls),
                            std::move(m)});
        }
    }
    return Dataset(std::move(subs), {"r0", "r1"}, Provenance{});
}

eval::DiagnosisResult fake_result(double sc, double sp) {
    eval::DiagnosisResult r;
    r.score_control = sc;
    r.score_patient = sp;
    const double m = std::max(sc, sp);
    const double zc = std::exp(sc - m), zp = std::exp(sp - m);
    r.posterior_control = zc / (zc + zp);
    r.posterior_patient = zp / (zc + zp);
    r.predicted = sp > sc ? ClassLabel::patient() : ClassLabel::control();
    return r;
}

}  // namespace

TEST_CASE("dgm checkpoint round-trips exactly") {
    TempDir dir;
    const dgm::DgmHyper h = small_dgm_hyper();
    RngStream rng(5);
    const dgm::DgmModel model = dgm::DgmModel::init(h, rng);
    const std::string path = dir.file("model.ckpt");
    save_dgm_checkpoint(path, model, sample_meta());

    TrainMeta meta;
    const dgm::DgmModel loaded = load_dgm_checkpoint(path, &meta);
    CHECK(meta.seed == 77);
    CHECK(meta.iterations_run == 123);
    CHECK(meta.best_iteration == 100);
    CHECK(meta.best_train_bacc == 0.875);
    CHECK(meta.objective == -41.5);
    CHECK(loaded.hyper.n_x == h.n_x);
    CHECK(loaded.hyper.n_z == h.n_z);
    CHECK(loaded.hyper.n_h == h.n_h);
    CHECK(loaded.hyper.variance_floor == h.variance_floor);

    Vector ae(model.encoder.param_count()), ad(model.decoder.param_count());
    model.encoder.get_params(ae);
    model.decoder.get_params(ad);
    Vector be(loaded.encoder.param_count()), bd(loaded.decoder.param_count());
    loaded.encoder.get_params(be);
    loaded.decoder.get_params(bd);
    CHECK(ae == be);
    CHECK(ad == bd);

    // Saving the loaded model reproduces the file byte for byte.
    const std::string again = dir.file("model2.ckpt");
    save_dgm_checkpoint(again, loaded, meta);
    CHECK(read_bytes(path) == read_bytes(again));
    CHECK(checkpoint_type(path) == "dgm");
}

TEST_CASE("gmm checkpoint round-trips exactly") {
    TempDir dir;
    const Matrix eye(2, 2, {1, 0, 0, 1});
    const baselines::GmmModel ctl({0.25, 0.75}, {{0.0, 1.0}, {2.0, 3.0}},
                                  {eye, Matrix(2, 2, {2, 0.5, 0.5, 1})});
    const baselines::GmmModel pat({1.0}, {{5.0, 5.0}}, {eye});
    baselines::GmmFitOptions opt;
    opt.components = 2;
    opt.reg_scale = 1e-5;
    const baselines::GmmPair pair{ctl, pat, opt};
    const std::string path = dir.file("pair.ckpt");
    save_gmm_checkpoint(path, pair, sample_meta());

    TrainMeta meta;
    const baselines::GmmPair loaded = load_gmm_checkpoint(path, &meta);
    CHECK(meta.objective == -41.5);
    CHECK(loaded.options.components == 2);
    CHECK(loaded.options.reg_scale == 1e-5);
    CHECK(loaded.control.weights() == ctl.weights());
    CHECK(loaded.control.means() == ctl.means());
    REQUIRE(loaded.control.covariances().size() == 2);
    CHECK(loaded.control.covariances()[1] == ctl.covariances()[1]);
    CHECK(loaded.patient.means() == pat.means());

    // Identical densities, not just identical parameters.
    for (double xv : {-1.0, 0.5, 4.0}) {
        const Vector x{xv, xv * 0.5};
        CHECK(loaded.control.log_pdf(x) == ctl.log_pdf(x));
        CHECK(loaded.patient.log_pdf(x) == pat.log_pdf(x));
    }

    const std::string again = dir.file("pair2.ckpt");
    save_gmm_checkpoint(again, loaded, meta);
    CHECK(read_bytes(path) == read_bytes(again));
    CHECK(checkpoint_type(path) == "gmm_pair");
}

TEST_CASE("mlp checkpoint round-trips exactly") {
    TempDir dir;
    baselines::MlpHyper h;
    h.n_x = 4;
    h.n_h = 6;
    h.drop_prob = 0.25;
    RngStream rng(9);
    const baselines::MlpClassifier clf = baselines::MlpClassifier::init(h, rng);
    const std::string path = dir.file("mlp.ckpt");
    save_mlp_checkpoint(path, clf, sample_meta());

    TrainMeta meta;
    const baselines::MlpClassifier loaded = load_mlp_checkpoint(path, &meta);
    CHECK(loaded.hyper.n_x == 4);
    CHECK(loaded.hyper.drop_prob == 0.25);
    Vector a(clf.net.param_count()), b(loaded.net.param_count());
    clf.net.get_params(a);
    loaded.net.get_params(b);
    CHECK(a == b);
    const Vector x{0.3, -0.7, 1.1, 0.0};
    CHECK(loaded.predict_patient_prob(x) == clf.predict_patient_prob(x));

    const std::string again = dir.file("mlp2.ckpt");
    save_mlp_checkpoint(again, loaded, meta);
    CHECK(read_bytes(path) == read_bytes(again));
    CHECK(checkpoint_type(path) == "mlp");
}

TEST_CASE("checkpoint loader rejects damaged files") {
    TempDir dir;
    RngStream rng(5);
    const dgm::DgmModel model = dgm::DgmModel::init(small_dgm_hyper(), rng);
    const std::string path = dir.file("model.ckpt");
    save_dgm_checkpoint(path, model, sample_meta());
    const std::string good = read_bytes(path);

    SUBCASE("wrong magic") {
        std::string bad = good;
        bad[0] = 'X';
        write_bytes(dir.file("bad.ckpt"), bad);
        CHECK_THROWS_AS(load_dgm_checkpoint(dir.file("bad.ckpt")), std::runtime_error);
        CHECK_THROWS_AS(checkpoint_type(dir.file("bad.ckpt")), std::runtime_error);
    }
    SUBCASE("unsupported version") {
        std::string bad = good;
        bad[8] = 99;  // version word follows the 8-byte magic
        write_bytes(dir.file("bad.ckpt"), bad);
        CHECK_THROWS_AS(load_dgm_checkpoint(dir.file("bad.ckpt")), std::runtime_error);
    }
    SUBCASE("truncated body") {
        write_bytes(dir.file("bad.ckpt"), good.substr(0, good.size() / 2));
        CHECK_THROWS_AS(load_dgm_checkpoint(dir.file("bad.ckpt")), std::runtime_error);
    }
    SUBCASE("trailing garbage") {
        write_bytes(dir.file("bad.ckpt"), good + "extra");
        CHECK_THROWS_AS(load_dgm_checkpoint(dir.file("bad.ckpt")), std::runtime_error);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dgm_checkpoint(dir.file("absent.ckpt")), std::runtime_error);
        CHECK_THROWS_AS(checkpoint_type(dir.file("absent.ckpt")), std::runtime_error);
    }
    SUBCASE("type mismatch across loaders") {
        CHECK_THROWS_AS(load_gmm_checkpoint(path), std::runtime_error);
        CHECK_THROWS_AS(load_mlp_checkpoint(path), std::runtime_error);
    }
}

TEST_CASE("train log writers emit parseable deterministic JSON") {
    TempDir dir;
    dgm::TrainLog log;
    log.checkpoints.push_back({100, -50.25, 0.75});
    log.checkpoints.push_back({200, -40.5, 0.875});
    log.iterations_run = 200;
    log.best_iteration = 200;
    log.best_train_bacc = 0.875;
    log.final_dataset_elbo = -40.5;
    log.plateau_stopped = false;

    const std::string path = dir.file("train_log.json");
    write_dgm_train_log(path, log);
    const json j = parse_file(path);
    CHECK(j["iterations_run"] == 200);
    CHECK(j["best_iteration"] == 200);
    CHECK(j["best_train_bacc"] == 0.875);
    CHECK(j["plateau_stopped"] == false);
    REQUIRE(j["checkpoints"].size() == 2);
    CHECK(j["checkpoints"][0]["iteration"] == 100);
    CHECK(j["checkpoints"][0]["dataset_elbo"] == -50.25);
    CHECK(j["checkpoints"][1]["train_bacc"] == 0.875);

    write_dgm_train_log(dir.file("again.json"), log);
    CHECK(read_bytes(path) == read_bytes(dir.file("again.json")));

    baselines::MlpTrainLog mlog;
    mlog.checkpoints.push_back({50, 0.6875, 0.5});
    mlog.iterations_run = 50;
    mlog.final_cross_entropy = 0.6875;
    write_mlp_train_log(dir.file("mlp_log.json"), mlog);
    const json mj = parse_file(dir.file("mlp_log.json"));
    CHECK(mj["checkpoints"][0]["cross_entropy"] == 0.6875);
    CHECK(mj["iterations_run"] == 50);
}

TEST_CASE("diagnosis report includes metrics only when fully labeled") {
    TempDir dir;
    std::vector<DiagnosisRow> rows;
    rows.push_back({"s1", ClassLabel::patient(), fake_result(-10.0, -5.0)});
    rows.push_back({"s2", ClassLabel::control(), fake_result(-4.0, -6.0)});
    rows.push_back({"s3", ClassLabel::control(), fake_result(-7.0, -3.0)});

    write_diagnosis_report(dir.path.string(), rows);
    const json j = parse_file(dir.file("diagnosis.json"));
    REQUIRE(j.contains("subjects"));
    REQUIRE(j["subjects"].size() == 3);
    CHECK(j["subjects"][0]["subject_id"] == "s1");
    CHECK(j["subjects"][0]["predicted"] == 1);
    CHECK(j["subjects"][1]["predicted"] == 0);
    const double pc = j["subjects"][0]["posterior_control"];
    const double pp = j["subjects"][0]["posterior_patient"];
    CHECK(pc + pp == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(j.contains("metrics"));
    // tp=1 tn=1 fp=1 fn=0 over the three rows.
    CHECK(j["metrics"]["acc"] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(j["metrics"]["sen"] == 1.0);
    CHECK(j["metrics"]["spec"] == 0.5);

    const std::string csv = read_bytes(dir.file("diagnosis.csv"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + three rows
    CHECK(csv.rfind("subject_id,", 0) == 0);

    SUBCASE("an unlabeled subject drops the metrics block") {
        rows[1].truth.reset();
        TempDir dir2;
        write_diagnosis_report(dir2.path.string(), rows);
        const json j2 = parse_file(dir2.file("diagnosis.json"));
        CHECK(!j2.contains("metrics"));
        CHECK(j2["subjects"].size() == 3);
    }
    SUBCASE("byte-identical on rewrite") {
        TempDir dir2;
        write_diagnosis_report(dir2.path.string(), rows);
        CHECK(read_bytes(dir.file("diagnosis.json")) == read_bytes(dir2.file("diagnosis.json")));
        CHECK(read_bytes(dir.file("diagnosis.csv")) == read_bytes(dir2.file("diagnosis.csv")));
    }
    SUBCASE("a comma in the subject id is quoted") {
        rows[0].subject_id = "weird,id";
        TempDir dir2;
        write_diagnosis_report(dir2.path.string(), rows);
        const std::string q = read_bytes(dir2.file("diagnosis.csv"));
        CHECK(q.find("\"weird,id\"") != std::string::npos);
    }
}

TEST_CASE("contribution report ranks regions by weight") {
    TempDir dir;
    ContributionReport rep;
    rep.region_names = {"alpha", "beta", "gamma", "delta"};
    rep.weights = {0.1, 0.9, -0.2, 0.4};
    write_contribution_report(dir.path.string(), rep);

    const json j = parse_file(dir.file("contributions.json"));
    REQUIRE(j["regions"].size() == 4);
    CHECK(j["regions"][0]["region_name"] == "alpha");
    CHECK(j["regions"][0]["weight"] == 0.1);
    CHECK(j["ranking"][0] == 1);  // beta carries the largest weight

    const std::string csv = read_bytes(dir.file("contributions.csv"));
    const auto beta_pos = csv.find("beta");
    const auto delta_pos = csv.find("delta");
    const auto gamma_pos = csv.find("gamma");
    REQUIRE(beta_pos != std::string::npos);
    CHECK(beta_pos < delta_pos);   // descending weight order
    CHECK(delta_pos < gamma_pos);

    const std::string top = read_bytes(dir.file("top_regions.csv"));
    CHECK(std::count(top.begin(), top.end(), '\n') == 5);  // header + all four (fewer than ten)

    ContributionReport many;
    for (int i = 0; i < 15; ++i) {
        many.region_names.push_back("r" + std::to_string(i));
        many.weights.push_back(static_cast<double>(i));
    }
    TempDir dir2;
    write_contribution_report(dir2.path.string(), many);
    const std::string top2 = read_bytes(dir2.file("top_regions.csv"));
    CHECK(std::count(top2.begin(), top2.end(), '\n') == 11);  // header + ten strongest
    CHECK(top2.find("r14") != std::string::npos);
    CHECK(top2.find("r4,") == std::string::npos);  // rank 11 is cut
}

TEST_CASE("cv report writer covers cells, summary and selection") {
    const Dataset ds = tiny_cohort(61);
    eval::CvConfig cfg;
    cfg.trials = 2;
    cfg.folds = 3;
    cfg.base_seed = 5;
    cfg.candidates = {{"thresh,plain", {}}, {"thresh-too", {}}};
    const eval::Trainer trainer = [](const Dataset&, const eval::HyperCandidate&,
                                     std::uint64_t) {
        return eval::Diagnoser([](const Matrix& frames) {
            double m = 0.0;
            for (std::size_t t = 0; t < frames.rows(); ++t) m += frames(t, 0);
            return fake_result(-m, m);
        });
    };
    const eval::CvReport report = eval::cross_validate(ds, trainer, cfg);

    TempDir dir;
    write_cv_report(dir.path.string(), report);
    const json j = parse_file(dir.file("cv_report.json"));
    CHECK(j["trials"] == 2);
    CHECK(j["folds"] == 3);
    CHECK(j["base_seed"] == 5);
    REQUIRE(j["candidates"].size() == 2);
    CHECK(j["selected"] == "thresh,plain");
    CHECK(j["candidates"][0]["id"] == "thresh,plain");
    CHECK(j["candidates"][0]["pooled"]["bacc"] == 1.0);
    CHECK(j["candidates"][0]["per_trial"].size() == 2);

    const std::string cells = read_bytes(dir.file("cv_cells.csv"));
    // header + one row per held-out diagnosis per candidate.
    CHECK(std::count(cells.begin(), cells.end(), '\n') ==
          1 + 2 * static_cast<long>(cfg.trials) * 6);
    CHECK(cells.find("\"thresh,plain\"") != std::string::npos);

    const std::string summary = read_bytes(dir.file("cv_summary.csv"));
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
    CHECK(summary.find("candidate_id") != std::string::npos);

    TempDir dir2;
    write_cv_report(dir2.path.string(), report);
    CHECK(read_bytes(dir.file("cv_report.json")) == read_bytes(dir2.file("cv_report.json")));
    CHECK(read_bytes(dir.file("cv_cells.csv")) == read_bytes(dir2.file("cv_cells.csv")));
}

TEST_CASE("dgm trainer factory applies candidate overrides") {
    const Dataset ds = tiny_cohort(71);
    dgm::DgmHyper base;
    base.n_x = 2;
    base.n_h = 6;
    base.n_z = 2;
    base.max_iters = 30;
    base.eval_every = 10;
    base.batch_frames = 8;
    base.plateau_iters = 30;
    const eval::Trainer trainer = make_dgm_trainer(base);

    eval::HyperCandidate cand{"nh8-nz3", {{"n_h", 8.0}, {"n_z", 3.0}, {"drop_prob", 0.5}}};
    const eval::Diagnoser diagnose = trainer(ds, cand, 123);
    const eval::DiagnosisResult r = diagnose(ds.frames_of(0));
    CHECK(std::isfinite(r.score_control));
    CHECK(std::isfinite(r.score_patient));
    CHECK(r.posterior_control + r.posterior_patient == doctest::Approx(1.0).epsilon(1e-9));
    const bool consistent = (r.predicted == ClassLabel::patient()) ==
                            (r.posterior_patient > r.posterior_control);
    CHECK(consistent);

    CHECK_THROWS_AS(trainer(ds, {"bogus", {{"bogus_key", 1.0}}}, 1), std::invalid_argument);
    CHECK_THROWS_AS(trainer(ds, {"frac", {{"n_h", 7.5}}}, 1), std::invalid_argument);
    CHECK_THROWS_AS(trainer(ds, {"neg", {{"n_h", -8.0}}}, 1), std::invalid_argument);
}

TEST_CASE("gmm and mlp trainer factories train and score") {
    const Dataset ds = tiny_cohort(72);

    baselines::GmmFitOptions gopt;
    gopt.components = 1;
    const eval::Trainer gmm_trainer = make_gmm_trainer(gopt);
    const eval::Diagnoser gd = gmm_trainer(ds, {"k1", {{"components", 1.0}}}, 9);
    std::size_t gmm_correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (gd(ds.frames_of(i)).predicted == *ds.subject(i).label) ++gmm_correct;
    }
    CHECK(gmm_correct == ds.size());
    CHECK_THROWS_AS(gmm_trainer(ds, {"bad", {{"n_h", 4.0}}}, 9), std::invalid_argument);

    baselines::MlpHyper mbase;
    mbase.n_x = 2;
    mbase.n_h = 8;
    mbase.max_iters = 200;
    mbase.eval_every = 50;
    mbase.batch_frames = 16;
    mbase.plateau_iters = 200;
    const eval::Trainer mlp_trainer = make_mlp_trainer(mbase);
    const eval::Diagnoser md = mlp_trainer(ds, {"h8", {{"n_h", 8.0}}}, 10);
    std::size_t mlp_correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (md(ds.frames_of(i)).predicted == *ds.subject(i).label) ++mlp_correct;
    }
    CHECK(mlp_correct >= ds.size() - 1);

    // Same cell seed, same scores: trainers draw all randomness from it.
    const eval::Diagnoser md2 = mlp_trainer(ds, {"h8", {{"n_h", 8.0}}}, 10);
    CHECK(md2(ds.frames_of(0)).score_patient == md(ds.frames_of(0)).score_patient);
}
