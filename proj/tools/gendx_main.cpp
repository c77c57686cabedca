// Command-line front end: cohort synthesis, preprocessing, training,
// diagnosis, region attribution and cross-validation over one dataset format.
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gendx/checkpoint.hpp"
#include "gendx/cross_validation.hpp"
#include "gendx/dgm.hpp"
#include "gendx/gmm.hpp"
#include "gendx/metrics.hpp"
#include "gendx/mlp_classifier.hpp"
#include "gendx/preprocess.hpp"
#include "gendx/reports.hpp"
#include "gendx/synth.hpp"
#include "gendx/textio.hpp"
#include "gendx/trainers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gendx;

namespace {

void write_run_config(const std::string& out_dir, json config) {
    atomic_write_file((fs::path(out_dir) / "run_config.json").string(), config.dump(2) + "\n");
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
    std::vector<std::size_t> out;
    for (const std::string& field : split_csv_line(text)) {
        std::size_t pos = 0;
        const unsigned long v = std::stoul(field, &pos);
        if (pos != field.size()) throw CLI::ValidationError("bad index list entry '" + field + "'");
        out.push_back(v);
    }
    return out;
}

// "key=v1,v2,..." axes, combined as a cartesian product (first axis slowest).
std::vector<eval::HyperCandidate> build_grid(const std::vector<std::string>& specs) {
    std::vector<std::pair<std::string, std::vector<double>>> axes;
    for (const std::string& spec : specs) {
        const std::size_t eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw CLI::ValidationError("grid spec must look like key=v1,v2: '" + spec + "'");
        }
        std::vector<double> values;
        for (const std::string& field : split_csv_line(spec.substr(eq + 1))) {
            std::size_t pos = 0;
            values.push_back(std::stod(field, &pos));
            if (pos != field.size()) {
                throw CLI::ValidationError("bad grid value '" + field + "' in '" + spec + "'");
            }
        }
        if (values.empty()) throw CLI::ValidationError("empty grid axis: '" + spec + "'");
        axes.emplace_back(spec.substr(0, eq), values);
    }

    std::vector<eval::HyperCandidate> grid;
    std::vector<std::size_t> cursor(axes.size(), 0);
    while (true) {
        eval::HyperCandidate cand;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            cand.params[axes[a].first] = axes[a].second[cursor[a]];
        }
        std::string id;
        for (const auto& [key, value] : cand.params) {
            if (!id.empty()) id += ',';
            id += key + '=' + format_double(value);
        }
        cand.id = id;
        grid.push_back(std::move(cand));
        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++cursor[a] < axes[a].second.size()) break;
            cursor[a] = 0;
            if (a == 0) return grid;
        }
        if (axes.empty()) return grid;
    }
}

std::vector<eval::HyperCandidate> default_grid(const std::string& model) {
    if (model == "dgm") {
        auto grid = build_grid({"drop_prob=0,0.5", "n_h=100,200,400", "n_z=5,10,20,50,100"});
        std::erase_if(grid, [](const eval::HyperCandidate& c) {
            return c.params.at("n_h") <= c.params.at("n_z");
        });
        return grid;
    }
    if (model == "gmm") return build_grid({"components=2,5,10,20,50,100"});
    return build_grid({"drop_prob=0,0.5", "n_h=50,100,200,400"});
}

json candidates_to_json(const std::vector<eval::HyperCandidate>& grid) {
    json j = json::array();
    for (const eval::HyperCandidate& c : grid) j.push_back(json{{"id", c.id}, {"params", c.params}});
    return j;
}

// ---- synth ----------------------------------------------------------------

json synth_config_json(const SynthConfig& cfg) {
    json j;
    j["n_x"] = cfg.n_x;
    j["subjects_per_class"] = cfg.subjects_per_class;
    j["frames_per_subject"] = cfg.frames_per_subject;
    j["latent_dim"] = cfg.latent_dim;
    j["discriminative_regions"] = cfg.discriminative_regions;
    j["effect_size"] = cfg.effect_size;
    j["mixing_scale"] = cfg.mixing_scale;
    j["noise_scale"] = cfg.noise_scale;
    j["class_specific_mixing"] = cfg.class_specific_mixing;
    j["seed"] = cfg.seed;
    return j;
}

struct SynthArgs {
    SynthConfig config;
    std::string regions_text = "3,11";
    bool null_cohort = false;
    std::string out_dir;
};

int cmd_synth(SynthArgs& args) {
    args.config.discriminative_regions = parse_index_list(args.regions_text);
    if (args.null_cohort) {
        args.config.effect_size = 0.0;
        args.config.class_specific_mixing = false;
    }
    const Dataset dataset = synth_generate(args.config);
    save_dataset(dataset, args.out_dir);

    json cfg;
    cfg["command"] = "synth";
    cfg["out"] = args.out_dir;
    cfg["synth"] = synth_config_json(args.config);
    write_run_config(args.out_dir, cfg);

    std::cout << "wrote " << dataset.size() << " subjects to " << args.out_dir
              << "\ndiscriminative regions:";
    for (std::size_t r : args.config.discriminative_regions) std::cout << ' ' << r;
    std::cout << "\nclass signal: effect_size " << format_double(args.config.effect_size)
              << ", class_specific_mixing " << (args.config.class_specific_mixing ? "on" : "off")
              << "\n";
    return 0;
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessArgs {
    std::string in_manifest;
    std::string out_dir;
    BandpassConfig band;
};

int cmd_preprocess(const PreprocessArgs& args) {
    const Dataset input = load_dataset(args.in_manifest);
    std::vector<std::string> warnings;
    const Dataset output = preprocess_dataset(input, args.band, &warnings);
    save_dataset(output, args.out_dir);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

    json cfg;
    cfg["command"] = "preprocess";
    cfg["in"] = args.in_manifest;
    cfg["out"] = args.out_dir;
    cfg["tr_seconds"] = args.band.tr_seconds;
    cfg["f_lo_hz"] = args.band.f_lo_hz;
    cfg["f_hi_hz"] = args.band.f_hi_hz;
    write_run_config(args.out_dir, cfg);

    std::cout << "preprocessed " << output.size() << " subjects (" << warnings.size()
              << " warnings) into " << args.out_dir << "\n";
    return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string in_manifest;
    std::string out_dir;
    std::string model = "dgm";
    std::uint64_t seed = 0;
    dgm::DgmHyper dgm_hyper;
    baselines::MlpHyper mlp_hyper;
    baselines::GmmFitOptions gmm_options;
    double prior_patient = 0.5;
};

json dgm_hyper_to_json(const dgm::DgmHyper& h) {
    json j;
    j["n_x"] = h.n_x;
    j["n_z"] = h.n_z;
    j["n_h"] = h.n_h;
    j["hidden_layers"] = h.hidden_layers;
    j["drop_prob"] = h.drop_prob;
    j["max_iters"] = h.max_iters;
    j["eval_every"] = h.eval_every;
    j["batch_frames"] = h.batch_frames;
    j["plateau_iters"] = h.plateau_iters;
    j["prior_patient"] = h.prior_patient;
    return j;
}

int cmd_train(const TrainArgs& args) {
    const Dataset dataset = load_dataset(args.in_manifest);
    const std::string ckpt = (fs::path(args.out_dir) / "model.ckpt").string();

    json cfg;
    cfg["command"] = "train";
    cfg["in"] = args.in_manifest;
    cfg["out"] = args.out_dir;
    cfg["model"] = args.model;
    cfg["seed"] = args.seed;

    if (args.model == "dgm") {
        dgm::DgmHyper hyper = args.dgm_hyper;
        hyper.n_x = dataset.n_x();
        hyper.prior_patient = args.prior_patient;
        RngStream rng(args.seed);
        const auto [model, log] = dgm::train(dataset, hyper, rng);
        const TrainMeta meta{args.seed, log.iterations_run, log.best_iteration,
                             log.best_train_bacc, log.final_dataset_elbo};
        save_dgm_checkpoint(ckpt, model, meta);
        write_dgm_train_log((fs::path(args.out_dir) / "train_log.json").string(), log);
        cfg["hyper"] = dgm_hyper_to_json(hyper);
        write_run_config(args.out_dir, cfg);
        std::cout << "dgm: " << log.iterations_run << " iterations, best training BACC "
                  << format_double(log.best_train_bacc) << " at iteration " << log.best_iteration
                  << (log.plateau_stopped ? " (plateau stop)" : "") << "\n";
    } else if (args.model == "mlp") {
        baselines::MlpHyper hyper = args.mlp_hyper;
        hyper.n_x = dataset.n_x();
        RngStream rng(args.seed);
        const auto [clf, log] = baselines::mlp_train(dataset, hyper, rng);
        const TrainMeta meta{args.seed, log.iterations_run, log.best_iteration,
                             log.best_train_bacc, log.final_cross_entropy};
        save_mlp_checkpoint(ckpt, clf, meta);
        write_mlp_train_log((fs::path(args.out_dir) / "train_log.json").string(), log);
        json hj;
        hj["n_x"] = hyper.n_x;
        hj["n_h"] = hyper.n_h;
        hj["hidden_layers"] = hyper.hidden_layers;
        hj["drop_prob"] = hyper.drop_prob;
        hj["max_iters"] = hyper.max_iters;
        hj["eval_every"] = hyper.eval_every;
        hj["batch_frames"] = hyper.batch_frames;
        hj["plateau_iters"] = hyper.plateau_iters;
        cfg["hyper"] = hj;
        write_run_config(args.out_dir, cfg);
        std::cout << "mlp: " << log.iterations_run << " iterations, best training BACC "
                  << format_double(log.best_train_bacc) << " at iteration " << log.best_iteration
                  << (log.plateau_stopped ? " (plateau stop)" : "") << "\n";
    } else if (args.model == "gmm") {
        RngStream rng(args.seed);
        baselines::GmmPairDiag diag;
        const baselines::GmmPair pair =
            baselines::gmm_fit_pair(dataset, args.gmm_options, rng, &diag);

        // Training-set BACC, mirroring what the other models log.
        std::array<std::size_t, 2> total{0, 0}, correct{0, 0};
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const ClassLabel truth = *dataset.subject(i).label;
            const ClassLabel pred =
                baselines::gmm_diagnose(pair, dataset.frames_of(i), args.prior_patient);
            ++total[static_cast<std::size_t>(truth.value())];
            if (pred == truth) ++correct[static_cast<std::size_t>(truth.value())];
        }
        const double bacc =
            0.5 * (static_cast<double>(correct[0]) / static_cast<double>(total[0]) +
                   static_cast<double>(correct[1]) / static_cast<double>(total[1]));

        TrainMeta meta;
        meta.seed = args.seed;
        meta.iterations_run = std::max(diag.log_likelihood_traces[0].size(),
                                       diag.log_likelihood_traces[1].size());
        meta.best_train_bacc = bacc;
        meta.objective = diag.log_likelihood_traces[0].back() + diag.log_likelihood_traces[1].back();
        save_gmm_checkpoint(ckpt, pair, meta);

        json trace;
        trace["control"] = diag.log_likelihood_traces[0];
        trace["patient"] = diag.log_likelihood_traces[1];
        trace["converged"] = json::array({diag.converged[0], diag.converged[1]});
        trace["train_bacc"] = bacc;
        atomic_write_file((fs::path(args.out_dir) / "em_trace.json").string(),
                          trace.dump(2) + "\n");

        json hj;
        hj["components"] = args.gmm_options.components;
        hj["max_em_iters"] = args.gmm_options.max_em_iters;
        hj["rel_tol"] = args.gmm_options.rel_tol;
        hj["reg_scale"] = args.gmm_options.reg_scale;
        cfg["hyper"] = hj;
        write_run_config(args.out_dir, cfg);
        std::cout << "gmm: EM ran " << meta.iterations_run << " iterations, training BACC "
                  << format_double(bacc) << "\n";
    } else {
        throw CLI::ValidationError("unknown model '" + args.model + "'");
    }
    return 0;
}

// ---- diagnose -------------------------------------------------------------

struct DiagnoseArgs {
    std::string in_manifest;
    std::string checkpoint;
    std::string out_dir;
    double prior_patient = 0.5;
};

int cmd_diagnose(const DiagnoseArgs& args) {
    const Dataset dataset = load_dataset(args.in_manifest);
    const std::string type = checkpoint_type(args.checkpoint);

    std::function<eval::DiagnosisResult(const Matrix&)> score;
    if (type == "dgm") {
        auto model = std::make_shared<dgm::DgmModel>(load_dgm_checkpoint(args.checkpoint));
        if (model->hyper.n_x != dataset.n_x()) {
            throw std::runtime_error("checkpoint expects " + std::to_string(model->hyper.n_x) +
                                     " regions, dataset has " + std::to_string(dataset.n_x()));
        }
        const double prior = args.prior_patient;
        score = [model, prior](const Matrix& frames) {
            const double s0 = dgm::subject_elbo(*model, frames, ClassLabel::control());
            const double s1 = dgm::subject_elbo(*model, frames, ClassLabel::patient());
            eval::DiagnosisResult r;
            r.score_control = s0;
            r.score_patient = s1;
            const auto post = dgm::class_posterior(s0, s1, prior);
            r.posterior_control = post[0];
            r.posterior_patient = post[1];
            r.predicted = dgm::decide_label(s0, s1, prior);
            return r;
        };
    } else if (type == "gmm_pair") {
        auto pair = std::make_shared<baselines::GmmPair>(load_gmm_checkpoint(args.checkpoint));
        const double prior = args.prior_patient;
        score = [pair, prior](const Matrix& frames) {
            const auto s = baselines::gmm_scores(*pair, frames);
            eval::DiagnosisResult r;
            r.score_control = s[0];
            r.score_patient = s[1];
            const auto post = dgm::class_posterior(s[0], s[1], prior);
            r.posterior_control = post[0];
            r.posterior_patient = post[1];
            r.predicted = dgm::decide_label(s[0], s[1], prior);
            return r;
        };
    } else if (type == "mlp") {
        auto clf = std::make_shared<baselines::MlpClassifier>(load_mlp_checkpoint(args.checkpoint));
        score = [clf](const Matrix& frames) {
            const auto s = baselines::mlp_scores(*clf, frames);
            eval::DiagnosisResult r;
            r.score_control = s[0];
            r.score_patient = s[1];
            const auto post = dgm::class_posterior(s[0], s[1], 0.5);
            r.posterior_control = post[0];
            r.posterior_patient = post[1];
            r.predicted = baselines::mlp_diagnose(*clf, frames);
            return r;
        };
    } else {
        throw std::runtime_error("unsupported checkpoint type '" + type + "'");
    }

    std::vector<DiagnosisRow> rows;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        DiagnosisRow row;
        row.subject_id = dataset.subject(i).id;
        row.truth = dataset.subject(i).label;
        row.result = score(dataset.frames_of(i));
        rows.push_back(std::move(row));
    }
    write_diagnosis_report(args.out_dir, rows);

    json cfg;
    cfg["command"] = "diagnose";
    cfg["in"] = args.in_manifest;
    cfg["checkpoint"] = args.checkpoint;
    cfg["out"] = args.out_dir;
    cfg["model_type"] = type;
    cfg["prior_patient"] = args.prior_patient;
    write_run_config(args.out_dir, cfg);

    std::size_t patients = 0;
    for (const DiagnosisRow& r : rows) patients += r.result.predicted.is_patient() ? 1 : 0;
    std::cout << "diagnosed " << rows.size() << " subjects (" << patients << " as patients)\n";
    if (dataset.all_labeled() && !rows.empty()) {
        std::vector<ClassLabel> preds, truths;
        for (const DiagnosisRow& r : rows) {
            preds.push_back(r.result.predicted);
            truths.push_back(*r.truth);
        }
        const eval::MetricReport m = eval::metrics(eval::confusion(preds, truths));
        std::cout << "ACC " << format_double(m.acc) << "  BACC " << format_double(m.bacc)
                  << "  MCC " << format_double(m.mcc) << "  F1 " << format_double(m.f1) << "\n";
    }
    return 0;
}

// ---- contrib --------------------------------------------------------------

struct ContribArgs {
    std::string in_manifest;
    std::string checkpoint;
    std::string out_dir;
    std::vector<std::string> series;  // subject_id:region_index
};

int cmd_contrib(const ContribArgs& args) {
    const Dataset dataset = load_dataset(args.in_manifest);
    const std::string type = checkpoint_type(args.checkpoint);
    if (type != "dgm") {
        throw CLI::ValidationError("contrib needs a dgm checkpoint, got type '" + type + "'");
    }
    const dgm::DgmModel model = load_dgm_checkpoint(args.checkpoint);

    ContributionReport report;
    report.region_names = dataset.region_names();
    report.weights = dgm::contribution_regions(model, dataset);
    write_contribution_report(args.out_dir, report);

    for (const std::string& spec : args.series) {
        const std::size_t colon = spec.find(':');
        if (colon == std::string::npos) {
            throw CLI::ValidationError("series spec must look like subject_id:region_index");
        }
        const std::string id = spec.substr(0, colon);
        const std::size_t region = parse_index_list(spec.substr(colon + 1)).at(0);
        const auto idx = dataset.index_of(id);
        if (!idx) throw CLI::ValidationError("unknown subject '" + id + "'");
        if (region >= dataset.n_x()) throw CLI::ValidationError("region index out of range");
        const SubjectRecord& subject = dataset.subject(*idx);
        if (!subject.label) throw CLI::ValidationError("subject '" + id + "' has no label");
        const ClassLabel truth = *subject.label;
        const ClassLabel wrong = truth.flipped();

        std::string csv =
            "t,x,mu_true,sd_true,err_true,mu_wrong,sd_wrong,err_wrong,weight\n";
        const Matrix& frames = dataset.frames_of(*idx);
        for (std::size_t t = 0; t < frames.rows(); ++t) {
            const auto x = frames.row(t);
            const GaussianPair pt = dgm::decode(model, dgm::encode(model, x, truth).mean, truth);
            const GaussianPair pw = dgm::decode(model, dgm::encode(model, x, wrong).mean, wrong);
            const double err_t = -gaussian_log_term(x[region], pt.mean[region], pt.variance[region]);
            const double err_w = -gaussian_log_term(x[region], pw.mean[region], pw.variance[region]);
            csv += std::to_string(t);
            for (double v : {x[region], pt.mean[region], std::sqrt(pt.variance[region]), err_t,
                             pw.mean[region], std::sqrt(pw.variance[region]), err_w, err_w - err_t}) {
                csv += ',';
                csv += format_double(v);
            }
            csv += '\n';
        }
        atomic_write_file(
            (fs::path(args.out_dir) / ("series_" + id + "_r" + std::to_string(region) + ".csv"))
                .string(),
            csv);
    }

    json cfg;
    cfg["command"] = "contrib";
    cfg["in"] = args.in_manifest;
    cfg["checkpoint"] = args.checkpoint;
    cfg["out"] = args.out_dir;
    cfg["series"] = args.series;
    write_run_config(args.out_dir, cfg);

    std::cout << "wrote contribution weights for " << report.weights.size() << " regions\n";
    return 0;
}

// ---- cv -------------------------------------------------------------------

struct CvArgs {
    std::string in_manifest;
    std::string out_dir;
    std::string model = "dgm";
    std::uint64_t seed = 0;
    std::size_t trials = 10;
    std::size_t folds = 10;
    std::size_t jobs = 0;  // 0: use GENDX_JOBS or 1
    std::vector<std::string> grid_specs;
    dgm::DgmHyper dgm_hyper;
    baselines::MlpHyper mlp_hyper;
    baselines::GmmFitOptions gmm_options;
    double prior_patient = 0.5;
};

int cmd_cv(const CvArgs& args) {
    const Dataset dataset = load_dataset(args.in_manifest);

    std::size_t jobs = args.jobs;
    if (jobs == 0) {
        if (const char* env = std::getenv("GENDX_JOBS")) jobs = std::stoul(env);
        if (jobs == 0) jobs = 1;
    }

    eval::CvConfig config;
    config.trials = args.trials;
    config.folds = args.folds;
    config.base_seed = args.seed;
    config.jobs = jobs;
    config.candidates =
        args.grid_specs.empty() ? default_grid(args.model) : build_grid(args.grid_specs);

    eval::Trainer trainer;
    if (args.model == "dgm") {
        dgm::DgmHyper base = args.dgm_hyper;
        base.prior_patient = args.prior_patient;
        trainer = make_dgm_trainer(base);
    } else if (args.model == "gmm") {
        trainer = make_gmm_trainer(args.gmm_options, args.prior_patient);
    } else if (args.model == "mlp") {
        trainer = make_mlp_trainer(args.mlp_hyper);
    } else {
        throw CLI::ValidationError("unknown model '" + args.model + "'");
    }

    const eval::CvReport report = eval::cross_validate(dataset, trainer, config);
    write_cv_report(args.out_dir, report);

    json cfg;
    cfg["command"] = "cv";
    cfg["in"] = args.in_manifest;
    cfg["out"] = args.out_dir;
    cfg["model"] = args.model;
    cfg["seed"] = args.seed;
    cfg["trials"] = args.trials;
    cfg["folds"] = args.folds;
    cfg["candidates"] = candidates_to_json(config.candidates);
    write_run_config(args.out_dir, cfg);

    if (report.selected == eval::CvReport::npos) {
        std::cout << "no candidate finished cleanly; see cv_report.json\n";
        return 1;
    }
    const eval::CandidateResult& best = report.candidates[report.selected];
    std::cout << "selected " << best.candidate.id << "  pooled BACC "
              << format_double(best.pooled.bacc) << "  ACC " << format_double(best.pooled.acc)
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ROI time-series diagnosis toolkit: conditional generative model, "
                 "frame-wise baselines, synthetic cohorts and cross-validation"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled cohort");
    synth->add_option("--out", synth_args.out_dir, "output directory")->required();
    synth->add_option("--seed", synth_args.config.seed, "generator seed");
    synth->add_option("--n-x", synth_args.config.n_x, "regions per frame");
    synth->add_option("--subjects-per-class", synth_args.config.subjects_per_class);
    synth->add_option("--frames", synth_args.config.frames_per_subject, "frames per subject");
    synth->add_option("--latent-dim", synth_args.config.latent_dim);
    synth->add_option("--regions", synth_args.regions_text,
                      "comma-separated discriminative region indices");
    synth->add_option("--effect-size", synth_args.config.effect_size);
    synth->add_option("--mixing-scale", synth_args.config.mixing_scale);
    synth->add_option("--noise-scale", synth_args.config.noise_scale);
    synth->add_flag("--shared-mixing{false}", synth_args.config.class_specific_mixing,
                    "share the mixing matrix between classes");
    synth->add_flag("--null", synth_args.null_cohort,
                    "no class signal: shared mixing and zero effect size");

    PreprocessArgs pre_args;
    CLI::App* pre = app.add_subcommand("preprocess", "bandpass and z-normalize a cohort");
    pre->add_option("--in", pre_args.in_manifest, "input manifest.json")->required();
    pre->add_option("--out", pre_args.out_dir, "output directory")->required();
    pre->add_option("--tr", pre_args.band.tr_seconds, "sampling interval, seconds");
    pre->add_option("--f-lo", pre_args.band.f_lo_hz, "band lower edge, Hz");
    pre->add_option("--f-hi", pre_args.band.f_hi_hz, "band upper edge, Hz");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a model on a labeled cohort");
    train->add_option("--in", train_args.in_manifest, "input manifest.json")->required();
    train->add_option("--out", train_args.out_dir, "output directory")->required();
    train->add_option("--model", train_args.model, "dgm | gmm | mlp")
        ->check(CLI::IsMember({"dgm", "gmm", "mlp"}));
    train->add_option("--seed", train_args.seed);
    train->add_option("--n-h", train_args.dgm_hyper.n_h, "hidden width (dgm)");
    train->add_option("--n-z", train_args.dgm_hyper.n_z, "latent dim (dgm)");
    train->add_option("--drop-prob", train_args.dgm_hyper.drop_prob, "input dropout (dgm/mlp)");
    train->add_option("--max-iters", train_args.dgm_hyper.max_iters);
    train->add_option("--batch-frames", train_args.dgm_hyper.batch_frames);
    train->add_option("--eval-every", train_args.dgm_hyper.eval_every);
    train->add_option("--plateau-iters", train_args.dgm_hyper.plateau_iters);
    train->add_option("--prior-patient", train_args.prior_patient);
    train->add_option("--mlp-n-h", train_args.mlp_hyper.n_h, "hidden width (mlp)");
    train->add_option("--components", train_args.gmm_options.components, "mixture size (gmm)");
    train->add_option("--em-iters", train_args.gmm_options.max_em_iters);
    train->add_option("--em-tol", train_args.gmm_options.rel_tol);
    train->add_option("--reg-scale", train_args.gmm_options.reg_scale);

    DiagnoseArgs diag_args;
    CLI::App* diag = app.add_subcommand("diagnose", "score a cohort with a trained checkpoint");
    diag->add_option("--in", diag_args.in_manifest, "input manifest.json")->required();
    diag->add_option("--checkpoint", diag_args.checkpoint)->required();
    diag->add_option("--out", diag_args.out_dir, "output directory")->required();
    diag->add_option("--prior-patient", diag_args.prior_patient);

    ContribArgs contrib_args;
    CLI::App* contrib =
        app.add_subcommand("contrib", "region contribution weights from a dgm checkpoint");
    contrib->add_option("--in", contrib_args.in_manifest, "input manifest.json")->required();
    contrib->add_option("--checkpoint", contrib_args.checkpoint)->required();
    contrib->add_option("--out", contrib_args.out_dir, "output directory")->required();
    contrib->add_option("--series", contrib_args.series,
                        "also dump per-frame detail, subject_id:region_index (repeatable)");

    CvArgs cv_args;
    CLI::App* cv = app.add_subcommand("cv", "repeated stratified cross-validation over a grid");
    cv->add_option("--in", cv_args.in_manifest, "input manifest.json")->required();
    cv->add_option("--out", cv_args.out_dir, "output directory")->required();
    cv->add_option("--model", cv_args.model, "dgm | gmm | mlp")
        ->check(CLI::IsMember({"dgm", "gmm", "mlp"}));
    cv->add_option("--seed", cv_args.seed);
    cv->add_option("--trials", cv_args.trials);
    cv->add_option("--folds", cv_args.folds);
    cv->add_option("--jobs", cv_args.jobs, "worker threads (or GENDX_JOBS)");
    cv->add_option("--grid", cv_args.grid_specs, "grid axis key=v1,v2,... (repeatable)");
    cv->add_option("--max-iters", cv_args.dgm_hyper.max_iters);
    cv->add_option("--batch-frames", cv_args.dgm_hyper.batch_frames);
    cv->add_option("--eval-every", cv_args.dgm_hyper.eval_every);
    cv->add_option("--plateau-iters", cv_args.dgm_hyper.plateau_iters);
    cv->add_option("--prior-patient", cv_args.prior_patient);
    cv->add_option("--em-iters", cv_args.gmm_options.max_em_iters);
    cv->add_option("--em-tol", cv_args.gmm_options.rel_tol);
    cv->add_option("--reg-scale", cv_args.gmm_options.reg_scale);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_args);
        if (pre->parsed()) return cmd_preprocess(pre_args);
        if (train->parsed()) {
            // The mlp shares --drop-prob and the loop controls with the dgm.
            train_args.mlp_hyper.drop_prob = train_args.dgm_hyper.drop_prob;
            train_args.mlp_hyper.max_iters = train_args.dgm_hyper.max_iters;
            train_args.mlp_hyper.batch_frames = train_args.dgm_hyper.batch_frames;
            train_args.mlp_hyper.eval_every = train_args.dgm_hyper.eval_every;
            train_args.mlp_hyper.plateau_iters = train_args.dgm_hyper.plateau_iters;
            return cmd_train(train_args);
        }
        if (diag->parsed()) return cmd_diagnose(diag_args);
        if (contrib->parsed()) return cmd_contrib(contrib_args);
        if (cv->parsed()) {
            cv_args.mlp_hyper.max_iters = cv_args.dgm_hyper.max_iters;
            cv_args.mlp_hyper.batch_frames = cv_args.dgm_hyper.batch_frames;
            cv_args.mlp_hyper.eval_every = cv_args.dgm_hyper.eval_every;
            cv_args.mlp_hyper.plateau_iters = cv_args.dgm_hyper.plateau_iters;
            return cmd_cv(cv_args);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
