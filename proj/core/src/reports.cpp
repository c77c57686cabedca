#include "gendx/reports.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "gendx/textio.hpp"
#include "internal_json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gendx {

namespace {

json metrics_to_json(const eval::MetricReport& m) {
    json j;
    j["acc"] = m.acc;
    j["sen"] = m.sen;
    j["spec"] = m.spec;
    j["ppv"] = m.ppv;
    j["npv"] = m.npv;
    j["bacc"] = m.bacc;
    j["mcc"] = m.mcc;
    j["f1"] = m.f1;
    return j;
}

json counts_to_json(const eval::ConfusionCounts& c) {
    json j;
    j["tp"] = c.tp;
    j["tn"] = c.tn;
    j["fp"] = c.fp;
    j["fn"] = c.fn;
    return j;
}

// RFC 4180 quoting for free-form fields (candidate ids can embed commas).
std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string metrics_csv_fields(const eval::MetricReport& m) {
    std::string out;
    for (double v : {m.acc, m.sen, m.spec, m.ppv, m.npv, m.bacc, m.mcc, m.f1}) {
        out += ',';
        out += format_double(v);
    }
    return out;
}

json diagnosis_to_json(const eval::DiagnosisResult& r) {
    json j;
    j["score_control"] = r.score_control;
    j["score_patient"] = r.score_patient;
    j["posterior_control"] = r.posterior_control;
    j["posterior_patient"] = r.posterior_patient;
    j["predicted"] = r.predicted.value();
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace

void write_dgm_train_log(const std::string& path, const dgm::TrainLog& log) {
    json j;
    j["objective"] = "dataset_elbo";
    j["iterations_run"] = log.iterations_run;
    j["best_iteration"] = log.best_iteration;
    j["best_train_bacc"] = log.best_train_bacc;
    j["final_dataset_elbo"] = log.final_dataset_elbo;
    j["plateau_stopped"] = log.plateau_stopped;
    json cps = json::array();
    for (const auto& cp : log.checkpoints) {
        cps.push_back(json{{"iteration", cp.iteration},
                           {"dataset_elbo", cp.dataset_elbo},
                           {"train_bacc", cp.train_bacc}});
    }
    j["checkpoints"] = std::move(cps);
    write_json_file(path, j);
}

void write_mlp_train_log(const std::string& path, const baselines::MlpTrainLog& log) {
    json j;
    j["objective"] = "cross_entropy";
    j["iterations_run"] = log.iterations_run;
    j["best_iteration"] = log.best_iteration;
    j["best_train_bacc"] = log.best_train_bacc;
    j["final_cross_entropy"] = log.final_cross_entropy;
    j["plateau_stopped"] = log.plateau_stopped;
    json cps = json::array();
    for (const auto& cp : log.checkpoints) {
        cps.push_back(json{{"iteration", cp.iteration},
                           {"cross_entropy", cp.cross_entropy},
                           {"train_bacc", cp.train_bacc}});
    }
    j["checkpoints"] = std::move(cps);
    write_json_file(path, j);
}

void write_diagnosis_report(const std::string& out_dir, const std::vector<DiagnosisRow>& rows) {
    const bool all_labeled =
        std::all_of(rows.begin(), rows.end(), [](const DiagnosisRow& r) { return r.truth.has_value(); });

    json j;
    json subjects = json::array();
    std::string csv =
        "subject_id,truth,predicted,score_control,score_patient,posterior_control,"
        "posterior_patient\n";
    std::vector<ClassLabel> preds, truths;
    for (const DiagnosisRow& row : rows) {
        json js = diagnosis_to_json(row.result);
        js["subject_id"] = row.subject_id;
        js["truth"] = row.truth ? json(row.truth->value()) : json(nullptr);
        subjects.push_back(std::move(js));

        csv += csv_field(row.subject_id);
        csv += ',';
        if (row.truth) csv += std::to_string(row.truth->value());
        csv += ',';
        csv += std::to_string(row.result.predicted.value());
        for (double v : {row.result.score_control, row.result.score_patient,
                         row.result.posterior_control, row.result.posterior_patient}) {
            csv += ',';
            csv += format_double(v);
        }
        csv += '\n';
        if (row.truth) {
            preds.push_back(row.result.predicted);
            truths.push_back(*row.truth);
        }
    }
    j["subjects"] = std::move(subjects);
    if (all_labeled && !rows.empty()) {
        const eval::ConfusionCounts counts = eval::confusion(preds, truths);
        j["confusion"] = counts_to_json(counts);
        j["metrics"] = metrics_to_json(eval::metrics(counts));
    }
    write_json_file((fs::path(out_dir) / "diagnosis.json").string(), j);
    atomic_write_file((fs::path(out_dir) / "diagnosis.csv").string(), csv);
}

void write_contribution_report(const std::string& out_dir, const ContributionReport& report) {
    const std::size_t n = report.weights.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return report.weights[a] > report.weights[b];
    });

    json j;
    json regions = json::array();
    for (std::size_t k = 0; k < n; ++k) {
        regions.push_back(json{{"region_index", k},
                               {"region_name", report.region_names[k]},
                               {"weight", report.weights[k]}});
    }
    j["regions"] = std::move(regions);
    json ranked = json::array();
    for (std::size_t r = 0; r < n; ++r) ranked.push_back(order[r]);
    j["ranking"] = std::move(ranked);

    std::string csv = "rank,region_index,region_name,weight\n";
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t k = order[r];
        csv += std::to_string(r + 1) + ',' + std::to_string(k) + ',' +
               csv_field(report.region_names[k]) + ',' + format_double(report.weights[k]) + '\n';
    }
    std::string top = "rank,region_index,region_name,weight\n";
    for (std::size_t r = 0; r < std::min<std::size_t>(n, 10); ++r) {
        const std::size_t k = order[r];
        top += std::to_string(r + 1) + ',' + std::to_string(k) + ',' +
               csv_field(report.region_names[k]) + ',' + format_double(report.weights[k]) + '\n';
    }
    write_json_file((fs::path(out_dir) / "contributions.json").string(), j);
    atomic_write_file((fs::path(out_dir) / "contributions.csv").string(), csv);
    atomic_write_file((fs::path(out_dir) / "top_regions.csv").string(), top);
}

void write_cv_report(const std::string& out_dir, const eval::CvReport& report) {
    json j;
    j["trials"] = report.trials;
    j["folds"] = report.folds;
    j["base_seed"] = report.base_seed;
    j["selected"] = report.selected == eval::CvReport::npos
                        ? json(nullptr)
                        : json(report.candidates[report.selected].candidate.id);

    std::string cells_csv =
        "candidate_id,trial,fold,subject_id,truth,predicted,posterior_patient,error\n";
    std::string summary_csv =
        "candidate_id,failed,selected,acc,sen,spec,ppv,npv,bacc,mcc,f1,trial_mean_bacc,"
        "trial_sd_bacc\n";

    json candidates = json::array();
    for (std::size_t c = 0; c < report.candidates.size(); ++c) {
        const eval::CandidateResult& cand = report.candidates[c];
        json jc;
        jc["id"] = cand.candidate.id;
        jc["params"] = cand.candidate.params;
        jc["failed"] = cand.failed;
        if (!cand.failed) {
            jc["pooled_counts"] = counts_to_json(cand.pooled_counts);
            jc["pooled"] = metrics_to_json(cand.pooled);
            json per_trial = json::array();
            for (const eval::MetricReport& m : cand.per_trial) per_trial.push_back(metrics_to_json(m));
            jc["per_trial"] = std::move(per_trial);
        }
        json jcells = json::array();
        for (const eval::CvCell& cell : cand.cells) {
            json jcell;
            jcell["trial"] = cell.trial;
            jcell["fold"] = cell.fold;
            if (!cell.error.empty()) jcell["error"] = cell.error;
            json diags = json::array();
            for (const eval::SubjectDiagnosis& sd : cell.diagnoses) {
                json jd = diagnosis_to_json(sd.result);
                jd["subject_id"] = sd.subject_id;
                jd["truth"] = sd.truth ? json(sd.truth->value()) : json(nullptr);
                diags.push_back(std::move(jd));

                cells_csv += csv_field(cand.candidate.id) + ',' + std::to_string(cell.trial) +
                             ',' + std::to_string(cell.fold) + ',' + csv_field(sd.subject_id) +
                             ',' +
                             (sd.truth ? std::to_string(sd.truth->value()) : std::string()) + ',' +
                             std::to_string(sd.result.predicted.value()) + ',' +
                             format_double(sd.result.posterior_patient) + ",\n";
            }
            if (!cell.error.empty()) {
                cells_csv += csv_field(cand.candidate.id) + ',' + std::to_string(cell.trial) +
                             ',' + std::to_string(cell.fold) + ",,,,," + csv_field(cell.error) +
                             '\n';
            }
            jcell["diagnoses"] = std::move(diags);
            jcells.push_back(std::move(jcell));
        }
        jc["cells"] = std::move(jcells);
        candidates.push_back(std::move(jc));

        double mean_bacc = 0.0, sd_bacc = 0.0;
        if (!cand.failed && !cand.per_trial.empty()) {
            for (const eval::MetricReport& m : cand.per_trial) mean_bacc += m.bacc;
            mean_bacc /= static_cast<double>(cand.per_trial.size());
            for (const eval::MetricReport& m : cand.per_trial) {
                sd_bacc += (m.bacc - mean_bacc) * (m.bacc - mean_bacc);
            }
            sd_bacc = std::sqrt(sd_bacc / static_cast<double>(cand.per_trial.size()));
        }
        summary_csv += csv_field(cand.candidate.id) + ',' + (cand.failed ? "1" : "0") + ',' +
                       (c == report.selected ? "1" : "0");
        if (cand.failed) {
            summary_csv += ",,,,,,,,,,\n";
        } else {
            summary_csv += metrics_csv_fields(cand.pooled) + ',' + format_double(mean_bacc) + ',' +
                           format_double(sd_bacc) + '\n';
        }
    }
    j["candidates"] = std::move(candidates);

    write_json_file((fs::path(out_dir) / "cv_report.json").string(), j);
    atomic_write_file((fs::path(out_dir) / "cv_cells.csv").string(), cells_csv);
    atomic_write_file((fs::path(out_dir) / "cv_summary.csv").string(), summary_csv);
}

}  // namespace gendx
