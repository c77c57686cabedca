#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gendx/cross_validation.hpp"
#include "gendx/dgm.hpp"
#include "gendx/mlp_classifier.hpp"

namespace gendx {

/// All writers are deterministic: sorted JSON keys, round-trip float
/// formatting, no timestamps — identical inputs give identical bytes.

void write_dgm_train_log(const std::string& path, const dgm::TrainLog& log);
void write_mlp_train_log(const std::string& path, const baselines::MlpTrainLog& log);

struct DiagnosisRow {
    std::string subject_id;
    std::optional<ClassLabel> truth;
    eval::DiagnosisResult result;
};

/// diagnosis.json and diagnosis.csv under out_dir; a metrics block is
/// included when every subject has a reference label.
void write_diagnosis_report(const std::string& out_dir, const std::vector<DiagnosisRow>& rows);

struct ContributionReport {
    std::vector<std::string> region_names;
    Vector weights;  // W(k) in region order
};

/// contributions.json, contributions.csv (all regions, descending weight)
/// and top_regions.csv (the ten strongest) under out_dir.
void write_contribution_report(const std::string& out_dir, const ContributionReport& report);

/// cv_report.json, cv_cells.csv (one row per held-out diagnosis) and
/// cv_summary.csv (one row per candidate) under out_dir.
void write_cv_report(const std::string& out_dir, const eval::CvReport& report);

}  // namespace gendx
