#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gendx/label.hpp"
#include "gendx/matrix.hpp"

namespace gendx {

/// One subject's recording: T frames of n_x region values.  Label is absent
/// for cohorts awaiting diagnosis.
struct SubjectRecord {
    std::string id;
    std::optional<ClassLabel> label;
    Matrix frames;  // T x n_x
};

/// Ground-truth recipe for a synthetic cohort; kept in the dataset provenance
/// so evaluation code can score region recovery.
struct SynthConfig {
    std::size_t n_x = 16;
    std::size_t subjects_per_class = 40;
    std::size_t frames_per_subject = 100;
    std::size_t latent_dim = 4;
    std::vector<std::size_t> discriminative_regions = {3, 11};
    double effect_size = 1.0;  // between-class mean shift on discriminative regions
    double mixing_scale = 0.4;
    double noise_scale = 0.4;
    // When false both classes share the same mixing matrix; combined with
    // effect_size 0 this yields a null cohort with no class signal at all.
    bool class_specific_mixing = true;
    std::uint64_t seed = 1;

    void validate() const;
};

struct Provenance {
    std::string kind = "ingested";  // "ingested" | "synthetic"
    std::string source;
    std::string preprocessing = "raw";  // "raw" | "normalized" | "bandpassed+normalized"
    std::optional<SynthConfig> synth;
};

/// A cohort: subjects sharing one region atlas.  All frame-data reads go
/// through frames_of(), which reports to an optional access probe; the
/// cross-validation harness uses that to audit train/test isolation.
class Dataset {
public:
    using AccessProbe = std::function<void(const std::string& subject_id)>;

    Dataset() = default;
    Dataset(std::vector<SubjectRecord> subjects, std::vector<std::string> region_names,
            Provenance provenance);

    std::size_t size() const { return subjects_.size(); }
    std::size_t n_x() const { return region_names_.size(); }

    /// Metadata view (id, label, frame count).  Frame values should be read
    /// via frames_of() so the access probe sees them.
    const SubjectRecord& subject(std::size_t i) const { return subjects_.at(i); }
    const std::vector<SubjectRecord>& subjects() const { return subjects_; }

    /// Counted frame-data access.
    const Matrix& frames_of(std::size_t i) const;

    const std::vector<std::string>& region_names() const { return region_names_; }
    const Provenance& provenance() const { return provenance_; }

    std::optional<std::size_t> index_of(const std::string& id) const;

    /// New dataset holding the given subjects, in the given order.  The probe
    /// is not inherited.
    Dataset subset(std::span<const std::string> ids) const;

    void set_access_probe(AccessProbe probe) { probe_ = std::move(probe); }

    bool all_labeled() const;
    /// True when at least one control and one patient are present.
    bool has_both_classes() const;
    std::size_t count_class(ClassLabel y) const;

private:
    std::vector<SubjectRecord> subjects_;
    std::vector<std::string> region_names_;
    Provenance provenance_;
    AccessProbe probe_;
};

/// Reads a cohort from a manifest (JSON) plus one CSV per subject, paths
/// relative to the manifest.  `path` may be the manifest file or a directory
/// containing manifest.json.  Validates shape consistency and finiteness;
/// errors name the offending subject and row.
Dataset load_dataset(const std::string& path);

/// Writes manifest.json and per-subject CSVs under out_dir.  Deterministic:
/// identical datasets produce byte-identical trees.
void save_dataset(const Dataset& dataset, const std::string& out_dir);

}  // namespace gendx
