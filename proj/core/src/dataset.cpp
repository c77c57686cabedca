#include "gendx/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "gendx/textio.hpp"
#include "internal_json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gendx {

namespace detail {

json synth_to_json(const SynthConfig& cfg) {
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

SynthConfig synth_from_json(const json& j) {
    SynthConfig cfg;
    cfg.n_x = j.at("n_x").get<std::size_t>();
    cfg.subjects_per_class = j.at("subjects_per_class").get<std::size_t>();
    cfg.frames_per_subject = j.at("frames_per_subject").get<std::size_t>();
    cfg.latent_dim = j.at("latent_dim").get<std::size_t>();
    cfg.discriminative_regions = j.at("discriminative_regions").get<std::vector<std::size_t>>();
    cfg.effect_size = j.at("effect_size").get<double>();
    cfg.mixing_scale = j.at("mixing_scale").get<double>();
    cfg.noise_scale = j.at("noise_scale").get<double>();
    cfg.class_specific_mixing = j.at("class_specific_mixing").get<bool>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

json provenance_to_json(const Provenance& p) {
    json j;
    j["kind"] = p.kind;
    j["source"] = p.source;
    j["preprocessing"] = p.preprocessing;
    if (p.synth) j["synth"] = synth_to_json(*p.synth);
    return j;
}

Provenance provenance_from_json(const json& j) {
    Provenance p;
    p.kind = j.value("kind", "ingested");
    p.source = j.value("source", "");
    p.preprocessing = j.value("preprocessing", "raw");
    if (j.contains("synth") && !j["synth"].is_null()) p.synth = synth_from_json(j["synth"]);
    return p;
}

}  // namespace detail

Dataset::Dataset(std::vector<SubjectRecord> subjects, std::vector<std::string> region_names,
                 Provenance provenance)
    : subjects_(std::move(subjects)), region_names_(std::move(region_names)),
      provenance_(std::move(provenance)) {
    if (region_names_.empty()) {
        throw std::invalid_argument("Dataset: region_names must be nonempty");
    }
    std::unordered_set<std::string> seen;
    for (const SubjectRecord& s : subjects_) {
        if (s.id.empty()) throw std::invalid_argument("Dataset: subject with empty id");
        if (!seen.insert(s.id).second) {
            throw std::invalid_argument("Dataset: duplicate subject id '" + s.id + "'");
        }
        if (s.frames.rows() == 0) {
            throw std::invalid_argument("Dataset: subject '" + s.id + "' has no frames");
        }
        if (s.frames.cols() != region_names_.size()) {
            throw std::invalid_argument("Dataset: subject '" + s.id + "' has " +
                                        std::to_string(s.frames.cols()) + " regions, expected " +
                                        std::to_string(region_names_.size()));
        }
    }
}

const Matrix& Dataset::frames_of(std::size_t i) const {
    const SubjectRecord& s = subjects_.at(i);
    if (probe_) probe_(s.id);
    return s.frames;
}

std::optional<std::size_t> Dataset::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
        if (subjects_[i].id == id) return i;
    }
    return std::nullopt;
}

Dataset Dataset::subset(std::span<const std::string> ids) const {
    std::vector<SubjectRecord> picked;
    picked.reserve(ids.size());
    for (const std::string& id : ids) {
        const auto idx = index_of(id);
        if (!idx) throw std::invalid_argument("Dataset::subset: unknown subject id '" + id + "'");
        picked.push_back(subjects_[*idx]);
    }
    return Dataset(std::move(picked), region_names_, provenance_);
}

bool Dataset::all_labeled() const {
    for (const SubjectRecord& s : subjects_) {
        if (!s.label) return false;
    }
    return true;
}

bool Dataset::has_both_classes() const {
    return count_class(ClassLabel::control()) > 0 && count_class(ClassLabel::patient()) > 0;
}

std::size_t Dataset::count_class(ClassLabel y) const {
    std::size_t n = 0;
    for (const SubjectRecord& s : subjects_) {
        if (s.label && *s.label == y) ++n;
    }
    return n;
}

namespace {

constexpr const char* kFormatTag = "gendx.dataset";

// row/col are reported 1-based to match editor line numbers.
double parse_csv_value(const std::string& field, const std::string& subject_id, std::size_t row,
                       std::size_t col) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw std::runtime_error("subject '" + subject_id + "': unparseable value '" + field +
                                 "' at row " + std::to_string(row + 1) + ", column " +
                                 std::to_string(col + 1));
    }
    if (!std::isfinite(v)) {
        throw std::runtime_error("subject '" + subject_id + "': non-finite value at row " +
                                 std::to_string(row + 1) + ", column " + std::to_string(col + 1));
    }
    return v;
}

Matrix load_subject_csv(const fs::path& path, const std::string& subject_id, std::size_t n_x) {
    std::istringstream in(read_file(path.string()));
    Vector values;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != n_x) {
            throw std::runtime_error("subject '" + subject_id + "': row " +
                                     std::to_string(row + 1) + " has " +
                                     std::to_string(fields.size()) + " values, expected " +
                                     std::to_string(n_x));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            values.push_back(parse_csv_value(fields[c], subject_id, row, c));
        }
        ++row;
    }
    if (row == 0) throw std::runtime_error("subject '" + subject_id + "': empty frame file");
    return Matrix(row, n_x, std::move(values));
}

std::string subject_file_name(const std::string& id) {
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        if (!ok) {
            throw std::invalid_argument("subject id '" + id +
                                        "' contains characters unsuitable for file names");
        }
    }
    return id + ".csv";
}

}  // namespace

Dataset load_dataset(const std::string& path) {
    // Accept either the manifest itself or the cohort directory that holds it.
    std::string manifest_path = path;
    if (std::filesystem::is_directory(path)) {
        manifest_path = (std::filesystem::path(path) / "manifest.json").string();
    }
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("manifest '" + manifest_path + "': " + e.what());
    }
    if (manifest.value("format", "") != kFormatTag) {
        throw std::runtime_error("manifest '" + manifest_path + "': missing or wrong format tag");
    }
    if (manifest.value("version", 0) != 1) {
        throw std::runtime_error("manifest '" + manifest_path + "': unsupported version");
    }
    std::vector<std::string> region_names;
    std::size_t n_x = 0;
    std::vector<SubjectRecord> subjects;
    try {
        region_names = manifest.at("region_names").get<std::vector<std::string>>();
        n_x = manifest.at("n_x").get<std::size_t>();
        if (n_x != region_names.size()) {
            throw std::runtime_error("n_x does not match region_names");
        }
        const fs::path base = fs::path(manifest_path).parent_path();
        for (const json& js : manifest.at("subjects")) {
            SubjectRecord rec;
            rec.id = js.at("id").get<std::string>();
            if (js.contains("label") && !js["label"].is_null()) {
                try {
                    rec.label = ClassLabel::from_int(js["label"].get<int>());
                } catch (const std::exception& e) {
                    throw std::runtime_error("subject '" + rec.id + "': " + e.what());
                }
            }
            const fs::path csv = base / js.at("path").get<std::string>();
            rec.frames = load_subject_csv(csv, rec.id, n_x);
            subjects.push_back(std::move(rec));
        }
        return Dataset(std::move(subjects), region_names, detail::provenance_from_json(manifest));
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest '" + manifest_path + "': " + e.what());
    }
}

void save_dataset(const Dataset& dataset, const std::string& out_dir) {
    json manifest = detail::provenance_to_json(dataset.provenance());
    manifest["format"] = kFormatTag;
    manifest["version"] = 1;
    manifest["n_x"] = dataset.n_x();
    manifest["region_names"] = dataset.region_names();

    json subjects = json::array();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const SubjectRecord& s = dataset.subject(i);
        const std::string file = subject_file_name(s.id);

        std::string csv;
        for (std::size_t t = 0; t < s.frames.rows(); ++t) {
            const auto row = s.frames.row(t);
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) csv += ',';
                csv += format_double(row[c]);
            }
            csv += '\n';
        }
        atomic_write_file((fs::path(out_dir) / file).string(), csv);

        json js;
        js["id"] = s.id;
        js["label"] = s.label ? json(s.label->value()) : json(nullptr);
        js["path"] = file;
        subjects.push_back(std::move(js));
    }
    manifest["subjects"] = std::move(subjects);
    atomic_write_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace gendx
