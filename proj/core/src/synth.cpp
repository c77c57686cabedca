#include "gendx/synth.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "gendx/rng.hpp"

namespace gendx {

void SynthConfig::validate() const {
    if (n_x == 0) throw std::invalid_argument("SynthConfig: n_x must be positive");
    if (subjects_per_class == 0) {
        throw std::invalid_argument("SynthConfig: subjects_per_class must be positive");
    }
    if (frames_per_subject == 0) {
        throw std::invalid_argument("SynthConfig: frames_per_subject must be positive");
    }
    if (latent_dim == 0) throw std::invalid_argument("SynthConfig: latent_dim must be positive");
    if (discriminative_regions.empty()) {
        throw std::invalid_argument("SynthConfig: discriminative_regions must be nonempty");
    }
    std::set<std::size_t> seen;
    for (std::size_t r : discriminative_regions) {
        if (r >= n_x) {
            throw std::invalid_argument("SynthConfig: discriminative region " + std::to_string(r) +
                                        " out of range for n_x " + std::to_string(n_x));
        }
        if (!seen.insert(r).second) {
            throw std::invalid_argument("SynthConfig: duplicate discriminative region " +
                                        std::to_string(r));
        }
    }
    if (!(effect_size >= 0.0)) throw std::invalid_argument("SynthConfig: effect_size must be >= 0");
    if (!(mixing_scale > 0.0)) throw std::invalid_argument("SynthConfig: mixing_scale must be > 0");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("SynthConfig: noise_scale must be >= 0");
}

namespace {

std::string padded(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03zu", prefix, i);
    return buf;
}

}  // namespace

Dataset synth_generate(const SynthConfig& config) {
    config.validate();
    const std::size_t n_x = config.n_x;
    const std::size_t n_z = config.latent_dim;

    // Class-conditional mixing matrices and means.  The base mixing is shared;
    // discriminative rows are redrawn for the patient class when configured.
    RngStream param_rng(derive_seed(config.seed, {1}));
    Matrix mixing0(n_x, n_z);
    for (double& a : mixing0.data()) a = config.mixing_scale * param_rng.normal();
    Matrix mixing1 = mixing0;
    if (config.class_specific_mixing) {
        for (std::size_t r : config.discriminative_regions) {
            for (std::size_t j = 0; j < n_z; ++j) {
                mixing1(r, j) = config.mixing_scale * param_rng.normal();
            }
        }
    }
    Vector mean0(n_x, 0.0), mean1(n_x, 0.0);
    for (std::size_t r : config.discriminative_regions) {
        mean0[r] = -0.5 * config.effect_size;
        mean1[r] = +0.5 * config.effect_size;
    }

    std::vector<SubjectRecord> subjects;
    subjects.reserve(2 * config.subjects_per_class);
    Vector latent(n_z);
    for (int cls = 0; cls < 2; ++cls) {
        const Matrix& mixing = cls == 0 ? mixing0 : mixing1;
        const Vector& mean = cls == 0 ? mean0 : mean1;
        for (std::size_t s = 0; s < config.subjects_per_class; ++s) {
            RngStream rng(derive_seed(config.seed, {2, static_cast<std::uint64_t>(cls), s}));
            Matrix frames(config.frames_per_subject, n_x);
            for (std::size_t t = 0; t < config.frames_per_subject; ++t) {
                for (std::size_t j = 0; j < n_z; ++j) latent[j] = rng.normal();
                for (std::size_t k = 0; k < n_x; ++k) {
                    double v = mean[k];
                    for (std::size_t j = 0; j < n_z; ++j) v += mixing(k, j) * latent[j];
                    v += config.noise_scale * rng.normal();
                    frames(t, k) = v;
                }
            }
            SubjectRecord rec;
            rec.id = padded(cls == 0 ? "con-" : "pat-", s);
            rec.label = cls == 0 ? ClassLabel::control() : ClassLabel::patient();
            rec.frames = std::move(frames);
            subjects.push_back(std::move(rec));
        }
    }

    // Pooled per-region z-normalization across the whole cohort.
    const double total_frames =
        static_cast<double>(2 * config.subjects_per_class * config.frames_per_subject);
    Vector mean_acc(n_x, 0.0), sq_acc(n_x, 0.0);
    for (const SubjectRecord& rec : subjects) {
        for (std::size_t t = 0; t < rec.frames.rows(); ++t) {
            for (std::size_t k = 0; k < n_x; ++k) {
                mean_acc[k] += rec.frames(t, k);
                sq_acc[k] += rec.frames(t, k) * rec.frames(t, k);
            }
        }
    }
    for (std::size_t k = 0; k < n_x; ++k) {
        mean_acc[k] /= total_frames;
        const double var = sq_acc[k] / total_frames - mean_acc[k] * mean_acc[k];
        if (!(var > 1e-12)) {
            throw std::runtime_error("synth_generate: degenerate pooled variance in region " +
                                     std::to_string(k));
        }
        sq_acc[k] = 1.0 / std::sqrt(var);  // now holds inverse sd
    }
    for (SubjectRecord& rec : subjects) {
        for (std::size_t t = 0; t < rec.frames.rows(); ++t) {
            for (std::size_t k = 0; k < n_x; ++k) {
                rec.frames(t, k) = (rec.frames(t, k) - mean_acc[k]) * sq_acc[k];
            }
        }
    }

    std::vector<std::string> region_names;
    region_names.reserve(n_x);
    for (std::size_t k = 0; k < n_x; ++k) region_names.push_back(padded("r", k));

    Provenance prov;
    prov.kind = "synthetic";
    prov.source = "synth_generate";
    prov.preprocessing = "normalized";
    prov.synth = config;
    return Dataset(std::move(subjects), std::move(region_names), std::move(prov));
}

}  // namespace gendx
