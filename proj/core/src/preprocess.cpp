#include "gendx/preprocess.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace gendx {

void BandpassConfig::validate(std::size_t frames) const {
    if (!(tr_seconds > 0.0)) throw std::invalid_argument("bandpass: TR must be positive");
    if (!(f_lo_hz > 0.0)) throw std::invalid_argument("bandpass: f_lo must be positive");
    if (!(f_lo_hz < f_hi_hz)) throw std::invalid_argument("bandpass: f_lo must be below f_hi");
    const double nyquist = 0.5 / tr_seconds;
    if (!(f_hi_hz < nyquist)) {
        throw std::invalid_argument("bandpass: f_hi must be below the Nyquist frequency " +
                                    std::to_string(nyquist));
    }
    if (frames < 8) {
        throw std::invalid_argument("bandpass: need at least 8 frames, got " +
                                    std::to_string(frames));
    }
}

Matrix bandpass_normalize(const Matrix& series, const BandpassConfig& config,
                          std::vector<std::string>* warnings) {
    config.validate(series.rows());
    const std::size_t T = series.rows();
    const std::size_t n_x = series.cols();
    const double dT = static_cast<double>(T);

    // Twiddle table shared by the forward and inverse transforms.  The
    // transform is the plain O(T^2) DFT; recordings are short enough that
    // this stays cheap and it keeps the mask semantics exact.
    std::vector<std::complex<double>> twiddle(T);
    for (std::size_t j = 0; j < T; ++j) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / dT;
        twiddle[j] = {std::cos(angle), std::sin(angle)};
    }

    std::vector<bool> keep(T);
    for (std::size_t f = 0; f < T; ++f) {
        const std::size_t folded = std::min(f, T - f);  // |frequency| index
        const double freq = static_cast<double>(folded) / (dT * config.tr_seconds);
        keep[f] = freq >= config.f_lo_hz && freq <= config.f_hi_hz;
    }

    Matrix out(T, n_x);
    std::vector<std::complex<double>> spectrum(T);
    Vector filtered(T);
    for (std::size_t k = 0; k < n_x; ++k) {
        for (std::size_t f = 0; f < T; ++f) {
            if (!keep[f]) {
                spectrum[f] = 0.0;
                continue;
            }
            std::complex<double> acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                acc += series(t, k) * twiddle[(f * t) % T];
            }
            spectrum[f] = acc;
        }
        for (std::size_t t = 0; t < T; ++t) {
            std::complex<double> acc = 0.0;
            for (std::size_t f = 0; f < T; ++f) {
                if (keep[f]) acc += spectrum[f] * std::conj(twiddle[(f * t) % T]);
            }
            filtered[t] = acc.real() / dT;
        }

        double mean = 0.0;
        for (double v : filtered) mean += v;
        mean /= dT;
        double var = 0.0;
        for (double v : filtered) var += (v - mean) * (v - mean);
        var /= dT;

        if (var < 1e-12) {
            for (std::size_t t = 0; t < T; ++t) out(t, k) = 0.0;
            if (warnings) {
                warnings->push_back("region " + std::to_string(k) +
                                    ": variance below threshold after filtering; zeroed");
            }
        } else {
            const double inv_sd = 1.0 / std::sqrt(var);
            for (std::size_t t = 0; t < T; ++t) out(t, k) = (filtered[t] - mean) * inv_sd;
        }
    }
    return out;
}

Dataset preprocess_dataset(const Dataset& dataset, const BandpassConfig& config,
                           std::vector<std::string>* warnings) {
    std::vector<SubjectRecord> out;
    out.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const SubjectRecord& s = dataset.subject(i);
        std::vector<std::string> local;
        SubjectRecord rec;
        rec.id = s.id;
        rec.label = s.label;
        rec.frames = bandpass_normalize(dataset.frames_of(i), config, warnings ? &local : nullptr);
        if (warnings) {
            for (const std::string& w : local) warnings->push_back(s.id + ": " + w);
        }
        out.push_back(std::move(rec));
    }
    Provenance prov = dataset.provenance();
    prov.preprocessing = "bandpassed+normalized";
    return Dataset(std::move(out), dataset.region_names(), std::move(prov));
}

}  // namespace gendx
