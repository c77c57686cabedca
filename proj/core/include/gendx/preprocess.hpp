#pragma once

#include <string>
#include <vector>

#include "gendx/dataset.hpp"
#include "gendx/matrix.hpp"

namespace gendx {

struct BandpassConfig {
    double tr_seconds = 3.0;  // sampling interval
    double f_lo_hz = 0.01;
    double f_hi_hz = 0.1;

    void validate(std::size_t frames) const;
};

/// Per-region temporal bandpass followed by z-normalization.
///
/// The filter is an ideal DFT mask: frequency bins whose |frequency| lies
/// outside [f_lo, f_hi] (the DC bin included) are zeroed and the series is
/// inverse-transformed; conjugate symmetry keeps the result real.  Each
/// region is then scaled to mean 0, variance 1 (population variance).  A
/// region whose filtered variance falls below 1e-12 becomes all zeros and is
/// reported in `warnings`.
Matrix bandpass_normalize(const Matrix& series, const BandpassConfig& config,
                          std::vector<std::string>* warnings = nullptr);

/// Applies bandpass_normalize to every subject; provenance records the step.
/// Warnings, if collected, are prefixed with the subject id.
Dataset preprocess_dataset(const Dataset& dataset, const BandpassConfig& config,
                           std::vector<std::string>* warnings = nullptr);

}  // namespace gendx
