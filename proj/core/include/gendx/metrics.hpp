#pragma once

#include <cstdint>
#include <span>

#include "gendx/label.hpp"

namespace gendx::eval {

/// Binary confusion counts with patient as the positive class.
struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(std::span<const ClassLabel> predictions,
                          std::span<const ClassLabel> truths);

struct MetricReport {
    double acc = 0.0;
    double sen = 0.0;   // recall on patients
    double spec = 0.0;  // recall on controls
    double ppv = 0.0;
    double npv = 0.0;
    double bacc = 0.0;
    double mcc = 0.0;
    double f1 = 0.0;
};

/// Standard binary metrics.  Any 0/0 ratio is defined as 0 (e.g. PPV with no
/// positive predictions, MCC with an empty margin); BACC treats an absent
/// class's recall as 0 through the same rule.  Requires at least one sample.
MetricReport metrics(const ConfusionCounts& counts);

}  // namespace gendx::eval
