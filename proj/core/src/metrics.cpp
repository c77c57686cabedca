#include "gendx/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace gendx::eval {

ConfusionCounts confusion(std::span<const ClassLabel> predictions,
                          std::span<const ClassLabel> truths) {
    if (predictions.size() != truths.size()) {
        throw std::invalid_argument("confusion: predictions and truths differ in length");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool pred_pos = predictions[i].is_patient();
        const bool true_pos = truths[i].is_patient();
        if (pred_pos && true_pos) ++c.tp;
        else if (!pred_pos && !true_pos) ++c.tn;
        else if (pred_pos) ++c.fp;
        else ++c.fn;
    }
    return c;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

MetricReport metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw std::invalid_argument("metrics: no samples");
    const double tp = static_cast<double>(c.tp);
    const double tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn);

    MetricReport r;
    r.acc = (tp + tn) / static_cast<double>(c.total());
    r.sen = ratio(tp, tp + fn);
    r.spec = ratio(tn, tn + fp);
    r.ppv = ratio(tp, tp + fp);
    r.npv = ratio(tn, tn + fn);
    r.bacc = 0.5 * (r.sen + r.spec);
    const double denom2 = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    r.mcc = denom2 == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(denom2);
    r.f1 = ratio(2.0 * r.sen * r.ppv, r.sen + r.ppv);
    return r;
}

}  // namespace gendx::eval
