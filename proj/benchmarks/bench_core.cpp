// Microbenchmarks for the numerical hot paths at full deployment scale (116 regions).
#include <benchmark/benchmark.h>

#include "gendx/adam.hpp"
#include "gendx/dgm.hpp"
#include "gendx/gmm.hpp"
#include "gendx/mlp_classifier.hpp"
#include "gendx/preprocess.hpp"

namespace {

using namespace gendx;

dgm::DgmModel full_scale_model() {
    dgm::DgmHyper h;  // library defaults: 116 -> 100 -> 5
    RngStream rng(1);
    return dgm::DgmModel::init(h, rng);
}

Vector random_frame(std::size_t n, RngStream& rng) {
    Vector x(n);
    for (double& v : x) v = rng.normal();
    return x;
}

void BM_FrameLossGrad(benchmark::State& state) {
    const dgm::DgmModel model = full_scale_model();
    RngStream rng(2);
    const Vector x = random_frame(model.hyper.n_x, rng);
    Vector eps(model.hyper.n_z);
    for (double& v : eps) v = rng.normal();
    Vector enc(model.encoder.param_count(), 0.0);
    Vector dec(model.decoder.param_count(), 0.0);
    for (auto _ : state) {
        const double loss =
            dgm::frame_loss_grad(model, x, ClassLabel::patient(), {}, eps, enc, dec);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(BM_FrameLossGrad);

void BM_SubjectElbo(benchmark::State& state) {
    const dgm::DgmModel model = full_scale_model();
    RngStream rng(3);
    Matrix frames(140, model.hyper.n_x);  // one full-length recording
    for (double& v : frames.data()) v = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(dgm::subject_elbo(model, frames, ClassLabel::control()));
    }
}
BENCHMARK(BM_SubjectElbo);

void BM_MlpFrameLossGrad(benchmark::State& state) {
    baselines::MlpHyper h;  // 116 -> 100 -> 1
    RngStream rng(4);
    const baselines::MlpClassifier clf = baselines::MlpClassifier::init(h, rng);
    const Vector x = random_frame(h.n_x, rng);
    Vector grads(clf.net.param_count(), 0.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            baselines::mlp_frame_loss_grad(clf, x, ClassLabel::control(), {}, grads));
    }
}
BENCHMARK(BM_MlpFrameLossGrad);

void BM_GmmLogPdf(benchmark::State& state) {
    const std::size_t d = 116, k = 5;
    RngStream rng(5);
    Vector weights(k, 1.0 / k);
    std::vector<Vector> means(k);
    std::vector<Matrix> covs;
    for (std::size_t j = 0; j < k; ++j) {
        means[j] = random_frame(d, rng);
        Matrix a(d, d);
        for (double& v : a.data()) v = 0.1 * rng.normal();
        Matrix cov(d, d);
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                double s = r == c ? 1.0 : 0.0;
                for (std::size_t i = 0; i < d; ++i) s += a(r, i) * a(c, i);
                cov(r, c) = s;
            }
        }
        covs.push_back(std::move(cov));
    }
    const baselines::GmmModel model(weights, means, covs);
    const Vector x = random_frame(d, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.log_pdf(x));
    }
}
BENCHMARK(BM_GmmLogPdf);

void BM_BandpassNormalize(benchmark::State& state) {
    RngStream rng(6);
    Matrix series(140, 116);
    for (double& v : series.data()) v = rng.normal();
    const BandpassConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(bandpass_normalize(series, cfg));
    }
}
BENCHMARK(BM_BandpassNormalize);

void BM_AdamStep(benchmark::State& state) {
    const std::size_t n = 50000;
    RngStream rng(7);
    Vector params = random_frame(n, rng);
    const Vector grads = random_frame(n, rng);
    AdamState adam(n);
    for (auto _ : state) {
        adam_step(params, grads, adam);
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_AdamStep);

}  // namespace

BENCHMARK_MAIN();
