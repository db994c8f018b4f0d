#include <benchmark/benchmark.h>

#include "msr/appearance.hpp"
#include "msr/mirror_env.hpp"
#include "msr/nn.hpp"
#include "msr/novelty.hpp"
#include "msr/random.hpp"

using namespace msr;

namespace {

const EnvConfig kEnv{};
const FaceStyle kA = FaceStyle::preset(FaceStyleId::A);

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
    return m;
}

nn::Network model_net(ModelKind kind) {
    return make_model(kind, kEnv.height, kEnv.width, Architecture::default_for(kind), 1).net;
}

void BM_Forward(benchmark::State& state, ModelKind kind) {
    const nn::Network net = model_net(kind);
    const Eigen::MatrixXd x = random_batch(static_cast<Eigen::Index>(net.specs().front().input_size), state.range(0), 2);
    for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ForwardBackward(benchmark::State& state, ModelKind kind) {
    const nn::Network net = model_net(kind);
    const Eigen::MatrixXd x = random_batch(static_cast<Eigen::Index>(net.specs().front().input_size), state.range(0), 3);
    const Eigen::MatrixXd y = random_batch(static_cast<Eigen::Index>(net.specs().back().output_size), state.range(0), 4);
    for (auto _ : state) {
        const auto cache = net.forward(x);
        benchmark::DoNotOptimize(net.backward(cache, nn::mse_gradient(cache.output(), y)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_AdamStep(benchmark::State& state) {
    nn::Network net = model_net(ModelKind::Autoencoder);
    nn::Gradients g = net.zero_gradients();
    for (auto& w : g.weights) w.setConstant(1e-3);
    nn::AdamState st = nn::AdamState::fresh(net);
    for (auto _ : state) nn::adam_step(net, g, st, 1e-6);
}

void BM_RenderFace(benchmark::State& state) {
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(render_face(kEnv, kA, {1.5, -2.0}, ++seed));
}

struct SaliencyInputs {
    Image observed, predicted;
    ErrorStats stats;
    DetectorConfig cfg;
};

SaliencyInputs saliency_inputs() {
    SaliencyInputs in;
    in.predicted = render_face(kEnv, kA, {0, 0});
    in.observed = inject_mark(render_face(kEnv, kA, {0, 0}, 7), {{28, 24}, 14, 14, 0.9}).first;
    std::vector<Raster<double>> errs;
    for (std::uint64_t s = 0; s < 16; ++s) {
        const Image frame = render_face(kEnv, kA, {0, 0}, s);
        Raster<double> e(frame.height(), frame.width());
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::abs(frame[i] - in.predicted[i]);
        errs.push_back(std::move(e));
    }
    in.stats = calibrate_stats(errs, 1e-4);
    in.cfg.max_pixel_value = 255.0;
    in.cfg.divisor = SaliencyDivisor::StdDev;
    return in;
}

void BM_SaliencyMap(benchmark::State& state) {
    const SaliencyInputs in = saliency_inputs();
    for (auto _ : state) benchmark::DoNotOptimize(saliency(in.observed, in.predicted, in.stats, in.cfg));
}

void BM_DetectRegions(benchmark::State& state) {
    const SaliencyInputs in = saliency_inputs();
    const SaliencyMap s = saliency(in.observed, in.predicted, in.stats, in.cfg);
    for (auto _ : state) benchmark::DoNotOptimize(pick_mark(detect_regions(s, in.cfg)));
}

void BM_ConnectedComponents(benchmark::State& state) {
    Rng rng(5);
    Mask m(64, 64);
    for (auto& v : m.pixels()) v = rng.uniform() < 0.4;
    for (auto _ : state) benchmark::DoNotOptimize(connected_components(m, 8));
}

void BM_TemplateMatch(benchmark::State& state) {
    const Image frame = render_face(kEnv, kA, {2, 1}, 3);
    Image templ(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)));
    for (int r = 0; r < templ.height(); ++r)
        for (int c = 0; c < templ.width(); ++c) templ(r, c) = frame(20 + r, 20 + c);
    for (auto _ : state) benchmark::DoNotOptimize(crop_by_template(frame, templ));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Forward, decoder, ModelKind::Decoder)->Arg(1)->Arg(128);
BENCHMARK_CAPTURE(BM_Forward, autoencoder, ModelKind::Autoencoder)->Arg(1)->Arg(128);
BENCHMARK_CAPTURE(BM_ForwardBackward, decoder, ModelKind::Decoder)->Arg(128);
BENCHMARK_CAPTURE(BM_ForwardBackward, autoencoder, ModelKind::Autoencoder)->Arg(128);
BENCHMARK(BM_AdamStep);
BENCHMARK(BM_RenderFace);
BENCHMARK(BM_SaliencyMap);
BENCHMARK(BM_DetectRegions);
BENCHMARK(BM_ConnectedComponents);
BENCHMARK(BM_TemplateMatch)->Arg(14)->Arg(32);
BENCHMARK_MAIN();
