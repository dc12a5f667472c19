#include <benchmark/benchmark.h>

#include <darkisp/linear_isp.hpp>
#include <darkisp/pipeline.hpp>
#include <darkisp/rng.hpp>
#include <darkisp/self_boost.hpp>
#include <darkisp/tensor.hpp>

using namespace darkisp;

namespace {

Tensor random_tensor(const Shape& s, std::uint64_t seed, double lo,
                     double hi) {
    Rng rng(seed);
    Tensor t = make_tensor(s, true);
    for (double& v : t->value) v = rng.uniform(lo, hi);
    return t;
}

BayerImage random_bayer(std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    BayerImage img;
    img.width = w;
    img.height = h;
    img.planes.resize(4 * h * w);
    for (double& v : img.planes) v = rng.uniform(0.02, 0.95);
    return img;
}

void BM_Conv2dForward(benchmark::State& state) {
    const std::size_t side = static_cast<std::size_t>(state.range(0));
    Tensor x = random_tensor({4, side, side}, 1, 0, 1);
    Tensor w = random_tensor({16, 4, 3, 3}, 2, -0.3, 0.3);
    Tensor b = random_tensor({16}, 3, -0.1, 0.1);
    for (auto _ : state) {
        Graph g;
        benchmark::DoNotOptimize(g.conv2d_3x3(x, w, b));
    }
    state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv2dBackward(benchmark::State& state) {
    const std::size_t side = static_cast<std::size_t>(state.range(0));
    Tensor x = random_tensor({4, side, side}, 1, 0, 1);
    Tensor w = random_tensor({16, 4, 3, 3}, 2, -0.3, 0.3);
    Tensor b = random_tensor({16}, 3, -0.1, 0.1);
    for (auto _ : state) {
        Graph g;
        Tensor loss = g.mean(g.conv2d_3x3(x, w, b));
        g.backward(loss);
        benchmark::DoNotOptimize(w->grad.data());
    }
    state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_Conv2dBackward)->Arg(32)->Arg(64);

void BM_PseudoTargetSolve(benchmark::State& state) {
    const std::size_t side = static_cast<std::size_t>(state.range(0));
    BayerImage img = random_bayer(side, side, 7);
    RgbImage u = apply_matrix(img, compose(LinearParams{}));
    for (auto _ : state)
        benchmark::DoNotOptimize(solve_pseudo_target(u, img));
    state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_PseudoTargetSolve)->Arg(64)->Arg(128)->Arg(256);

void BM_ModelForward(benchmark::State& state) {
    const std::size_t side = static_cast<std::size_t>(state.range(0));
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.embed_dim = 8;
    cfg.coeff_width = 8;
    Model m = make_model(nullptr, cfg);
    Tensor bayer = random_tensor({4, side, side}, 9, 0.02, 0.95);
    for (auto _ : state) {
        Graph g;
        benchmark::DoNotOptimize(model_forward(g, m, bayer).enhanced);
    }
    state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_ModelForward)->Arg(32)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
    const std::size_t side = 32;
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.embed_dim = 4;
    cfg.coeff_width = 4;
    Model m = make_model(nullptr, cfg);
    Tensor bayer = random_tensor({4, side, side}, 11, 0.02, 0.95);
    Tensor ref = random_tensor({3, side, side}, 12, 0.02, 0.95);
    for (auto _ : state) {
        Graph g;
        ForwardResult fwd = model_forward(g, m, bayer);
        Tensor diff = g.sub(fwd.enhanced, ref);
        Tensor loss = g.mean(g.mul(diff, diff));
        for (auto& [name, t] : m.named_params()) t->zero_grad();
        g.backward(loss);
        benchmark::DoNotOptimize(loss->value[0]);
    }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
