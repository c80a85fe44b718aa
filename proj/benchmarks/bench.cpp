// Microbenchmarks for the kernels that dominate batch synthesis and
// evaluation. Raster fixtures run at dataset-like sizes; the NN blocks at the
// toy shapes the gradient audit uses, since that is where they actually run.

#include <benchmark/benchmark.h>

#include <cstdint>

#include "shadowlab/decay.hpp"
#include "shadowlab/image.hpp"
#include "shadowlab/mask_ops.hpp"
#include "shadowlab/metrics.hpp"
#include "shadowlab/nets.hpp"
#include "shadowlab/nn.hpp"
#include "shadowlab/pipeline.hpp"
#include "shadowlab/rng.hpp"

using namespace shadowlab;

namespace {

Image noise_image(int side, std::uint64_t seed) {
    Rng rng(seed);
    Image img(side, side);
    for (double& v : img.data) v = rng.uniform(0.05, 0.95);
    return img;
}

Mask centered_disk(int side, double radius) {
    Mask m(side, side);
    const double c = side / 2.0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            m.at(x, y) = (x - c) * (x - c) + (y - c) * (y - c) <= radius * radius ? 1.0 : 0.0;
    return m;
}

void bm_guided_filter(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const Image guide = noise_image(side, 1);
    const Mask input = centered_disk(side, side / 3.0);
    const GuidedFilterConfig cfg;  // radius 8
    for (auto _ : state) benchmark::DoNotOptimize(guided_filter(guide, input, cfg));
    state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(bm_guided_filter)->Arg(256)->Arg(512);

void bm_morph_erode(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const Mask mask = centered_disk(side, side / 3.0);
    for (auto _ : state) benchmark::DoNotOptimize(morph(mask, 5, MorphMode::erode));
    state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(bm_morph_erode)->Arg(256)->Arg(512);

void bm_estimate_decay(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    Image image = noise_image(side, 2);
    const Mask mask = centered_disk(side, side / 3.0);
    DecayParams p;
    p.w = {0.4, 0.4, 0.4};
    image = apply_de_exposure(image, mask, p);
    const MorphConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(estimate_decay(image, mask, cfg));
}
BENCHMARK(bm_estimate_decay)->Arg(256);

void bm_synthesize_triplet(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const Image free = noise_image(side, 3);
    const Mask mask = centered_disk(side, side / 3.0);
    ParamLibrary lib;
    lib.entries.push_back({DecayParams{{0.4, 0.4, 0.4}, {0.0, 0.0, 0.0}}, "bench"});
    const GuidedFilterConfig gf;
    for (auto _ : state) benchmark::DoNotOptimize(synthesize_triplet(free, mask, lib, 7, gf));
}
BENCHMARK(bm_synthesize_triplet)->Arg(256);

void bm_ssim(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const Image a = noise_image(side, 4);
    const Image b = noise_image(side, 5);
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
    state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(bm_ssim)->Arg(256)->Arg(512);

void bm_conv2d_3x3(benchmark::State& state) {
    Rng rng(6);
    const Conv2d conv = make_conv(16, 16, 3, 3, rng, 1, 1, 1);
    Tensor x(1, 16, 64, 64);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, conv));
}
BENCHMARK(bm_conv2d_3x3);

void bm_sdca_forward(benchmark::State& state) {
    const SdcaParams p = make_sdca(64, 7);
    Rng rng(8);
    Tensor f(1, 64, 32, 32);
    for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(sdca_forward(f, p));
}
BENCHMARK(bm_sdca_forward);

}  // namespace

BENCHMARK_MAIN();
