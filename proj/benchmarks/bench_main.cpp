#include <benchmark/benchmark.h>

#include "dbgc/cnn.hpp"
#include "dbgc/gat.hpp"
#include "dbgc/graph.hpp"
#include "dbgc/graphmae.hpp"
#include "dbgc/polsar.hpp"
#include "dbgc/rng.hpp"
#include "dbgc/slic.hpp"

namespace {

dbgc::SynthScene make_scene(int side) {
    dbgc::SceneSpec spec = dbgc::make_default_scene(side, side, 4);
    return dbgc::synth_scene(spec, 7);
}

void bm_synth_scene(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto scene = make_scene(side);
        benchmark::DoNotOptimize(scene.truth.labels.data());
    }
}
BENCHMARK(bm_synth_scene)->Arg(64)->Arg(128);

void bm_slic(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    auto scene = make_scene(side);
    auto feats = dbgc::extract_features(scene.coherency);
    auto rgb = dbgc::pauli_rgb(scene.coherency);
    const int k = side * side / 100;
    for (auto _ : state) {
        auto seg = dbgc::slic_segment(rgb, k);
        benchmark::DoNotOptimize(seg.labels.data());
    }
}
BENCHMARK(bm_slic)->Arg(64)->Arg(128);

void bm_gat_forward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) {
        edges.emplace_back(i, i + 1);
        if (i + 7 < n) edges.emplace_back(i, i + 7);
    }
    auto topo = dbgc::make_topology(n, edges);
    dbgc::Rng rng(3);
    auto layer = dbgc::init_gat_layer(9, 16, 4, true, dbgc::GatActivation::Elu, rng);
    dbgc::MatrixRM x(n, 9);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 9; ++j) x(i, j) = rng.normal();
    dbgc::GatLayerCache cache;
    for (auto _ : state) {
        auto out = dbgc::gat_forward(x, topo, layer, &cache);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(bm_gat_forward)->Arg(64)->Arg(256);

void bm_cnn_forward(benchmark::State& state) {
    dbgc::CnnConfig cfg;
    cfg.patch = 7;
    cfg.channels = {8, 16, 32, 32};
    dbgc::Rng rng(11);
    auto params = dbgc::init_cnn(cfg, rng);
    const int batch = static_cast<int>(state.range(0));
    std::vector<dbgc::Patch> patches(batch);
    for (auto& p : patches) {
        p.row = 0;
        p.col = 0;
        p.n = cfg.patch;
        p.data.resize(static_cast<std::size_t>(cfg.in_channels) * cfg.patch * cfg.patch);
        for (auto& v : p.data) v = rng.normal();
    }
    for (auto _ : state) {
        auto out = dbgc::cnn_forward(patches, params, nullptr);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(bm_cnn_forward)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
