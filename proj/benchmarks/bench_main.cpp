#include "cimnas/controller.hpp"
#include "cimnas/cost_model.hpp"
#include "cimnas/dataset.hpp"
#include "cimnas/device.hpp"
#include "cimnas/network.hpp"
#include "cimnas/search_space.hpp"

#include <benchmark/benchmark.h>

using namespace cimnas;

namespace {

const ArchitectureSpec kToyArch{{ConvLayer{3, 3, 16, true}, ConvLayer{3, 3, 16, true}, DenseLayer{64}, OutputLayer{4}}};
const FeatureShape kToyInput{1, 8, 8};

void BM_ForwardQuantizedNoisy(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const Network net = build_network(kToyArch, kToyInput, 1);
    const Dataset data = synth_dataset(4, batch, kToyInput, 8.0, 2);
    const auto q = uniform_scheme(kToyArch.size(), FixedPointFormat(1, 4, true), FixedPointFormat(1, 4, false));
    const NoiseSpec noise = make_noise_spec(DeviceLibrary::defaults().at(0), &q, kToyArch.size());
    Rng rng(3);
    for (auto _ : state) benchmark::DoNotOptimize(forward(net, data.images, &q, &noise, rng));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardQuantizedNoisy)->Arg(32)->Arg(256);

void BM_TrainEpoch(benchmark::State& state) {
    const Dataset data = synth_dataset(4, 256, kToyInput, 8.0, 2);
    const TrainConfig cfg{0.05, 1, 32, 4};
    const Network init = build_network(kToyArch, kToyInput, 1);
    for (auto _ : state) benchmark::DoNotOptimize(train(init, data, Dataset{}, cfg, nullptr, nullptr));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_HardwareCostRls(benchmark::State& state) {
    const SearchSpace space = rls_space();
    Rng rng(5);
    std::vector<Candidate> cands;
    while (cands.size() < 16) {
        ActionSequence a;
        for (int k : space.choice_counts()) a.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
        Candidate c = space.decode(a);
        if (!infeasibility(c, {3, 32, 32}).empty()) continue;
        cands.push_back(std::move(c));
        for (auto& l : *cands.back().quant) {
            l.weight_int = std::max(l.weight_int, 1);
            l.act_int = std::max(l.act_int, 1);
        }
    }
    const TechnologyParams tech;
    const DeviceModel dev = DeviceLibrary::defaults().at(0);
    std::size_t i = 0;
    for (auto _ : state) {
        const Candidate& c = cands[i++ % cands.size()];
        const auto scheme = c.scheme();
        benchmark::DoNotOptimize(evaluate_hardware(c.arch, {3, 32, 32}, scheme ? &*scheme : nullptr, dev, tech, {64, 64}));
    }
}
BENCHMARK(BM_HardwareCostRls);

void BM_MapLayer(benchmark::State& state) {
    const DeviceModel dev = DeviceLibrary::defaults().at(0);
    const FixedPointFormat w(2, 5, true);
    for (auto _ : state) {
        benchmark::DoNotOptimize(map_layer(ConvLayer{5, 5, 64, false}, {48, 16, 16}, &w, dev, {64, 64}));
    }
}
BENCHMARK(BM_MapLayer);

void BM_ControllerSample(benchmark::State& state) {
    const SearchSpace space = rls_space();
    const Controller ctl(space.choice_counts(), ControllerConfig{}, 6);
    Rng rng(7);
    for (auto _ : state) benchmark::DoNotOptimize(ctl.sample(rng));
}
BENCHMARK(BM_ControllerSample);

void BM_ControllerUpdate(benchmark::State& state) {
    const SearchSpace space = rls_space();
    Controller ctl(space.choice_counts(), ControllerConfig{}, 6);
    Rng rng(8);
    std::vector<EpisodeRecord> batch;
    for (int k = 0; k < 5; ++k) {
        batch.push_back(ctl.sample(rng));
        batch.back().reward = 0.1 * k;
    }
    for (auto _ : state) benchmark::DoNotOptimize(ctl.update(batch));
}
BENCHMARK(BM_ControllerUpdate)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
