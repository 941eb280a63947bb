// Serial reference vs OpenMP kernels on a 10 s speech-in-noise mixture.
// Arg 0 runs the serial path, 1 the parallel one.

#include <benchmark/benchmark.h>

#include "sce/enhance.hpp"
#include "sce/excitation.hpp"
#include "sce/mixing.hpp"
#include "sce/snr.hpp"
#include "sce/stft.hpp"
#include "support/stimuli.hpp"

using namespace sce;

namespace {

const MixResult& mixture() {
  static const MixResult m = mix_at_smr(testing::synth_speech(10.0, 1),
                                        testing::white_noise(200000, 2), MixSpec{});
  return m;
}

Exec exec_of(const benchmark::State& state) {
  return state.range(0) ? Exec::kParallel : Exec::kSerial;
}

void BM_Stft(benchmark::State& state) {
  const auto& x = mixture().mixture;
  for (auto _ : state) benchmark::DoNotOptimize(stft(x, {}, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * x.size());
}

void BM_Istft(benchmark::State& state) {
  const auto track = stft(mixture().mixture);
  for (auto _ : state) benchmark::DoNotOptimize(istft(track, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * track.size());
}

void BM_Excitation(benchmark::State& state) {
  const auto track = stft(mixture().mixture);
  const ExcitationModel model({}, track.sample_rate);
  for (auto _ : state) benchmark::DoNotOptimize(model.track(track, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * track.size());
}

void BM_Enhance(benchmark::State& state) {
  const auto track = stft(mixture().mixture);
  const SceParams params;
  const std::vector<double> schedule(track.size(), params.s);
  for (auto _ : state) benchmark::DoNotOptimize(enhance_track(track, params, schedule, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * track.size());
}

void BM_Isnr(benchmark::State& state) {
  const auto& m = mixture();
  for (auto _ : state) benchmark::DoNotOptimize(isnr_track(m.target, m.masker, {}, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * m.target.size());
}

}  // namespace

BENCHMARK(BM_Stft)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Istft)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Excitation)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Enhance)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Isnr)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
