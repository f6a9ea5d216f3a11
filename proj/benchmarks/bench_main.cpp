// Copyright 2026 The megtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "megtl/dsp.hpp"
#include "megtl/model.hpp"
#include "megtl/rng.hpp"
#include "megtl/stats.hpp"
#include "megtl/windows.hpp"

namespace {

using namespace megtl;

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  return x;
}

// Args: channels, d_model, blocks, batch.
ModelConfig bench_model(const benchmark::State& s) {
  ModelConfig c;
  c.n_channels = static_cast<std::size_t>(s.range(0));
  c.d_model = static_cast<std::size_t>(s.range(1));
  c.n_blocks = static_cast<std::size_t>(s.range(2));
  c.ffn_expansion = c.d_model == 16 ? 2 : 4;
  return c;
}

void BM_Forward(benchmark::State& state) {
  const auto cfg = bench_model(state);
  const auto params = init_params(cfg, 1);
  const std::size_t b = static_cast<std::size_t>(state.range(3));
  const auto data = noise(b * cfg.n_channels * cfg.window_len, 2);
  Batch<float> batch{cfg.n_channels, cfg.window_len, {}};
  for (std::size_t i = 0; i < b; ++i) batch.examples.emplace_back(data.data() + i * cfg.n_channels * cfg.window_len,
                                                                 cfg.n_channels * cfg.window_len);
  for (auto _ : state) benchmark::DoNotOptimize(forward(cfg, params, batch));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b));
}
BENCHMARK(BM_Forward)->Args({64, 16, 1, 32})->Args({306, 64, 2, 64})->Unit(benchmark::kMillisecond);

void BM_Backward(benchmark::State& state) {
  const auto cfg = bench_model(state);
  const auto params = init_params(cfg, 1);
  const std::size_t b = static_cast<std::size_t>(state.range(3));
  const auto data = noise(b * cfg.n_channels * cfg.window_len, 2);
  Batch<float> batch{cfg.n_channels, cfg.window_len, {}};
  for (std::size_t i = 0; i < b; ++i) batch.examples.emplace_back(data.data() + i * cfg.n_channels * cfg.window_len,
                                                                 cfg.n_channels * cfg.window_len);
  const std::vector<float> labels(b, 0.5f);
  ForwardOptions opts;
  opts.train_mode = true;
  for (auto _ : state) benchmark::DoNotOptimize(backward<float>(cfg, params, batch, labels, opts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b));
}
BENCHMARK(BM_Backward)->Args({64, 16, 1, 32})->Args({306, 64, 2, 64})->Unit(benchmark::kMillisecond);

// One 10 s recording at 1 kHz, decimated to 250 Hz.
void BM_Decimate(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Recording r("b", TaskId::Listen, 1000.0, c, noise(c * 10000, 3));
  for (auto _ : state) benchmark::DoNotOptimize(decimate(r, 4));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(c * 10000 * sizeof(float)));
}
BENCHMARK(BM_Decimate)->Arg(64)->Arg(306)->Unit(benchmark::kMillisecond);

void BM_WilcoxonExact(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (i % 3 == 0 ? -1.0 : 1.0) * static_cast<double>(i + 1);
  for (auto _ : state) benchmark::DoNotOptimize(wilcoxon_signed_rank(d, WilcoxonMode::Exact));
}
BENCHMARK(BM_WilcoxonExact)->Arg(18)->Arg(50);

void BM_SignFlip(benchmark::State& state) {
  Rng rng(4);
  std::vector<double> v(18);
  for (auto& x : v) x = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(signflip_permutation(v, kSignflipIters, 5));
}
BENCHMARK(BM_SignFlip)->Unit(benchmark::kMicrosecond);

void BM_RollAugment(benchmark::State& state) {
  const std::size_t n = 420, c = 64, t = 125;
  const WindowSet ws(c, t, noise(n * c * t, 6), std::vector<float>(n, 0.5f), "b", TaskId::Listen, t);
  for (auto _ : state) benchmark::DoNotOptimize(roll_augment(ws));
}
BENCHMARK(BM_RollAugment)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
