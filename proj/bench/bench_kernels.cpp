// Copyright 2026 The FedSim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference vs OpenMP kernels on aggregation-shaped workloads.

#include <benchmark/benchmark.h>

#include <vector>

#include "fedsim/kernels.h"
#include "fedsim/rng.h"

namespace {

using fedsim::Rng;
namespace kernels = fedsim::kernels;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

struct CombineFixture {
  explicit CombineFixture(std::size_t n, std::size_t terms) {
    for (std::size_t j = 0; j < terms; ++j) {
      inputs.push_back(random_values(n, 100 + j));
      coefficients.push_back(1.0 / static_cast<double>(terms));
      pointers.push_back(inputs.back().data());
    }
    out.resize(n);
  }
  std::vector<std::vector<double>> inputs;
  std::vector<double> coefficients;
  std::vector<const double*> pointers;
  std::vector<double> out;
};

void BM_LinearCombineSerial(benchmark::State& state) {
  CombineFixture fx(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) {
    kernels::serial::linear_combine(fx.out, fx.coefficients, fx.pointers);
    benchmark::DoNotOptimize(fx.out.data());
  }
}
BENCHMARK(BM_LinearCombineSerial)->Arg(1 << 14)->Arg(1 << 18)->Arg(1 << 21);

void BM_LinearCombineParallel(benchmark::State& state) {
  CombineFixture fx(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) {
    kernels::linear_combine(fx.out, fx.coefficients, fx.pointers);
    benchmark::DoNotOptimize(fx.out.data());
  }
}
BENCHMARK(BM_LinearCombineParallel)->Arg(1 << 14)->Arg(1 << 18)->Arg(1 << 21);

void BM_SquaredL2Serial(benchmark::State& state) {
  const auto a = random_values(static_cast<std::size_t>(state.range(0)), 1);
  const auto b = random_values(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::squared_l2_distance(a, b));
  }
}
BENCHMARK(BM_SquaredL2Serial)->Arg(1 << 14)->Arg(1 << 18)->Arg(1 << 21);

void BM_SquaredL2Parallel(benchmark::State& state) {
  const auto a = random_values(static_cast<std::size_t>(state.range(0)), 1);
  const auto b = random_values(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::squared_l2_distance(a, b));
  }
}
BENCHMARK(BM_SquaredL2Parallel)->Arg(1 << 14)->Arg(1 << 18)->Arg(1 << 21);

void BM_BlockSumSerial(benchmark::State& state) {
  const auto a = random_values(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::block_sum(a));
  }
}
BENCHMARK(BM_BlockSumSerial)->Arg(1 << 18)->Arg(1 << 22);

void BM_BlockSumParallel(benchmark::State& state) {
  const auto a = random_values(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::block_sum(a));
  }
}
BENCHMARK(BM_BlockSumParallel)->Arg(1 << 18)->Arg(1 << 22);

}  // namespace

BENCHMARK_MAIN();
