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

#include "doctest.h"

#include <cmath>
#include <vector>

#include "fedsim/kernels.h"
#include "fedsim/rng.h"

using fedsim::Rng;
namespace kernels = fedsim::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("parallel kernels match the serial reference bit for bit") {
  // Sizes straddle the block size and the parallel cutoff.
  for (std::size_t n : {std::size_t{1}, std::size_t{17}, std::size_t{4096},
                        std::size_t{4097}, std::size_t{100000}}) {
    const auto a = random_values(n, 11 + n);
    const auto b = random_values(n, 23 + n);

    CHECK(kernels::block_sum(a) == kernels::serial::block_sum(a));
    CHECK(kernels::squared_l2_distance(a, b) ==
          kernels::serial::squared_l2_distance(a, b));

    std::vector<double> coeffs = {0.25, -1.5, 3.0};
    const auto c = random_values(n, 37 + n);
    std::vector<const double*> inputs = {a.data(), b.data(), c.data()};
    std::vector<double> out_par(n);
    std::vector<double> out_ser(n);
    kernels::linear_combine(out_par, coeffs, inputs);
    kernels::serial::linear_combine(out_ser, coeffs, inputs);
    CHECK(out_par == out_ser);
  }
}

TEST_CASE("block_sum agrees with a naive running sum") {
  const auto v = random_values(50000, 5);
  double naive = 0.0;
  for (double x : v) naive += x;
  const double blocked = kernels::block_sum(v);
  CHECK(std::abs(blocked - naive) <=
        1e-12 * std::max({std::abs(naive), std::abs(blocked), 1.0}));
}

TEST_CASE("squared_l2_distance agrees with a naive loop") {
  const auto a = random_values(10000, 1);
  const auto b = random_values(10000, 2);
  double naive = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    naive += d * d;
  }
  const double got = kernels::squared_l2_distance(a, b);
  CHECK(got == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("linear_combine evaluates each element in term order") {
  const std::vector<double> x = {1.0, 2.0};
  const std::vector<double> y = {10.0, 20.0};
  std::vector<double> coeffs = {2.0, 0.5};
  std::vector<const double*> inputs = {x.data(), y.data()};
  std::vector<double> out(2);
  kernels::linear_combine(out, coeffs, inputs);
  CHECK(out[0] == 2.0 * 1.0 + 0.5 * 10.0);
  CHECK(out[1] == 2.0 * 2.0 + 0.5 * 20.0);
}
