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

#include "fedsim/kernels.h"

#include <cstdint>
#include <vector>

namespace fedsim::kernels {

namespace {
// Below this size the parallel-for overhead dominates.
constexpr std::size_t kParallelCutoff = 16384;

double fold_in_order(const std::vector<double>& partials) {
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}
}  // namespace

void linear_combine(std::span<double> out, std::span<const double> coefficients,
                    std::span<const double* const> inputs) {
  const std::int64_t n = static_cast<std::int64_t>(out.size());
  const std::size_t terms = coefficients.size();
#pragma omp parallel for schedule(static) if (n >= (std::int64_t)kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < terms; ++j) {
      acc += coefficients[j] * inputs[j][i];
    }
    out[i] = acc;
  }
}

double block_sum(std::span<const double> values) {
  const std::size_t n = values.size();
  const std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
  if (blocks <= 1) return serial::block_sum(values);
  std::vector<double> partials(blocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t hi = std::min(lo + kReduceBlock, n);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += values[i];
    partials[static_cast<std::size_t>(b)] = acc;
  }
  return fold_in_order(partials);
}

double squared_l2_distance(std::span<const double> a,
                           std::span<const double> b) {
  const std::size_t n = a.size();
  const std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
  if (blocks <= 1) return serial::squared_l2_distance(a, b);
  std::vector<double> partials(blocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t blk = 0; blk < static_cast<std::int64_t>(blocks); ++blk) {
    const std::size_t lo = static_cast<std::size_t>(blk) * kReduceBlock;
    const std::size_t hi = std::min(lo + kReduceBlock, n);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    partials[static_cast<std::size_t>(blk)] = acc;
  }
  return fold_in_order(partials);
}

namespace serial {

void linear_combine(std::span<double> out, std::span<const double> coefficients,
                    std::span<const double* const> inputs) {
  const std::size_t n = out.size();
  const std::size_t terms = coefficients.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < terms; ++j) {
      acc += coefficients[j] * inputs[j][i];
    }
    out[i] = acc;
  }
}

double block_sum(std::span<const double> values) {
  const std::size_t n = values.size();
  double total = 0.0;
  for (std::size_t lo = 0; lo < n; lo += kReduceBlock) {
    const std::size_t hi = std::min(lo + kReduceBlock, n);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += values[i];
    total += acc;
  }
  return total;
}

double squared_l2_distance(std::span<const double> a,
                           std::span<const double> b) {
  const std::size_t n = a.size();
  double total = 0.0;
  for (std::size_t lo = 0; lo < n; lo += kReduceBlock) {
    const std::size_t hi = std::min(lo + kReduceBlock, n);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    total += acc;
  }
  return total;
}

}  // namespace serial

}  // namespace fedsim::kernels
