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

#pragma once

/// Dense numeric kernels shared by the aggregators and the toy model.
///
/// Every kernel is bit-reproducible for any OpenMP thread count:
///   - elementwise kernels give each output element a fixed evaluation order;
///   - reductions accumulate fixed-size blocks (kReduceBlock) and fold the
///     block partials in index order, so the result does not depend on how
///     blocks were scheduled across threads.
/// The kernels::serial namespace holds the same algorithms executed serially;
/// tests assert bit equality against them and the bench target compares
/// throughput.

#include <cstddef>
#include <span>

namespace fedsim::kernels {

inline constexpr std::size_t kReduceBlock = 4096;

/// out[i] = sum_j coefficients[j] * inputs[j][i], inner sum in ascending j.
void linear_combine(std::span<double> out, std::span<const double> coefficients,
                    std::span<const double* const> inputs);

/// Fixed-block deterministic sum.
double block_sum(std::span<const double> values);

/// sum_i (a[i] - b[i])^2 with fixed-block accumulation.
double squared_l2_distance(std::span<const double> a,
                           std::span<const double> b);

namespace serial {

void linear_combine(std::span<double> out, std::span<const double> coefficients,
                    std::span<const double* const> inputs);
double block_sum(std::span<const double> values);
double squared_l2_distance(std::span<const double> a,
                           std::span<const double> b);

}  // namespace serial

}  // namespace fedsim::kernels
