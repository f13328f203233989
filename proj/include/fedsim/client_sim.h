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

/// Simulated hospital clients: dataset partitioning, the local training
/// loop, the AdamW optimizer, and Byzantine adversary wrappers.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/aggregation.h"
#include "fedsim/param_vector.h"
#include "fedsim/toy_model.h"

namespace fedsim {

struct PartitionSpec {
  std::vector<double> ratios;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // 0 = IID shard contents; 1 = fully class-sorted. Size skew comes from
  // the ratios either way.
  double class_skew = 0.0;
};

/// Splits the dataset into disjoint shards whose sizes follow the ratios
/// under largest-remainder rounding; every client receives at least one
/// sample. Deterministic given spec.seed.
std::vector<Dataset> partition(const Dataset& data, const PartitionSpec& spec);

/// Shard sizes alone (the same largest-remainder arithmetic).
std::vector<std::size_t> partition_sizes(std::size_t total,
                                         std::span<const double> ratios);

enum class OptimizerKind { Sgd, AdamW };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct LocalTrainConfig {
  int epochs_per_round = 3;
  int batch_size = 8;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
};

struct AdamWConfig {
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamWState {
  ParamVector moment1;
  ParamVector moment2;
};

AdamWState make_adamw_state(const Manifest& manifest);

/// One AdamW step with decoupled weight decay: params are first scaled by
/// (1 - lr * weight_decay), then moved by the bias-corrected adaptive step.
/// step_index is 1-based. Moments are updated in place.
ParamVector adamw_step(const ParamVector& params, const ParamVector& grads,
                       AdamWState& state, std::int64_t step_index,
                       const AdamWConfig& config);

struct TrainStepLoss {
  int step = 0;   // 1-based optimizer step within the round
  int epoch = 0;  // 1-based
  double loss = 0.0;
};

struct ClientShard {
  Dataset train;
  Dataset val;
};

struct LocalTrainResult {
  ParamVector params;
  std::vector<TrainStepLoss> train_trace;
  std::vector<double> epoch_val_losses;  // one entry per epoch
  double validation_loss = 0.0;          // final epoch's value
};

/// Runs epochs_per_round passes over the shard with a fresh optimizer state.
/// Batch order is reshuffled each epoch from (cfg.seed, epoch). Throws
/// DivergenceError if a step produces a non-finite loss.
LocalTrainResult local_train(const Model& model, const ParamVector& start,
                             const ClientShard& shard,
                             const LocalTrainConfig& cfg);

struct AdversaryMode {
  enum class Kind { Honest, Scale, GaussianNoise, SignFlip };
  Kind kind = Kind::Honest;
  double factor = 1.0;  // scale
  double sigma = 0.0;   // gaussian_noise
};

/// Corrupts the params of an update (metadata untouched). Honest is the
/// identity; gaussian noise is seeded and element-wise.
ClientUpdate apply_adversary(const ClientUpdate& update,
                             const AdversaryMode& mode, std::uint64_t seed);

}  // namespace fedsim
