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

/// Server-side aggregation strategies.
///
/// Four strategies over one round's client updates:
///   - fedavg-uniform:  plain mean, coefficient 1/m per client.
///   - fedavg-weighted: data-size weights d_k / sum(d).
///   - krum:            Byzantine-robust selection; picks the single client
///                      whose summed squared distance to its m-f-2 nearest
///                      peers is smallest and returns its params verbatim.
///   - l-fedavg:        loss-aware weighting; blends the data weight d_k/D
///                      with the inverse validation loss 1/max(l_k, floor)
///                      via alpha, then normalizes to sum 1.
///
/// All functions are pure, never mutate their inputs, and emit an
/// AggregationReport so the intermediate weights/scores are auditable.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json_fwd.hpp"

#include "fedsim/param_vector.h"

namespace fedsim {

class InsufficientClientsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClientUpdate {
  int client_id = 0;
  ParamVector params;
  std::uint64_t data_length = 0;   // d_k, local training sample count
  double validation_loss = 0.0;    // l_k, final-epoch validation loss
};

enum class Strategy { FedAvgUniform, FedAvgWeighted, Krum, LFedAvg };

std::string to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& name);

struct AggregatorConfig {
  Strategy strategy = Strategy::FedAvgWeighted;
  double alpha = 0.5;          // l-fedavg blend factor
  int fault_tolerance = 1;     // krum f
  double loss_floor = 1e-8;    // clamp applied to l_k before inverting
  bool normalize_loss_weights_first = false;
};

struct AggregationReport {
  std::string strategy;
  int round = -1;
  // Normalized per-client weights (fedavg / l-fedavg), ascending client_id.
  std::vector<std::pair<int, double>> weights;
  // Krum scores D_k, ascending client_id.
  std::vector<std::pair<int, double>> scores;
  std::optional<int> selected_client;
  std::string params_digest;

  nlohmann::json to_json() const;
  static AggregationReport from_json(const nlohmann::json& j);
};

using AggregationResult = std::pair<ParamVector, AggregationReport>;

AggregationResult aggregate_fedavg(std::span<const ClientUpdate> updates,
                                   bool weighted);

/// D_k = sum of the m-f-2 smallest squared distances from client k to the
/// other clients, ascending client_id. Requires m >= f + 3.
std::vector<std::pair<int, double>> krum_scores(
    std::span<const ClientUpdate> updates, int fault_tolerance);

AggregationResult aggregate_krum(std::span<const ClientUpdate> updates,
                                 int fault_tolerance);

struct ClientMetadata {
  int client_id = 0;
  std::uint64_t data_length = 0;
  double validation_loss = 0.0;
};

/// Normalized l-fedavg weights, ascending client_id. alpha must be in [0,1].
std::vector<std::pair<int, double>> lfedavg_weights(
    std::span<const ClientMetadata> metadata, double alpha, double loss_floor,
    bool normalize_loss_weights_first = false);

AggregationResult aggregate_lfedavg(std::span<const ClientUpdate> updates,
                                    const AggregatorConfig& config);

/// Dispatch on config.strategy.
AggregationResult aggregate(std::span<const ClientUpdate> updates,
                            const AggregatorConfig& config);

}  // namespace fedsim
