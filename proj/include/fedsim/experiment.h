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

/// Experiment driver: configuration, the server and client roles, and the
/// full-run orchestration in either execution mode.
///
/// Both roles derive everything they need (dataset, partition, per-round
/// seeds) from the config alone, so a client process can be restarted at any
/// point and will reproduce exactly the bytes it would have produced in an
/// uninterrupted run. All cross-role communication goes through the stores.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlohmann/json_fwd.hpp"

#include "fedsim/aggregation.h"
#include "fedsim/client_sim.h"
#include "fedsim/coordination.h"
#include "fedsim/nlg_metrics.h"
#include "fedsim/toy_model.h"

namespace fedsim {

enum class ExecutionMode { InProcess, MultiProcess };

std::string to_string(ExecutionMode mode);
ExecutionMode execution_mode_from_string(const std::string& name);

struct ExperimentConfig {
  std::string run_id = "exp";
  int num_clients = 4;
  int rounds = 3;
  std::uint64_t seed = 42;
  std::string store_root = "runs";
  ExecutionMode mode = ExecutionMode::InProcess;
  int poll_interval_ms = 200;
  int timeout_ms = 60000;

  std::vector<double> train_ratios = {1655, 1241, 828, 414};
  std::vector<double> val_ratios = {237, 178, 117, 60};
  bool shuffle = true;
  double class_skew = 0.0;

  AggregatorConfig aggregator;     // strategy default fedavg-weighted
  LocalTrainConfig local_train;    // epochs 3, batch 8, adamw, 5e-5, 0.01
  SyntheticTaskSpec task;          // 16-dim, vocab 24, length 8, 4 classes

  // client_id -> adversary; clients not listed are honest.
  std::map<int, AdversaryMode> adversaries;

  // Multiprocess mode only: executable spawned as `<exe> worker ...`.
  std::string worker_exe;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ExperimentConfig load(const std::filesystem::path& path);
};

nlohmann::json adversary_to_json(const AdversaryMode& mode);
AdversaryMode adversary_from_json(const nlohmann::json& j);

struct RoundSummary {
  int round = 0;
  std::string global_digest;
  double global_val_loss = 0.0;
  AggregationReport report;
};

struct ExperimentSummary {
  std::string run_id;
  std::string strategy;
  int num_clients = 0;
  int rounds = 0;
  std::uint64_t seed = 0;
  std::string initial_global_digest;
  std::vector<RoundSummary> per_round;
  metrics::MetricReport final_metrics;

  nlohmann::json to_json() const;
};

/// Client role: runs every round it has not already completed, training on
/// its shard and uploading through the stores. Restart-safe.
void run_client(const ExperimentConfig& cfg, int client_id);

/// Server role: publishes the initial model, then per round waits at the
/// barrier, aggregates, publishes, and finally evaluates the last global
/// model on the test split and writes summary.json / metrics.csv /
/// metrics.json / decodes.csv / samples.csv. Restart-safe: already-published
/// rounds are skipped.
ExperimentSummary run_server(const ExperimentConfig& cfg);

/// Full experiment: server plus clients as in-process threads or child
/// processes, depending on cfg.mode.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

/// Runs each strategy from the same seed (same initial params, partition,
/// batch orders) under run id "<run_id>-<strategy>"; writes a combined
/// "<run_id>-comparison.csv" under the store root.
std::vector<ExperimentSummary> compare_strategies(
    const ExperimentConfig& cfg, std::span<const Strategy> strategies);

/// Rebuilds metrics.csv / metrics.json from a run's stored decodes.csv.
metrics::MetricReport recompute_metrics(const std::string& store_root,
                                        const std::string& run_id,
                                        int bleu_max_n = 4);

/// Row format shared by metrics.csv and the comparison table.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& run_label,
                            const metrics::MetricReport& report);

}  // namespace fedsim
