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

#include <unistd.h>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedsim/experiment.h"

namespace {

using fedsim::ExperimentConfig;

struct CommonOverrides {
  std::string config_path;
  std::string mode;
  std::string store_root;
  std::string strategy;
  std::int64_t seed = -1;
};

void add_common(CLI::App* app, CommonOverrides* common) {
  app->add_option("--config", common->config_path, "experiment config (JSON)")
      ->required();
  app->add_option("--mode", common->mode, "inprocess|multiprocess");
  app->add_option("--store-root", common->store_root,
                  "override the store root directory");
  app->add_option("--seed", common->seed, "override the config seed");
  app->add_option("--strategy", common->strategy,
                  "override the aggregation strategy");
}

std::string self_exe_path() {
  char buf[4096];
  const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
  if (n <= 0) return "";
  buf[n] = '\0';
  return buf;
}

ExperimentConfig load_with_overrides(const CommonOverrides& common) {
  ExperimentConfig cfg = ExperimentConfig::load(common.config_path);
  if (!common.mode.empty()) {
    cfg.mode = fedsim::execution_mode_from_string(common.mode);
  }
  if (!common.store_root.empty()) cfg.store_root = common.store_root;
  if (common.seed >= 0) cfg.seed = static_cast<std::uint64_t>(common.seed);
  if (!common.strategy.empty()) {
    cfg.aggregator.strategy = fedsim::strategy_from_string(common.strategy);
  }
  if (cfg.mode == fedsim::ExecutionMode::MultiProcess && cfg.worker_exe.empty()) {
    cfg.worker_exe = self_exe_path();
  }
  return cfg;
}

void print_summary(const fedsim::ExperimentSummary& summary) {
  std::printf("run %s (%s): %d clients, %d rounds\n", summary.run_id.c_str(),
              summary.strategy.c_str(), summary.num_clients, summary.rounds);
  for (const auto& r : summary.per_round) {
    std::printf("  round %d: val_loss=%.6f digest=%.12s...\n", r.round,
                r.global_val_loss, r.global_digest.c_str());
  }
  const auto& m = summary.final_metrics;
  std::printf(
      "  test metrics: rouge1=%.4f rouge2=%.4f rouge3=%.4f rouge4=%.4f "
      "rougeL=%.4f bleu=%.4f\n",
      m.rouge1_f1, m.rouge2_f1, m.rouge3_f1, m.rouge4_f1, m.rougeL_f1, m.bleu);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsim: federated learning simulation on shared storage"};
  app.require_subcommand(1);

  CommonOverrides run_common;
  auto* run_cmd = app.add_subcommand("run", "run a full experiment");
  add_common(run_cmd, &run_common);

  CommonOverrides compare_common;
  std::vector<std::string> compare_strategies_arg = {
      "fedavg-weighted", "krum", "l-fedavg"};
  auto* compare_cmd =
      app.add_subcommand("compare", "run several strategies from one seed");
  add_common(compare_cmd, &compare_common);
  compare_cmd->add_option("--strategies", compare_strategies_arg,
                          "strategies to compare")
      ->delimiter(',');

  CommonOverrides metrics_common;
  auto* metrics_cmd = app.add_subcommand(
      "metrics", "recompute metrics from a run's stored decodes");
  add_common(metrics_cmd, &metrics_common);
  std::string metrics_run_id;
  metrics_cmd->add_option("--run-id", metrics_run_id,
                          "run to recompute (default: config run_id)");

  CommonOverrides partition_common;
  auto* partition_cmd =
      app.add_subcommand("partition", "inspect client shard sizes");
  add_common(partition_cmd, &partition_common);

  CommonOverrides worker_common;
  int worker_client_id = 0;
  auto* worker_cmd = app.add_subcommand(
      "worker", "run one client role against the shared store");
  add_common(worker_cmd, &worker_common);
  worker_cmd->add_option("--client-id", worker_client_id, "client id (1-based)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const auto cfg = load_with_overrides(run_common);
      print_summary(fedsim::run_experiment(cfg));
    } else if (*compare_cmd) {
      const auto cfg = load_with_overrides(compare_common);
      std::vector<fedsim::Strategy> strategies;
      for (const auto& s : compare_strategies_arg) {
        strategies.push_back(fedsim::strategy_from_string(s));
      }
      const auto summaries = fedsim::compare_strategies(cfg, strategies);
      std::cout << fedsim::metrics_csv_header();
      for (const auto& s : summaries) {
        std::cout << fedsim::metrics_csv_row(s.strategy, s.final_metrics);
      }
    } else if (*metrics_cmd) {
      const auto cfg = load_with_overrides(metrics_common);
      const std::string run_id =
          metrics_run_id.empty() ? cfg.run_id : metrics_run_id;
      const auto report = fedsim::recompute_metrics(cfg.store_root, run_id);
      std::cout << fedsim::metrics_csv_header()
                << fedsim::metrics_csv_row(run_id, report);
    } else if (*partition_cmd) {
      const auto cfg = load_with_overrides(partition_common);
      cfg.validate();
      const auto train_sizes = fedsim::partition_sizes(
          static_cast<std::size_t>(cfg.task.train_samples), cfg.train_ratios);
      const auto val_sizes = fedsim::partition_sizes(
          static_cast<std::size_t>(cfg.task.val_samples), cfg.val_ratios);
      std::printf("client,train_size,val_size\n");
      for (int k = 0; k < cfg.num_clients; ++k) {
        std::printf("%d,%zu,%zu\n", k + 1,
                    train_sizes[static_cast<std::size_t>(k)],
                    val_sizes[static_cast<std::size_t>(k)]);
      }
    } else if (*worker_cmd) {
      const auto cfg = load_with_overrides(worker_common);
      fedsim::run_client(cfg, worker_client_id);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
