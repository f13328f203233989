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

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "nlohmann/json.hpp"

#include "fedsim/experiment.h"
#include "fedsim/rng.h"

using namespace fedsim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("fedsim_exp_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path path;
};

// Small, fast experiment: same structure as the defaults, desk-scale sizes.
ExperimentConfig tiny_config(const fs::path& root, const std::string& run_id) {
  ExperimentConfig cfg;
  cfg.run_id = run_id;
  cfg.store_root = root.string();
  cfg.rounds = 2;
  cfg.seed = 11;
  cfg.poll_interval_ms = 2;
  cfg.timeout_ms = 30000;
  cfg.train_ratios = {16, 12, 8, 4};
  cfg.val_ratios = {4, 3, 2, 1};
  cfg.task.train_samples = 40;
  cfg.task.test_samples = 24;
  cfg.task.val_samples = 10;
  cfg.local_train.learning_rate = 5e-3;  // visible progress in two rounds
  return cfg;
}

std::string file_text(const fs::path& p) { return read_text_file(p); }

std::vector<std::string> round_digests(const ExperimentSummary& summary) {
  std::vector<std::string> out = {summary.initial_global_digest};
  for (const auto& r : summary.per_round) out.push_back(r.global_digest);
  return out;
}

}  // namespace

TEST_CASE("config JSON round-trip, defaults, and validation") {
  SUBCASE("defaults survive a round-trip") {
    ExperimentConfig cfg;
    const auto restored = ExperimentConfig::from_json(cfg.to_json());
    CHECK(restored.run_id == cfg.run_id);
    CHECK(restored.num_clients == 4);
    CHECK(restored.rounds == 3);
    CHECK(restored.train_ratios == std::vector<double>{1655, 1241, 828, 414});
    CHECK(restored.val_ratios == std::vector<double>{237, 178, 117, 60});
    CHECK(restored.aggregator.strategy == Strategy::FedAvgWeighted);
    CHECK(restored.aggregator.alpha == 0.5);
    CHECK(restored.aggregator.fault_tolerance == 1);
    CHECK(restored.local_train.epochs_per_round == 3);
    CHECK(restored.local_train.batch_size == 8);
    CHECK(restored.local_train.optimizer == OptimizerKind::AdamW);
    CHECK(restored.local_train.learning_rate == 5e-5);
    CHECK(restored.local_train.weight_decay == 0.01);
    CHECK(restored.task.train_samples == 4138);
  }

  SUBCASE("adversary map round-trips") {
    ExperimentConfig cfg;
    cfg.adversaries[4] = AdversaryMode{AdversaryMode::Kind::Scale, 50.0, 0.0};
    const auto restored = ExperimentConfig::from_json(cfg.to_json());
    REQUIRE(restored.adversaries.count(4) == 1);
    CHECK(restored.adversaries.at(4).kind == AdversaryMode::Kind::Scale);
    CHECK(restored.adversaries.at(4).factor == 50.0);
  }

  SUBCASE("unknown keys are rejected") {
    auto j = ExperimentConfig{}.to_json();
    j["typo_field"] = 1;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
  }

  SUBCASE("validation catches bad shapes") {
    ExperimentConfig cfg;
    cfg.train_ratios = {1, 2, 3};  // wrong length for 4 clients
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    ExperimentConfig krum_small;
    krum_small.num_clients = 3;
    krum_small.train_ratios = {1, 1, 1};
    krum_small.val_ratios = {1, 1, 1};
    krum_small.aggregator.strategy = Strategy::Krum;
    krum_small.aggregator.fault_tolerance = 1;
    CHECK_THROWS_AS(krum_small.validate(), ConfigError);

    ExperimentConfig bad_alpha;
    bad_alpha.aggregator.alpha = 1.5;
    CHECK_THROWS_AS(bad_alpha.validate(), ConfigError);
  }
}

TEST_CASE("single-client federation returns that client's local model") {
  TempDir dir;
  ExperimentConfig cfg = tiny_config(dir.path, "single");
  cfg.num_clients = 1;
  cfg.rounds = 1;
  cfg.train_ratios = {1};
  cfg.val_ratios = {1};
  const auto summary = run_experiment(cfg);

  // Recompute the client's local training directly from the same seeds.
  const SyntheticTaskSpec task = [&] {
    SyntheticTaskSpec t = cfg.task;
    t.seed = cfg.seed;
    return t;
  }();
  const auto data = synth_generate(task);
  const ToyCaptioner model(cfg.task);
  const ParamVector initial = model.init_params(cfg.seed);
  LocalTrainConfig ltc = cfg.local_train;
  ltc.seed = mix_seed(cfg.seed, {seed_domain::kClientTrain, 1, 1});
  ClientShard shard{
      partition(data.train,
                PartitionSpec{cfg.train_ratios,
                              mix_seed(cfg.seed, {seed_domain::kPartitionTrain}),
                              cfg.shuffle, cfg.class_skew})[0],
      partition(data.val,
                PartitionSpec{cfg.val_ratios,
                              mix_seed(cfg.seed, {seed_domain::kPartitionVal}),
                              cfg.shuffle, cfg.class_skew})[0]};
  const auto local = local_train(model, initial, shard, ltc);
  CHECK(summary.per_round.back().global_digest == param_digest(local.params));
}

TEST_CASE("runs are deterministic and artifacts are path-independent") {
  TempDir dir_a;
  TempDir dir_b;
  const auto cfg_a = tiny_config(dir_a.path, "det");
  const auto cfg_b = tiny_config(dir_b.path, "det");
  const auto sum_a = run_experiment(cfg_a);
  const auto sum_b = run_experiment(cfg_b);

  CHECK(round_digests(sum_a) == round_digests(sum_b));
  CHECK(file_text(dir_a.path / "det/summary.json") ==
        file_text(dir_b.path / "det/summary.json"));
  CHECK(file_text(dir_a.path / "det/metrics.csv") ==
        file_text(dir_b.path / "det/metrics.csv"));
  for (int k = 1; k <= 4; ++k) {
    for (int round = 1; round <= cfg_a.rounds; ++round) {
      CHECK(file_text(dir_a.path / paths::client_params("det", round, k)) ==
            file_text(dir_b.path / paths::client_params("det", round, k)));
      CHECK(file_text(dir_a.path / paths::client_train_losses("det", round, k)) ==
            file_text(dir_b.path / paths::client_train_losses("det", round, k)));
    }
  }
}

TEST_CASE("equal shard sizes make uniform and weighted fedavg coincide") {
  TempDir dir;
  ExperimentConfig base = tiny_config(dir.path, "eq");
  base.train_ratios = {1, 1, 1, 1};
  base.val_ratios = {1, 1, 1, 1};
  base.task.train_samples = 40;
  base.task.val_samples = 8;

  ExperimentConfig uniform = base;
  uniform.run_id = "eq-uniform";
  uniform.aggregator.strategy = Strategy::FedAvgUniform;
  ExperimentConfig weighted = base;
  weighted.run_id = "eq-weighted";
  weighted.aggregator.strategy = Strategy::FedAvgWeighted;

  const auto su = run_experiment(uniform);
  const auto sw = run_experiment(weighted);
  REQUIRE(su.per_round.size() == sw.per_round.size());
  for (std::size_t r = 0; r < su.per_round.size(); ++r) {
    CHECK(su.per_round[r].global_digest == sw.per_round[r].global_digest);
  }
}

TEST_CASE("resume after deleting later rounds reaches identical digests") {
  TempDir dir;
  const auto cfg = tiny_config(dir.path, "resume");
  const auto full = run_experiment(cfg);

  // Wipe everything after round 1, including the final artifacts.
  fs::remove_all(dir.path / "resume/round_2");
  fs::remove(dir.path / "resume/summary.json");
  fs::remove(dir.path / "resume/metrics.csv");
  fs::remove(dir.path / "resume/metrics.json");
  fs::remove(dir.path / "resume/decodes.csv");

  const auto resumed = run_experiment(cfg);
  CHECK(round_digests(resumed) == round_digests(full));
  CHECK(resumed.per_round.back().global_val_loss ==
        full.per_round.back().global_val_loss);
}

TEST_CASE("l-fedavg reports weights that sum to one") {
  TempDir dir;
  ExperimentConfig cfg = tiny_config(dir.path, "lfa");
  cfg.aggregator.strategy = Strategy::LFedAvg;
  const auto summary = run_experiment(cfg);
  for (const auto& r : summary.per_round) {
    double sum = 0.0;
    for (const auto& [id, w] : r.report.weights) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("compare_strategies shares the partition and emits one row each") {
  TempDir dir;
  ExperimentConfig cfg = tiny_config(dir.path, "cmp");
  const Strategy strategies[] = {Strategy::FedAvgUniform, Strategy::Krum,
                                 Strategy::LFedAvg};
  const auto summaries = compare_strategies(cfg, strategies);
  REQUIRE(summaries.size() == 3);
  // Same seed, same initial model for every strategy.
  CHECK(summaries[0].initial_global_digest == summaries[1].initial_global_digest);
  CHECK(summaries[1].initial_global_digest == summaries[2].initial_global_digest);
  const std::string table = file_text(dir.path / "cmp-comparison.csv");
  CHECK(table.find("fedavg-uniform") != std::string::npos);
  CHECK(table.find("krum") != std::string::npos);
  CHECK(table.find("l-fedavg") != std::string::npos);

  // Round-1 client uploads are shared, so strategies diverge only at
  // aggregation.
  const std::string u1 = file_text(
      dir.path / paths::client_params("cmp-fedavg-uniform", 1, 1));
  const std::string k1 =
      file_text(dir.path / paths::client_params("cmp-krum", 1, 1));
  CHECK(u1 == k1);
}

TEST_CASE("metrics recompute matches the run's own metrics") {
  TempDir dir;
  const auto cfg = tiny_config(dir.path, "rem");
  const auto summary = run_experiment(cfg);
  const std::string before = file_text(dir.path / "rem/metrics.csv");
  const auto report = recompute_metrics(dir.path.string(), "rem");
  const std::string after = file_text(dir.path / "rem/metrics.csv");
  CHECK(before == after);
  CHECK(report.rouge1_f1 == summary.final_metrics.rouge1_f1);
  CHECK(report.bleu == summary.final_metrics.bleu);
}

TEST_CASE("failed client fails the round with context") {
  TempDir dir;
  ExperimentConfig cfg = tiny_config(dir.path, "fail");
  cfg.timeout_ms = 2000;
  // Exponential decay blow-up: |1 - lr*wd| = 1e32 multiplies the params
  // every step until they overflow, which must surface as divergence.
  cfg.local_train.optimizer = OptimizerKind::Sgd;
  cfg.local_train.learning_rate = 1.0;
  cfg.local_train.weight_decay = 1e32;
  CHECK_THROWS_AS(run_experiment(cfg), DivergenceError);
  // The failure must be visible in the status store.
  StatusStore status(dir.path);
  bool saw_failed = false;
  for (int k = 1; k <= 4; ++k) {
    const auto record = read_client_status(status, "fail", 1, k);
    if (record && record->state == ClientState::Failed) saw_failed = true;
  }
  CHECK(saw_failed);
}

TEST_CASE("summary json carries the audit trail") {
  TempDir dir;
  ExperimentConfig cfg = tiny_config(dir.path, "audit");
  cfg.aggregator.strategy = Strategy::Krum;
  const auto summary = run_experiment(cfg);
  const auto j = nlohmann::json::parse(file_text(dir.path / "audit/summary.json"));
  CHECK(j.at("strategy") == "krum");
  CHECK(j.at("per_round").size() == 2);
  for (const auto& r : j.at("per_round")) {
    CHECK(r.at("aggregation").contains("scores"));
    CHECK(r.at("aggregation").contains("selected_client"));
    CHECK(r.at("aggregation").at("params_digest") == r.at("global_digest"));
  }
}
