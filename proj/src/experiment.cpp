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

#include "fedsim/experiment.h"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "nlohmann/json.hpp"

#include "fedsim/rng.h"
#include "fedsim/subprocess.h"

namespace fedsim {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void expect_keys(const nlohmann::json& j,
                 std::initializer_list<const char*> allowed,
                 const std::string& context) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("config: unknown key '" + key + "' in " + context);
    }
  }
}

SyntheticTaskSpec effective_task(const ExperimentConfig& cfg) {
  SyntheticTaskSpec task = cfg.task;
  task.seed = cfg.seed;
  return task;
}

PartitionSpec train_partition_spec(const ExperimentConfig& cfg) {
  return PartitionSpec{cfg.train_ratios,
                       mix_seed(cfg.seed, {seed_domain::kPartitionTrain}),
                       cfg.shuffle, cfg.class_skew};
}

PartitionSpec val_partition_spec(const ExperimentConfig& cfg) {
  return PartitionSpec{cfg.val_ratios,
                       mix_seed(cfg.seed, {seed_domain::kPartitionVal}),
                       cfg.shuffle, cfg.class_skew};
}

ClientShard client_shard(const ExperimentConfig& cfg, const SyntheticData& data,
                         int client_id) {
  auto train_shards = partition(data.train, train_partition_spec(cfg));
  auto val_shards = partition(data.val, val_partition_spec(cfg));
  return ClientShard{std::move(train_shards[static_cast<std::size_t>(client_id - 1)]),
                     std::move(val_shards[static_cast<std::size_t>(client_id - 1)])};
}

fs::path run_dir(const ExperimentConfig& cfg) {
  return fs::path(cfg.store_root) / cfg.run_id;
}

std::string train_losses_csv(const std::vector<TrainStepLoss>& trace) {
  std::string out = "step,epoch,train_loss\n";
  for (const auto& row : trace) {
    out += std::to_string(row.step);
    out += ',';
    out += std::to_string(row.epoch);
    out += ',';
    out += fmt_double(row.loss);
    out += '\n';
  }
  return out;
}

std::string val_losses_csv(const std::vector<double>& losses) {
  std::string out = "epoch,val_loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) {
    out += std::to_string(e + 1);
    out += ',';
    out += fmt_double(losses[e]);
    out += '\n';
  }
  return out;
}

metrics::TokenSequence ids_to_tokens(std::span<const int> ids) {
  metrics::TokenSequence out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(std::to_string(id));
  return out;
}

struct FinalEvaluation {
  metrics::MetricReport report;
  std::string decodes_csv;
};

FinalEvaluation evaluate_final_model(const ToyCaptioner& model,
                                     const ParamVector& global,
                                     const Dataset& test, int bleu_max_n) {
  std::vector<std::pair<metrics::TokenSequence, metrics::TokenSequence>> pairs;
  pairs.reserve(test.size());
  std::string csv = "sample_id,candidate,reference\n";
  for (const auto& sample : test) {
    const auto decoded = strip_pad(model.decode(global, sample.features));
    pairs.emplace_back(ids_to_tokens(decoded), ids_to_tokens(sample.ref_tokens));
    csv += std::to_string(sample.id);
    csv += ',';
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      if (i) csv += ' ';
      csv += std::to_string(decoded[i]);
    }
    csv += ',';
    for (std::size_t i = 0; i < sample.ref_tokens.size(); ++i) {
      if (i) csv += ' ';
      csv += std::to_string(sample.ref_tokens[i]);
    }
    csv += '\n';
  }
  FinalEvaluation out;
  out.report = metrics::evaluate_corpus(pairs, bleu_max_n);
  out.decodes_csv = std::move(csv);
  return out;
}

nlohmann::json metric_summary_json(const metrics::MetricReport& report) {
  return {{"rouge1_f1", report.rouge1_f1}, {"rouge2_f1", report.rouge2_f1},
          {"rouge3_f1", report.rouge3_f1}, {"rouge4_f1", report.rouge4_f1},
          {"rougeL_f1", report.rougeL_f1}, {"bleu", report.bleu}};
}

}  // namespace

std::string to_string(ExecutionMode mode) {
  return mode == ExecutionMode::InProcess ? "inprocess" : "multiprocess";
}

ExecutionMode execution_mode_from_string(const std::string& name) {
  if (name == "inprocess") return ExecutionMode::InProcess;
  if (name == "multiprocess") return ExecutionMode::MultiProcess;
  throw ConfigError("unknown execution mode '" + name + "'");
}

nlohmann::json adversary_to_json(const AdversaryMode& mode) {
  switch (mode.kind) {
    case AdversaryMode::Kind::Honest:
      return {{"mode", "honest"}};
    case AdversaryMode::Kind::Scale:
      return {{"mode", "scale"}, {"factor", mode.factor}};
    case AdversaryMode::Kind::GaussianNoise:
      return {{"mode", "gaussian_noise"}, {"sigma", mode.sigma}};
    case AdversaryMode::Kind::SignFlip:
      return {{"mode", "sign_flip"}};
  }
  throw ConfigError("unknown adversary mode");
}

AdversaryMode adversary_from_json(const nlohmann::json& j) {
  AdversaryMode mode;
  const std::string kind = j.at("mode").get<std::string>();
  if (kind == "honest") {
    expect_keys(j, {"mode"}, "adversary");
    mode.kind = AdversaryMode::Kind::Honest;
  } else if (kind == "scale") {
    expect_keys(j, {"mode", "factor"}, "adversary");
    mode.kind = AdversaryMode::Kind::Scale;
    mode.factor = j.at("factor").get<double>();
  } else if (kind == "gaussian_noise") {
    expect_keys(j, {"mode", "sigma"}, "adversary");
    mode.kind = AdversaryMode::Kind::GaussianNoise;
    mode.sigma = j.at("sigma").get<double>();
  } else if (kind == "sign_flip") {
    expect_keys(j, {"mode"}, "adversary");
    mode.kind = AdversaryMode::Kind::SignFlip;
  } else {
    throw ConfigError("unknown adversary mode '" + kind + "'");
  }
  return mode;
}

void ExperimentConfig::validate() const {
  if (run_id.empty() || run_id.find('/') != std::string::npos) {
    throw ConfigError("config: run_id must be a non-empty path component");
  }
  if (num_clients < 1) throw ConfigError("config: num_clients must be >= 1");
  if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
  if (train_ratios.size() != static_cast<std::size_t>(num_clients) ||
      val_ratios.size() != static_cast<std::size_t>(num_clients)) {
    throw ConfigError("config: ratio list lengths must equal num_clients");
  }
  for (double r : train_ratios) {
    if (!(r > 0)) throw ConfigError("config: train ratios must be positive");
  }
  for (double r : val_ratios) {
    if (!(r > 0)) throw ConfigError("config: val ratios must be positive");
  }
  if (!(aggregator.alpha >= 0.0 && aggregator.alpha <= 1.0)) {
    throw ConfigError("config: alpha must be in [0, 1]");
  }
  if (!(aggregator.loss_floor > 0.0)) {
    throw ConfigError("config: loss_floor must be > 0");
  }
  if (aggregator.strategy == Strategy::Krum &&
      num_clients < aggregator.fault_tolerance + 3) {
    throw ConfigError(
        "config: krum requires num_clients >= fault_tolerance + 3");
  }
  if (local_train.epochs_per_round < 1 || local_train.batch_size < 1) {
    throw ConfigError("config: epochs_per_round and batch_size must be >= 1");
  }
  if (!(local_train.learning_rate > 0.0)) {
    throw ConfigError("config: learning_rate must be > 0");
  }
  if (task.vocab_size < 2 || task.num_classes < 2 || task.report_length < 1 ||
      task.feature_dim < 1) {
    throw ConfigError("config: invalid task dimensions");
  }
  if (!(task.token_swap_rate >= 0.0 && task.token_swap_rate <= 1.0)) {
    throw ConfigError("config: token_swap_rate must be in [0, 1]");
  }
  if (task.train_samples < num_clients || task.val_samples < num_clients ||
      task.test_samples < 1) {
    throw ConfigError("config: too few samples for the client count");
  }
  if (poll_interval_ms <= 0 || timeout_ms < poll_interval_ms) {
    throw ConfigError("config: need timeout_ms >= poll_interval_ms > 0");
  }
  for (const auto& [client_id, mode] : adversaries) {
    if (client_id < 1 || client_id > num_clients) {
      throw ConfigError("config: adversary client_id out of range");
    }
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["num_clients"] = num_clients;
  j["rounds"] = rounds;
  j["seed"] = seed;
  j["store_root"] = store_root;
  j["mode"] = fedsim::to_string(mode);
  j["poll_interval_ms"] = poll_interval_ms;
  j["timeout_ms"] = timeout_ms;
  j["partition"] = {{"train_ratios", train_ratios},
                    {"val_ratios", val_ratios},
                    {"shuffle", shuffle},
                    {"class_skew", class_skew}};
  j["aggregator"] = {
      {"strategy", fedsim::to_string(aggregator.strategy)},
      {"alpha", aggregator.alpha},
      {"fault_tolerance", aggregator.fault_tolerance},
      {"loss_floor", aggregator.loss_floor},
      {"normalize_loss_weights_first", aggregator.normalize_loss_weights_first}};
  j["local_train"] = {{"epochs_per_round", local_train.epochs_per_round},
                      {"batch_size", local_train.batch_size},
                      {"optimizer", fedsim::to_string(local_train.optimizer)},
                      {"learning_rate", local_train.learning_rate},
                      {"weight_decay", local_train.weight_decay}};
  j["task"] = {{"feature_dim", task.feature_dim},
               {"vocab_size", task.vocab_size},
               {"report_length", task.report_length},
               {"num_classes", task.num_classes},
               {"noise_sigma", task.noise_sigma},
               {"token_swap_rate", task.token_swap_rate},
               {"train_samples", task.train_samples},
               {"test_samples", task.test_samples},
               {"val_samples", task.val_samples}};
  nlohmann::json adv = nlohmann::json::object();
  for (const auto& [client_id, mode_value] : adversaries) {
    adv[std::to_string(client_id)] = adversary_to_json(mode_value);
  }
  j["adversaries"] = std::move(adv);
  if (!worker_exe.empty()) j["worker_exe"] = worker_exe;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  expect_keys(j,
              {"run_id", "num_clients", "rounds", "seed", "store_root", "mode",
               "poll_interval_ms", "timeout_ms", "partition", "aggregator",
               "local_train", "task", "adversaries", "worker_exe"},
              "top level");
  ExperimentConfig cfg;
  if (j.contains("run_id")) cfg.run_id = j["run_id"].get<std::string>();
  if (j.contains("num_clients")) cfg.num_clients = j["num_clients"].get<int>();
  if (j.contains("rounds")) cfg.rounds = j["rounds"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("store_root")) cfg.store_root = j["store_root"].get<std::string>();
  if (j.contains("mode")) {
    cfg.mode = execution_mode_from_string(j["mode"].get<std::string>());
  }
  if (j.contains("poll_interval_ms")) {
    cfg.poll_interval_ms = j["poll_interval_ms"].get<int>();
  }
  if (j.contains("timeout_ms")) cfg.timeout_ms = j["timeout_ms"].get<int>();
  if (j.contains("partition")) {
    const auto& p = j["partition"];
    expect_keys(p, {"train_ratios", "val_ratios", "shuffle", "class_skew"},
                "partition");
    if (p.contains("train_ratios")) {
      cfg.train_ratios = p["train_ratios"].get<std::vector<double>>();
    }
    if (p.contains("val_ratios")) {
      cfg.val_ratios = p["val_ratios"].get<std::vector<double>>();
    }
    if (p.contains("shuffle")) cfg.shuffle = p["shuffle"].get<bool>();
    if (p.contains("class_skew")) cfg.class_skew = p["class_skew"].get<double>();
  }
  if (j.contains("aggregator")) {
    const auto& a = j["aggregator"];
    expect_keys(a,
                {"strategy", "alpha", "fault_tolerance", "loss_floor",
                 "normalize_loss_weights_first"},
                "aggregator");
    if (a.contains("strategy")) {
      cfg.aggregator.strategy =
          strategy_from_string(a["strategy"].get<std::string>());
    }
    if (a.contains("alpha")) cfg.aggregator.alpha = a["alpha"].get<double>();
    if (a.contains("fault_tolerance")) {
      cfg.aggregator.fault_tolerance = a["fault_tolerance"].get<int>();
    }
    if (a.contains("loss_floor")) {
      cfg.aggregator.loss_floor = a["loss_floor"].get<double>();
    }
    if (a.contains("normalize_loss_weights_first")) {
      cfg.aggregator.normalize_loss_weights_first =
          a["normalize_loss_weights_first"].get<bool>();
    }
  }
  if (j.contains("local_train")) {
    const auto& t = j["local_train"];
    expect_keys(t,
                {"epochs_per_round", "batch_size", "optimizer", "learning_rate",
                 "weight_decay"},
                "local_train");
    if (t.contains("epochs_per_round")) {
      cfg.local_train.epochs_per_round = t["epochs_per_round"].get<int>();
    }
    if (t.contains("batch_size")) {
      cfg.local_train.batch_size = t["batch_size"].get<int>();
    }
    if (t.contains("optimizer")) {
      cfg.local_train.optimizer =
          optimizer_from_string(t["optimizer"].get<std::string>());
    }
    if (t.contains("learning_rate")) {
      cfg.local_train.learning_rate = t["learning_rate"].get<double>();
    }
    if (t.contains("weight_decay")) {
      cfg.local_train.weight_decay = t["weight_decay"].get<double>();
    }
  }
  if (j.contains("task")) {
    const auto& t = j["task"];
    expect_keys(t,
                {"feature_dim", "vocab_size", "report_length", "num_classes",
                 "noise_sigma", "token_swap_rate", "train_samples",
                 "test_samples", "val_samples"},
                "task");
    if (t.contains("feature_dim")) cfg.task.feature_dim = t["feature_dim"].get<int>();
    if (t.contains("vocab_size")) cfg.task.vocab_size = t["vocab_size"].get<int>();
    if (t.contains("report_length")) {
      cfg.task.report_length = t["report_length"].get<int>();
    }
    if (t.contains("num_classes")) cfg.task.num_classes = t["num_classes"].get<int>();
    if (t.contains("noise_sigma")) cfg.task.noise_sigma = t["noise_sigma"].get<double>();
    if (t.contains("token_swap_rate")) {
      cfg.task.token_swap_rate = t["token_swap_rate"].get<double>();
    }
    if (t.contains("train_samples")) {
      cfg.task.train_samples = t["train_samples"].get<int>();
    }
    if (t.contains("test_samples")) {
      cfg.task.test_samples = t["test_samples"].get<int>();
    }
    if (t.contains("val_samples")) cfg.task.val_samples = t["val_samples"].get<int>();
  }
  if (j.contains("adversaries")) {
    for (const auto& [key, value] : j["adversaries"].items()) {
      cfg.adversaries[std::stoi(key)] = adversary_from_json(value);
    }
  }
  if (j.contains("worker_exe")) cfg.worker_exe = j["worker_exe"].get<std::string>();
  return cfg;
}

void ExperimentConfig::save(const fs::path& path) const {
  atomic_write_text(path, to_json().dump(2) + "\n");
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

nlohmann::json ExperimentSummary::to_json() const {
  nlohmann::json rounds_json = nlohmann::json::array();
  for (const auto& r : per_round) {
    rounds_json.push_back({{"round", r.round},
                           {"global_digest", r.global_digest},
                           {"global_val_loss", r.global_val_loss},
                           {"aggregation", r.report.to_json()}});
  }
  return {{"run_id", run_id},
          {"strategy", strategy},
          {"num_clients", num_clients},
          {"rounds", rounds},
          {"seed", seed},
          {"initial_global_digest", initial_global_digest},
          {"per_round", std::move(rounds_json)},
          {"final_metrics", metric_summary_json(final_metrics)}};
}

void run_client(const ExperimentConfig& cfg, int client_id) {
  cfg.validate();
  if (client_id < 1 || client_id > cfg.num_clients) {
    throw ConfigError("run_client: client_id out of range");
  }
  BlobStore blob(cfg.store_root);
  StatusStore status(cfg.store_root);
  const auto poll = std::chrono::milliseconds(cfg.poll_interval_ms);
  const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);

  const SyntheticData data = synth_generate(effective_task(cfg));
  const ClientShard shard = client_shard(cfg, data, client_id);
  const ToyCaptioner model(cfg.task);

  AdversaryMode adversary;
  if (auto it = cfg.adversaries.find(client_id); it != cfg.adversaries.end()) {
    adversary = it->second;
  }

  for (int round = 1; round <= cfg.rounds; ++round) {
    const auto existing =
        read_client_status(status, cfg.run_id, round, client_id);
    if (existing && existing->state == ClientState::Uploaded) {
      continue;  // resumed run; this round is already done
    }
    const ParamVector global =
        client_await_global(status, blob, cfg.run_id, round - 1, poll, timeout);

    RoundStatus record;
    record.run_id = cfg.run_id;
    record.round = round;
    record.client_id = client_id;
    record.data_length = shard.train.size();
    record.state = ClientState::Assigned;
    record.timestamp = utc_timestamp_now();
    write_client_status(status, record);

    record.state = ClientState::Training;
    record.timestamp = utc_timestamp_now();
    write_client_status(status, record);

    try {
      LocalTrainConfig train_cfg = cfg.local_train;
      train_cfg.seed = mix_seed(
          cfg.seed, {seed_domain::kClientTrain,
                     static_cast<std::uint64_t>(client_id),
                     static_cast<std::uint64_t>(round)});
      const LocalTrainResult result =
          local_train(model, global, shard, train_cfg);

      ClientUpdate update{client_id, result.params, shard.train.size(),
                          result.validation_loss};
      update = apply_adversary(
          update, adversary,
          mix_seed(cfg.seed, {seed_domain::kAdversary,
                              static_cast<std::uint64_t>(client_id),
                              static_cast<std::uint64_t>(round)}));

      const std::string digest =
          publish_params(blob, cfg.run_id, round, client_id, update.params);

      const fs::path base = blob.root();
      atomic_write_text(
          base / paths::client_train_losses(cfg.run_id, round, client_id),
          train_losses_csv(result.train_trace));
      atomic_write_text(
          base / paths::client_val_losses(cfg.run_id, round, client_id),
          val_losses_csv(result.epoch_val_losses));

      record.state = ClientState::Uploaded;
      record.params_digest = digest;
      record.validation_loss = update.validation_loss;
      record.timestamp = utc_timestamp_now();
      write_client_status(status, record);
    } catch (...) {
      record.state = ClientState::Failed;
      record.timestamp = utc_timestamp_now();
      write_client_status(status, record);
      throw;
    }
  }
}

ExperimentSummary run_server(const ExperimentConfig& cfg) {
  cfg.validate();
  BlobStore blob(cfg.store_root);
  StatusStore status(cfg.store_root);
  const auto poll = std::chrono::milliseconds(cfg.poll_interval_ms);
  const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);

  const SyntheticData data = synth_generate(effective_task(cfg));
  const ToyCaptioner model(cfg.task);
  std::vector<int> expected(static_cast<std::size_t>(cfg.num_clients));
  std::iota(expected.begin(), expected.end(), 1);

  ExperimentSummary summary;
  summary.run_id = cfg.run_id;
  summary.strategy = to_string(cfg.aggregator.strategy);
  summary.num_clients = cfg.num_clients;
  summary.rounds = cfg.rounds;
  summary.seed = cfg.seed;

  // Round 0: the initial model.
  if (!blob.exists(paths::global_params(cfg.run_id, 0))) {
    write_server_phase(status,
                       ServerPhase{cfg.run_id, 0, ServerPhaseKind::Distributing});
    const ParamVector initial = model.init_params(cfg.seed);
    AggregationReport report;
    report.strategy = "initial";
    report.round = 0;
    report.params_digest = param_digest(initial);
    status.put(paths::aggregation_report(cfg.run_id, 0), report.to_json());
    publish_params(blob, cfg.run_id, 0, std::nullopt, initial);
    write_server_phase(status,
                       ServerPhase{cfg.run_id, 0, ServerPhaseKind::Published});
    summary.initial_global_digest = report.params_digest;
  } else {
    const auto j = status.get(paths::aggregation_report(cfg.run_id, 0));
    summary.initial_global_digest =
        AggregationReport::from_json(*j).params_digest;
  }

  ParamVector last_global;
  for (int round = 1; round <= cfg.rounds; ++round) {
    AggregationReport report;
    if (blob.exists(paths::global_params(cfg.run_id, round))) {
      // Resumed run: this round was already published.
      const auto j = status.get(paths::aggregation_report(cfg.run_id, round));
      report = AggregationReport::from_json(*j);
      last_global =
          fetch_params(blob, paths::global_params(cfg.run_id, round),
                       report.params_digest);
    } else {
      write_server_phase(
          status,
          ServerPhase{cfg.run_id, round, ServerPhaseKind::AwaitingClients});
      const auto updates = barrier_await_clients(
          status, blob, cfg.run_id, round, expected, poll, timeout);
      write_server_phase(
          status, ServerPhase{cfg.run_id, round, ServerPhaseKind::Aggregating});
      auto [global, agg_report] = aggregate(updates, cfg.aggregator);
      publish_global_and_advance(status, blob, cfg.run_id, round, global,
                                 agg_report);
      agg_report.round = round;
      report = std::move(agg_report);
      last_global = std::move(global);
    }
    const double val_loss = mean_loss_over(model, last_global, data.val);
    summary.per_round.push_back(
        RoundSummary{round, report.params_digest, val_loss, report});
  }
  write_server_phase(
      status, ServerPhase{cfg.run_id, cfg.rounds, ServerPhaseKind::Finished});

  // Final evaluation on the held-out test split.
  const FinalEvaluation eval =
      evaluate_final_model(model, last_global, data.test, 4);
  summary.final_metrics = eval.report;

  const fs::path dir = run_dir(cfg);
  atomic_write_text(dir / "decodes.csv", eval.decodes_csv);
  atomic_write_text(dir / "metrics.csv",
                    metrics_csv_header() +
                        metrics_csv_row(cfg.run_id, eval.report));
  atomic_write_text(dir / "metrics.json", eval.report.to_json().dump(2) + "\n");
  write_samples_csv(data, dir / "samples.csv");
  atomic_write_text(dir / "summary.json", summary.to_json().dump(2) + "\n");
  return summary;
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  BlobStore blob(cfg.store_root);  // ensures the root exists
  ExperimentConfig saved = cfg;
  saved.save(run_dir(cfg) / "config.json");

  if (cfg.mode == ExecutionMode::MultiProcess) {
    if (cfg.worker_exe.empty()) {
      throw ConfigError("multiprocess mode requires worker_exe");
    }
    const fs::path config_path = run_dir(cfg) / "config.json";
    std::vector<Subprocess> clients;
    clients.reserve(static_cast<std::size_t>(cfg.num_clients));
    for (int k = 1; k <= cfg.num_clients; ++k) {
      clients.emplace_back(std::vector<std::string>{
          cfg.worker_exe, "worker", "--config", config_path.string(),
          "--client-id", std::to_string(k)});
    }
    ExperimentSummary summary = run_server(cfg);
    for (int k = 0; k < cfg.num_clients; ++k) {
      const int rc = clients[static_cast<std::size_t>(k)].wait();
      if (rc != 0) {
        throw std::runtime_error("client process " + std::to_string(k + 1) +
                                 " exited with status " + std::to_string(rc));
      }
    }
    return summary;
  }

  // In-process: clients as threads, server in this thread. The roles still
  // communicate only through the stores.
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> client_errors(
      static_cast<std::size_t>(cfg.num_clients));
  threads.reserve(static_cast<std::size_t>(cfg.num_clients));
  for (int k = 1; k <= cfg.num_clients; ++k) {
    threads.emplace_back([&cfg, k, &client_errors] {
      try {
        run_client(cfg, k);
      } catch (...) {
        client_errors[static_cast<std::size_t>(k - 1)] =
            std::current_exception();
      }
    });
  }
  ExperimentSummary summary;
  std::exception_ptr server_error;
  try {
    summary = run_server(cfg);
  } catch (...) {
    server_error = std::current_exception();
  }
  for (auto& t : threads) t.join();
  for (const auto& err : client_errors) {
    if (err) std::rethrow_exception(err);
  }
  if (server_error) std::rethrow_exception(server_error);
  return summary;
}

std::vector<ExperimentSummary> compare_strategies(
    const ExperimentConfig& cfg, std::span<const Strategy> strategies) {
  if (strategies.empty()) {
    throw EmptyInputError("compare_strategies: no strategies");
  }
  std::vector<ExperimentSummary> summaries;
  std::string table = metrics_csv_header();
  for (Strategy strategy : strategies) {
    ExperimentConfig sub = cfg;
    sub.run_id = cfg.run_id + "-" + to_string(strategy);
    sub.aggregator.strategy = strategy;
    summaries.push_back(run_experiment(sub));
    table += metrics_csv_row(to_string(strategy), summaries.back().final_metrics);
  }
  atomic_write_text(
      fs::path(cfg.store_root) / (cfg.run_id + "-comparison.csv"), table);
  return summaries;
}

metrics::MetricReport recompute_metrics(const std::string& store_root,
                                        const std::string& run_id,
                                        int bleu_max_n) {
  const fs::path dir = fs::path(store_root) / run_id;
  const std::string csv = read_text_file(dir / "decodes.csv");
  std::vector<std::pair<metrics::TokenSequence, metrics::TokenSequence>> pairs;
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw StorageError("decodes.csv: malformed line '" + line + "'");
    }
    auto split_tokens = [](const std::string& field) {
      metrics::TokenSequence toks;
      std::istringstream ss(field);
      std::string tok;
      while (ss >> tok) toks.push_back(tok);
      return toks;
    };
    pairs.emplace_back(split_tokens(line.substr(c1 + 1, c2 - c1 - 1)),
                       split_tokens(line.substr(c2 + 1)));
  }
  const auto report = metrics::evaluate_corpus(pairs, bleu_max_n);
  atomic_write_text(dir / "metrics.csv",
                    metrics_csv_header() + metrics_csv_row(run_id, report));
  atomic_write_text(dir / "metrics.json", report.to_json().dump(2) + "\n");
  return report;
}

std::string metrics_csv_header() {
  return "run,rouge1_f1,rouge2_f1,rouge3_f1,rouge4_f1,rougeL_f1,bleu\n";
}

std::string metrics_csv_row(const std::string& run_label,
                            const metrics::MetricReport& report) {
  std::string row = run_label;
  for (double v : {report.rouge1_f1, report.rouge2_f1, report.rouge3_f1,
                   report.rouge4_f1, report.rougeL_f1, report.bleu}) {
    row += ',';
    row += fmt_double(v);
  }
  row += '\n';
  return row;
}

}  // namespace fedsim
