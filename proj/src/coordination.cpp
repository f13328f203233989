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

#include "fedsim/coordination.h"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <thread>

#include "nlohmann/json.hpp"

#include "fedsim/digest.h"

namespace fedsim {

namespace fs = std::filesystem;

namespace {

std::atomic<std::uint64_t> temp_counter{0};

fs::path temp_sibling(const fs::path& target) {
  const auto n = temp_counter.fetch_add(1);
  return target.parent_path() /
         (".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(n) +
          "-" + target.filename().string());
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StorageError("cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

// Write-to-temp-then-rename; rename is the publication point.
void atomic_write(const fs::path& target, std::span<const std::uint8_t> bytes) {
  fs::create_directories(target.parent_path());
  const fs::path temp = temp_sibling(target);
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw StorageError("cannot open temp file " + temp.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw StorageError("short write to " + temp.string());
    }
  }
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) {
    fs::remove(temp);
    throw StorageError("rename to " + target.string() + " failed: " +
                       ec.message());
  }
}

void sleep_poll(std::chrono::milliseconds poll) {
  std::this_thread::sleep_for(poll);
}

}  // namespace

BlobStore::BlobStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path BlobStore::path_for(const std::string& key) const {
  return root_ / key;
}

std::string BlobStore::put(const std::string& key,
                           std::span<const std::uint8_t> bytes) {
  const std::string digest = sha256_hex(bytes);
  const fs::path target = path_for(key);
  if (fs::exists(target)) {
    const std::string existing = sha256_hex(read_file_bytes(target));
    if (existing != digest) {
      throw IntegrityError("blob put: key " + key +
                           " already exists with different content");
    }
    return digest;
  }
  atomic_write(target, bytes);
  const std::string check = sha256_hex(read_file_bytes(target));
  if (check != digest) {
    throw IntegrityError("blob put: verify-after-write digest mismatch for " +
                         key);
  }
  return digest;
}

std::vector<std::uint8_t> BlobStore::get(const std::string& key) const {
  return read_file_bytes(path_for(key));
}

bool BlobStore::exists(const std::string& key) const {
  return fs::exists(path_for(key));
}

StatusStore::StatusStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path StatusStore::path_for(const std::string& key) const {
  return root_ / key;
}

void StatusStore::put(const std::string& key, const nlohmann::json& record) {
  const std::string text = record.dump(2);
  atomic_write(path_for(key),
               std::span<const std::uint8_t>(
                   reinterpret_cast<const std::uint8_t*>(text.data()),
                   text.size()));
}

std::optional<nlohmann::json> StatusStore::get(const std::string& key) const {
  const fs::path path = path_for(key);
  if (!fs::exists(path)) return std::nullopt;
  const auto bytes = read_file_bytes(path);
  return nlohmann::json::parse(bytes.begin(), bytes.end());
}

std::string to_string(ClientState state) {
  switch (state) {
    case ClientState::Assigned: return "assigned";
    case ClientState::Training: return "training";
    case ClientState::Uploaded: return "uploaded";
    case ClientState::Failed: return "failed";
  }
  throw ConfigError("unknown client state");
}

ClientState client_state_from_string(const std::string& name) {
  if (name == "assigned") return ClientState::Assigned;
  if (name == "training") return ClientState::Training;
  if (name == "uploaded") return ClientState::Uploaded;
  if (name == "failed") return ClientState::Failed;
  throw ConfigError("unknown client state '" + name + "'");
}

nlohmann::json RoundStatus::to_json() const {
  return {{"run_id", run_id},
          {"round", round},
          {"client_id", client_id},
          {"state", fedsim::to_string(state)},
          {"data_length", data_length},
          {"validation_loss", validation_loss},
          {"params_digest", params_digest},
          {"timestamp", timestamp}};
}

RoundStatus RoundStatus::from_json(const nlohmann::json& j) {
  RoundStatus s;
  s.run_id = j.at("run_id").get<std::string>();
  s.round = j.at("round").get<int>();
  s.client_id = j.at("client_id").get<int>();
  s.state = client_state_from_string(j.at("state").get<std::string>());
  s.data_length = j.at("data_length").get<std::uint64_t>();
  s.validation_loss = j.at("validation_loss").get<double>();
  s.params_digest = j.at("params_digest").get<std::string>();
  s.timestamp = j.at("timestamp").get<std::string>();
  return s;
}

std::string to_string(ServerPhaseKind phase) {
  switch (phase) {
    case ServerPhaseKind::Distributing: return "distributing";
    case ServerPhaseKind::AwaitingClients: return "awaiting_clients";
    case ServerPhaseKind::Aggregating: return "aggregating";
    case ServerPhaseKind::Published: return "published";
    case ServerPhaseKind::Finished: return "finished";
  }
  throw ConfigError("unknown server phase");
}

ServerPhaseKind server_phase_from_string(const std::string& name) {
  if (name == "distributing") return ServerPhaseKind::Distributing;
  if (name == "awaiting_clients") return ServerPhaseKind::AwaitingClients;
  if (name == "aggregating") return ServerPhaseKind::Aggregating;
  if (name == "published") return ServerPhaseKind::Published;
  if (name == "finished") return ServerPhaseKind::Finished;
  throw ConfigError("unknown server phase '" + name + "'");
}

nlohmann::json ServerPhase::to_json() const {
  return {{"run_id", run_id},
          {"round", round},
          {"phase", fedsim::to_string(phase)}};
}

ServerPhase ServerPhase::from_json(const nlohmann::json& j) {
  ServerPhase p;
  p.run_id = j.at("run_id").get<std::string>();
  p.round = j.at("round").get<int>();
  p.phase = server_phase_from_string(j.at("phase").get<std::string>());
  return p;
}

namespace paths {

namespace {
std::string round_dir(const std::string& run_id, int round) {
  return run_id + "/round_" + std::to_string(round);
}
}  // namespace

std::string client_params(const std::string& run_id, int round, int client_id) {
  return round_dir(run_id, round) + "/client_" + std::to_string(client_id) +
         ".params";
}

std::string client_status(const std::string& run_id, int round, int client_id) {
  return round_dir(run_id, round) + "/client_" + std::to_string(client_id) +
         ".status.json";
}

std::string client_train_losses(const std::string& run_id, int round,
                                int client_id) {
  return round_dir(run_id, round) + "/client_" + std::to_string(client_id) +
         ".losses.csv";
}

std::string client_val_losses(const std::string& run_id, int round,
                              int client_id) {
  return round_dir(run_id, round) + "/client_" + std::to_string(client_id) +
         ".val_losses.csv";
}

std::string global_params(const std::string& run_id, int round) {
  return round_dir(run_id, round) + "/global.params";
}

std::string aggregation_report(const std::string& run_id, int round) {
  return round_dir(run_id, round) + "/aggregation.json";
}

std::string server_phase(const std::string& run_id) {
  return run_id + "/server.phase.json";
}

}  // namespace paths

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void atomic_write_text(const std::filesystem::path& path,
                       std::string_view text) {
  atomic_write(path, std::span<const std::uint8_t>(
                         reinterpret_cast<const std::uint8_t*>(text.data()),
                         text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_server_phase(StatusStore& status, const ServerPhase& phase) {
  status.put(paths::server_phase(phase.run_id), phase.to_json());
}

std::optional<ServerPhase> read_server_phase(const StatusStore& status,
                                             const std::string& run_id) {
  auto j = status.get(paths::server_phase(run_id));
  if (!j) return std::nullopt;
  return ServerPhase::from_json(*j);
}

void write_client_status(StatusStore& status, const RoundStatus& record) {
  status.put(paths::client_status(record.run_id, record.round, record.client_id),
             record.to_json());
}

std::optional<RoundStatus> read_client_status(const StatusStore& status,
                                              const std::string& run_id,
                                              int round, int client_id) {
  auto j = status.get(paths::client_status(run_id, round, client_id));
  if (!j) return std::nullopt;
  return RoundStatus::from_json(*j);
}

std::string publish_params(BlobStore& blob, const std::string& run_id,
                           int round, std::optional<int> client_id,
                           const ParamVector& params) {
  const std::string key = client_id
                              ? paths::client_params(run_id, round, *client_id)
                              : paths::global_params(run_id, round);
  return blob.put(key, params.serialize());
}

ParamVector fetch_params(const BlobStore& blob, const std::string& key,
                         const std::string& expected_digest) {
  const auto bytes = blob.get(key);
  if (!expected_digest.empty()) {
    const std::string actual = sha256_hex(bytes);
    if (actual != expected_digest) {
      throw IntegrityError("blob " + key + ": digest mismatch (expected " +
                           expected_digest + ", got " + actual + ")");
    }
  }
  try {
    return ParamVector::deserialize(bytes);
  } catch (const DecodeError& e) {
    throw IntegrityError("blob " + key + ": corrupt parameter file (" +
                         e.what() + ")");
  }
}

std::vector<ClientUpdate> barrier_await_clients(
    const StatusStore& status, const BlobStore& blob, const std::string& run_id,
    int round, const std::vector<int>& expected,
    std::chrono::milliseconds poll_interval,
    std::chrono::milliseconds timeout) {
  const auto phase = read_server_phase(status, run_id);
  if (!phase || phase->round != round ||
      phase->phase != ServerPhaseKind::AwaitingClients) {
    throw ProtocolOrderError(
        "barrier: server phase is not awaiting_clients for round " +
        std::to_string(round));
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::vector<ClientUpdate> updates;
  std::vector<int> pending = expected;
  while (true) {
    std::vector<int> still_pending;
    for (int client_id : pending) {
      const auto record = read_client_status(status, run_id, round, client_id);
      if (!record) {
        still_pending.push_back(client_id);
        continue;
      }
      if (record->state == ClientState::Failed) {
        throw RoundFailedError(client_id,
                               "round " + std::to_string(round) + ": client " +
                                   std::to_string(client_id) +
                                   " reported failed");
      }
      if (record->state != ClientState::Uploaded) {
        still_pending.push_back(client_id);
        continue;
      }
      ParamVector params =
          fetch_params(blob, paths::client_params(run_id, round, client_id),
                       record->params_digest);
      updates.push_back(ClientUpdate{client_id, std::move(params),
                                     record->data_length,
                                     record->validation_loss});
    }
    pending = std::move(still_pending);
    if (pending.empty()) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      std::string names;
      for (std::size_t i = 0; i < pending.size(); ++i) {
        if (i) names += ", ";
        names += std::to_string(pending[i]);
      }
      throw BarrierTimeoutError(
          pending, "barrier timeout in round " + std::to_string(round) +
                       "; missing clients: " + names);
    }
    sleep_poll(poll_interval);
  }
  return updates;
}

void publish_global_and_advance(StatusStore& status, BlobStore& blob,
                                const std::string& run_id, int round,
                                const ParamVector& params,
                                AggregationReport report) {
  const auto phase = read_server_phase(status, run_id);
  if (!phase || phase->round != round ||
      phase->phase != ServerPhaseKind::Aggregating) {
    throw ProtocolOrderError(
        "publish_global: server phase is not aggregating for round " +
        std::to_string(round));
  }
  if (blob.exists(paths::global_params(run_id, round))) {
    throw ProtocolOrderError("publish_global: round " + std::to_string(round) +
                             " already has a published global");
  }
  report.round = round;
  report.params_digest = param_digest(params);
  // Report first, then blob: resumption keys on the blob's existence.
  status.put(paths::aggregation_report(run_id, round), report.to_json());
  publish_params(blob, run_id, round, std::nullopt, params);
  write_server_phase(status,
                     ServerPhase{run_id, round, ServerPhaseKind::Published});
}

ParamVector client_await_global(const StatusStore& status,
                                const BlobStore& blob,
                                const std::string& run_id, int round,
                                std::chrono::milliseconds poll_interval,
                                std::chrono::milliseconds timeout) {
  const std::string key = paths::global_params(run_id, round);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!blob.exists(key)) {
    if (std::chrono::steady_clock::now() >= deadline) {
      throw BarrierTimeoutError(
          {}, "timed out waiting for the round " + std::to_string(round) +
                  " global model");
    }
    sleep_poll(poll_interval);
  }
  std::string expected_digest;
  if (const auto j = status.get(paths::aggregation_report(run_id, round))) {
    expected_digest = AggregationReport::from_json(*j).params_digest;
  }
  return fetch_params(blob, key, expected_digest);
}

}  // namespace fedsim
