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

/// The synchronous round protocol over shared storage.
///
/// Server and clients never talk directly; everything flows through two
/// stores rooted in one directory tree:
///
///   BlobStore    immutable content (parameter files). Writes go to a temp
///                path and are published by rename, so readers only ever see
///                whole blobs. Re-publishing identical bytes is a no-op;
///                publishing different bytes under an existing key is an
///                integrity error.
///   StatusStore  small mutable JSON records (client status, server phase),
///                single writer per key, replaced atomically by rename.
///
/// Layout under the store root:
///   <run_id>/round_<t>/client_<k>.params
///   <run_id>/round_<t>/client_<k>.status.json
///   <run_id>/round_<t>/global.params
///   <run_id>/round_<t>/aggregation.json
///   <run_id>/server.phase.json
///
/// round_0/global.params is the initial model; training rounds are 1..T and
/// clients of round t download the global of round t-1. Progress is polled;
/// both sides tolerate a crash-and-restart at any point because every write
/// is atomic and every recomputation is deterministic.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nlohmann/json_fwd.hpp"

#include "fedsim/aggregation.h"
#include "fedsim/param_vector.h"

namespace fedsim {

class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolOrderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BarrierTimeoutError : public std::runtime_error {
 public:
  BarrierTimeoutError(std::vector<int> missing, const std::string& what)
      : std::runtime_error(what), missing_(std::move(missing)) {}
  const std::vector<int>& missing_clients() const noexcept { return missing_; }

 private:
  std::vector<int> missing_;
};

class RoundFailedError : public std::runtime_error {
 public:
  RoundFailedError(int client_id, const std::string& what)
      : std::runtime_error(what), client_id_(client_id) {}
  int failed_client() const noexcept { return client_id_; }

 private:
  int client_id_;
};

class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  /// Atomic publish; returns the hex SHA-256 of the bytes. Identical
  /// re-publication is idempotent; conflicting content for an existing key
  /// throws IntegrityError. A verify-after-write digest mismatch throws
  /// IntegrityError as well.
  std::string put(const std::string& key, std::span<const std::uint8_t> bytes);

  std::vector<std::uint8_t> get(const std::string& key) const;
  bool exists(const std::string& key) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path root_;
};

class StatusStore {
 public:
  explicit StatusStore(std::filesystem::path root);

  void put(const std::string& key, const nlohmann::json& record);
  std::optional<nlohmann::json> get(const std::string& key) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path root_;
};

enum class ClientState { Assigned, Training, Uploaded, Failed };

std::string to_string(ClientState state);
ClientState client_state_from_string(const std::string& name);

struct RoundStatus {
  std::string run_id;
  int round = 0;
  int client_id = 0;
  ClientState state = ClientState::Assigned;
  std::uint64_t data_length = 0;
  double validation_loss = 0.0;
  std::string params_digest;
  std::string timestamp;  // UTC, ISO-8601

  nlohmann::json to_json() const;
  static RoundStatus from_json(const nlohmann::json& j);
};

enum class ServerPhaseKind {
  Distributing,
  AwaitingClients,
  Aggregating,
  Published,
  Finished
};

std::string to_string(ServerPhaseKind phase);
ServerPhaseKind server_phase_from_string(const std::string& name);

struct ServerPhase {
  std::string run_id;
  int round = 0;
  ServerPhaseKind phase = ServerPhaseKind::Distributing;

  nlohmann::json to_json() const;
  static ServerPhase from_json(const nlohmann::json& j);
};

/// Store keys for the pinned layout.
namespace paths {
std::string client_params(const std::string& run_id, int round, int client_id);
std::string client_status(const std::string& run_id, int round, int client_id);
std::string client_train_losses(const std::string& run_id, int round,
                                int client_id);
std::string client_val_losses(const std::string& run_id, int round,
                              int client_id);
std::string global_params(const std::string& run_id, int round);
std::string aggregation_report(const std::string& run_id, int round);
std::string server_phase(const std::string& run_id);
}  // namespace paths

/// UTC timestamp, e.g. "2026-01-31T09:15:02Z".
std::string utc_timestamp_now();

/// Atomic whole-file text write (temp + rename), for CSV/JSON artifacts.
void atomic_write_text(const std::filesystem::path& path,
                       std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

void write_server_phase(StatusStore& status, const ServerPhase& phase);
std::optional<ServerPhase> read_server_phase(const StatusStore& status,
                                             const std::string& run_id);

void write_client_status(StatusStore& status, const RoundStatus& record);
std::optional<RoundStatus> read_client_status(const StatusStore& status,
                                              const std::string& run_id,
                                              int round, int client_id);

/// Serializes and publishes a parameter blob; client_id empty means the
/// round's global model. Returns the digest.
std::string publish_params(BlobStore& blob, const std::string& run_id,
                           int round, std::optional<int> client_id,
                           const ParamVector& params);

/// Fetches and validates a parameter blob, checking the digest when one is
/// expected. Throws IntegrityError on any corruption.
ParamVector fetch_params(const BlobStore& blob, const std::string& key,
                         const std::string& expected_digest = {});

/// Blocks until every expected client reports uploaded for the round, then
/// assembles their updates (blob + metadata from the status record).
/// Requires the server phase to be awaiting_clients for this round.
/// Throws BarrierTimeoutError (listing missing clients), RoundFailedError
/// if any client reports failed, IntegrityError on digest mismatch.
std::vector<ClientUpdate> barrier_await_clients(
    const StatusStore& status, const BlobStore& blob, const std::string& run_id,
    int round, const std::vector<int>& expected,
    std::chrono::milliseconds poll_interval, std::chrono::milliseconds timeout);

/// Publishes the aggregated global for the round, persists the report, and
/// advances the phase to published. Requires phase aggregating at this round
/// and no previously published global for it.
void publish_global_and_advance(StatusStore& status, BlobStore& blob,
                                const std::string& run_id, int round,
                                const ParamVector& params,
                                AggregationReport report);

/// Blocks until the round's global model is published, then returns it.
/// Round 0 is the initial model.
ParamVector client_await_global(const StatusStore& status,
                                const BlobStore& blob,
                                const std::string& run_id, int round,
                                std::chrono::milliseconds poll_interval,
                                std::chrono::milliseconds timeout);

}  // namespace fedsim
