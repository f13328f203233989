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

#include "fedsim/aggregation.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "nlohmann/json.hpp"

namespace fedsim {

namespace {

// Sorted copy, ascending client_id; validates non-emptiness, id uniqueness,
// manifest agreement, and the per-update invariants.
std::vector<const ClientUpdate*> sorted_updates(
    std::span<const ClientUpdate> updates) {
  if (updates.empty()) {
    throw EmptyInputError("aggregate: no client updates");
  }
  std::vector<const ClientUpdate*> sorted;
  sorted.reserve(updates.size());
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) {
              return a->client_id < b->client_id;
            });
  std::set<int> ids;
  for (const ClientUpdate* u : sorted) {
    if (!ids.insert(u->client_id).second) {
      throw ConfigError("aggregate: duplicate client_id " +
                        std::to_string(u->client_id));
    }
    if (u->data_length < 1) {
      throw ConfigError("aggregate: data_length must be >= 1 (client " +
                        std::to_string(u->client_id) + ")");
    }
    if (!(u->validation_loss >= 0.0) || !std::isfinite(u->validation_loss)) {
      throw ConfigError("aggregate: validation_loss must be finite and >= 0");
    }
    if (!u->params.same_manifest(sorted.front()->params)) {
      throw ShapeMismatchError("aggregate: client manifests differ");
    }
  }
  return sorted;
}

// Raw weights -> weights scaled by 1/sum. Shared by the weighted strategies
// so that algebraically equal raw weights give bit-identical outputs.
std::vector<double> normalize_weights(const std::vector<double>& raw) {
  double sum = 0.0;
  for (double w : raw) sum += w;
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / sum;
  return out;
}

AggregationResult combine_with_weights(
    const std::vector<const ClientUpdate*>& sorted,
    const std::vector<double>& weights, const std::string& strategy) {
  std::vector<WeightedTerm> terms;
  terms.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    terms.push_back({weights[i], &sorted[i]->params});
  }
  ParamVector global = linear_combine(terms);
  AggregationReport report;
  report.strategy = strategy;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    report.weights.emplace_back(sorted[i]->client_id, weights[i]);
  }
  report.params_digest = param_digest(global);
  return {std::move(global), std::move(report)};
}

std::vector<ClientMetadata> metadata_of(
    const std::vector<const ClientUpdate*>& sorted) {
  std::vector<ClientMetadata> meta;
  meta.reserve(sorted.size());
  for (const ClientUpdate* u : sorted) {
    meta.push_back({u->client_id, u->data_length, u->validation_loss});
  }
  return meta;
}

}  // namespace

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::FedAvgUniform: return "fedavg-uniform";
    case Strategy::FedAvgWeighted: return "fedavg-weighted";
    case Strategy::Krum: return "krum";
    case Strategy::LFedAvg: return "l-fedavg";
  }
  throw ConfigError("unknown strategy enum value");
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "fedavg-uniform") return Strategy::FedAvgUniform;
  if (name == "fedavg-weighted") return Strategy::FedAvgWeighted;
  if (name == "krum") return Strategy::Krum;
  if (name == "l-fedavg") return Strategy::LFedAvg;
  throw ConfigError("unknown aggregation strategy '" + name + "'");
}

AggregationResult aggregate_fedavg(std::span<const ClientUpdate> updates,
                                   bool weighted) {
  const auto sorted = sorted_updates(updates);
  const std::size_t m = sorted.size();
  std::vector<double> weights;
  weights.reserve(m);
  if (weighted) {
    double total = 0.0;
    for (const ClientUpdate* u : sorted) {
      total += static_cast<double>(u->data_length);
    }
    std::vector<double> raw;
    raw.reserve(m);
    for (const ClientUpdate* u : sorted) {
      raw.push_back(static_cast<double>(u->data_length) / total);
    }
    weights = normalize_weights(raw);
  } else {
    weights.assign(m, 1.0 / static_cast<double>(m));
  }
  return combine_with_weights(
      sorted, weights, weighted ? "fedavg-weighted" : "fedavg-uniform");
}

std::vector<std::pair<int, double>> krum_scores(
    std::span<const ClientUpdate> updates, int fault_tolerance) {
  if (fault_tolerance < 0) {
    throw ConfigError("krum: fault_tolerance must be >= 0");
  }
  const auto sorted = sorted_updates(updates);
  const int m = static_cast<int>(sorted.size());
  const int neighbors = m - fault_tolerance - 2;
  if (neighbors < 1) {
    throw InsufficientClientsError(
        "krum: need m >= f + 3 clients, got m=" + std::to_string(m) +
        ", f=" + std::to_string(fault_tolerance));
  }

  // Full pairwise distance table; symmetric, so compute the upper triangle.
  std::vector<std::vector<double>> dist(
      static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m), 0.0));
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double d =
          squared_l2_distance(sorted[static_cast<std::size_t>(i)]->params,
                              sorted[static_cast<std::size_t>(j)]->params);
      dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = d;
      dist[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = d;
    }
  }

  std::vector<std::pair<int, double>> scores;
  scores.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(m - 1));
    for (int j = 0; j < m; ++j) {
      if (j != k) row.push_back(dist[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
    }
    std::sort(row.begin(), row.end());
    double score = 0.0;
    for (int j = 0; j < neighbors; ++j) score += row[static_cast<std::size_t>(j)];
    scores.emplace_back(sorted[static_cast<std::size_t>(k)]->client_id, score);
  }
  return scores;
}

AggregationResult aggregate_krum(std::span<const ClientUpdate> updates,
                                 int fault_tolerance) {
  auto scores = krum_scores(updates, fault_tolerance);
  // Ties break toward the lowest client_id; scores are already ascending.
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k].second < scores[best].second) best = k;
  }
  const int selected = scores[best].first;
  const ClientUpdate* chosen = nullptr;
  for (const auto& u : updates) {
    if (u.client_id == selected) chosen = &u;
  }
  AggregationReport report;
  report.strategy = "krum";
  report.scores = scores;
  report.selected_client = selected;
  report.params_digest = param_digest(chosen->params);
  return {chosen->params, std::move(report)};
}

std::vector<std::pair<int, double>> lfedavg_weights(
    std::span<const ClientMetadata> metadata, double alpha, double loss_floor,
    bool normalize_loss_weights_first) {
  if (metadata.empty()) {
    throw EmptyInputError("lfedavg_weights: empty metadata");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("lfedavg_weights: alpha must be in [0, 1]");
  }
  if (!(loss_floor > 0.0)) {
    throw ConfigError("lfedavg_weights: loss_floor must be > 0");
  }
  std::vector<ClientMetadata> sorted(metadata.begin(), metadata.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientMetadata& a, const ClientMetadata& b) {
              return a.client_id < b.client_id;
            });

  double total_data = 0.0;
  for (const auto& m : sorted) total_data += static_cast<double>(m.data_length);

  std::vector<double> loss_weights;
  loss_weights.reserve(sorted.size());
  for (const auto& m : sorted) {
    loss_weights.push_back(1.0 / std::max(m.validation_loss, loss_floor));
  }
  if (normalize_loss_weights_first) {
    loss_weights = normalize_weights(loss_weights);
  }

  std::vector<double> raw;
  raw.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double data_weight =
        static_cast<double>(sorted[i].data_length) / total_data;
    raw.push_back(alpha * data_weight + (1.0 - alpha) * loss_weights[i]);
  }
  const std::vector<double> normalized = normalize_weights(raw);

  std::vector<std::pair<int, double>> out;
  out.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    out.emplace_back(sorted[i].client_id, normalized[i]);
  }
  return out;
}

AggregationResult aggregate_lfedavg(std::span<const ClientUpdate> updates,
                                    const AggregatorConfig& config) {
  const auto sorted = sorted_updates(updates);
  const auto meta = metadata_of(sorted);
  const auto weighted =
      lfedavg_weights(meta, config.alpha, config.loss_floor,
                      config.normalize_loss_weights_first);
  std::vector<double> weights;
  weights.reserve(weighted.size());
  for (const auto& [id, w] : weighted) weights.push_back(w);
  return combine_with_weights(sorted, weights, "l-fedavg");
}

AggregationResult aggregate(std::span<const ClientUpdate> updates,
                            const AggregatorConfig& config) {
  switch (config.strategy) {
    case Strategy::FedAvgUniform: return aggregate_fedavg(updates, false);
    case Strategy::FedAvgWeighted: return aggregate_fedavg(updates, true);
    case Strategy::Krum: return aggregate_krum(updates, config.fault_tolerance);
    case Strategy::LFedAvg: return aggregate_lfedavg(updates, config);
  }
  throw ConfigError("aggregate: unknown strategy");
}

nlohmann::json AggregationReport::to_json() const {
  nlohmann::json j;
  j["strategy"] = strategy;
  j["round"] = round;
  if (!weights.empty()) {
    nlohmann::json w = nlohmann::json::object();
    for (const auto& [id, value] : weights) w[std::to_string(id)] = value;
    j["weights"] = std::move(w);
  }
  if (!scores.empty()) {
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [id, value] : scores) s[std::to_string(id)] = value;
    j["scores"] = std::move(s);
  }
  if (selected_client) j["selected_client"] = *selected_client;
  j["params_digest"] = params_digest;
  return j;
}

AggregationReport AggregationReport::from_json(const nlohmann::json& j) {
  AggregationReport report;
  report.strategy = j.at("strategy").get<std::string>();
  report.round = j.at("round").get<int>();
  if (j.contains("weights")) {
    for (const auto& [key, value] : j.at("weights").items()) {
      report.weights.emplace_back(std::stoi(key), value.get<double>());
    }
    std::sort(report.weights.begin(), report.weights.end());
  }
  if (j.contains("scores")) {
    for (const auto& [key, value] : j.at("scores").items()) {
      report.scores.emplace_back(std::stoi(key), value.get<double>());
    }
    std::sort(report.scores.begin(), report.scores.end());
  }
  if (j.contains("selected_client")) {
    report.selected_client = j.at("selected_client").get<int>();
  }
  report.params_digest = j.at("params_digest").get<std::string>();
  return report;
}

}  // namespace fedsim
