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

#include "fedsim/client_sim.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/rng.h"

namespace fedsim {

std::vector<std::size_t> partition_sizes(std::size_t total,
                                         std::span<const double> ratios) {
  const std::size_t k = ratios.size();
  if (k == 0) throw EmptyInputError("partition: no ratios");
  if (total < k) {
    throw ConfigError("partition: more clients than samples");
  }
  double ratio_sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw ConfigError("partition: ratios must be positive and finite");
    }
    ratio_sum += r;
  }

  std::vector<std::size_t> sizes(k, 0);
  std::vector<std::pair<double, std::size_t>> remainders;  // (-frac, index)
  remainders.reserve(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double quota = static_cast<double>(total) * ratios[i] / ratio_sum;
    const double base = std::floor(quota);
    sizes[i] = static_cast<std::size_t>(base);
    assigned += sizes[i];
    remainders.emplace_back(-(quota - base), i);
  }
  // Largest remainder first; ties toward the lower client index.
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; assigned < total; ++r) {
    ++sizes[remainders[r % k].second];
    ++assigned;
  }
  // Guarantee at least one sample per client, taking from the largest shard.
  for (std::size_t i = 0; i < k; ++i) {
    while (sizes[i] == 0) {
      const std::size_t donor = static_cast<std::size_t>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      if (sizes[donor] <= 1) {
        throw ConfigError("partition: cannot give every client a sample");
      }
      --sizes[donor];
      ++sizes[i];
    }
  }
  return sizes;
}

std::vector<Dataset> partition(const Dataset& data, const PartitionSpec& spec) {
  if (data.empty()) throw EmptyInputError("partition: empty dataset");
  const auto sizes = partition_sizes(data.size(), spec.ratios);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(spec.seed, {seed_domain::kShuffle}));
  if (spec.class_skew > 0.0) {
    int max_label = 0;
    for (const auto& s : data) max_label = std::max(max_label, s.label);
    const double classes = static_cast<double>(max_label + 1);
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double class_part = static_cast<double>(data[i].label) / classes;
      const double key =
          spec.class_skew * class_part + (1.0 - spec.class_skew) * rng.uniform();
      keyed.emplace_back(key, i);
    }
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < keyed.size(); ++i) order[i] = keyed[i].second;
  } else if (spec.shuffle) {
    rng.shuffle(order);
  }

  std::vector<Dataset> shards;
  shards.reserve(sizes.size());
  std::size_t cursor = 0;
  for (std::size_t size : sizes) {
    Dataset shard;
    shard.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
      shard.push_back(data[order[cursor + i]]);
    }
    cursor += size;
    shards.push_back(std::move(shard));
  }
  return shards;
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adamw";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adamw") return OptimizerKind::AdamW;
  throw ConfigError("unknown optimizer '" + name + "'");
}

AdamWState make_adamw_state(const Manifest& manifest) {
  std::vector<double> zeros(manifest_element_count(manifest), 0.0);
  return AdamWState{ParamVector(manifest, zeros), ParamVector(manifest, zeros)};
}

ParamVector adamw_step(const ParamVector& params, const ParamVector& grads,
                       AdamWState& state, std::int64_t step_index,
                       const AdamWConfig& config) {
  if (!params.same_manifest(grads) || !params.same_manifest(state.moment1) ||
      !params.same_manifest(state.moment2)) {
    throw ShapeMismatchError("adamw_step: manifest mismatch");
  }
  if (step_index < 1) throw ConfigError("adamw_step: step_index must be >= 1");

  const std::size_t n = params.size();
  const double* w = params.values().data();
  const double* g = grads.values().data();
  std::vector<double> m1(state.moment1.values());
  std::vector<double> m2(state.moment2.values());
  std::vector<double> out(n);

  const double bias1 =
      1.0 - std::pow(config.beta1, static_cast<double>(step_index));
  const double bias2 =
      1.0 - std::pow(config.beta2, static_cast<double>(step_index));
  const double decay = 1.0 - config.learning_rate * config.weight_decay;

  const std::int64_t count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (count > 16384)
  for (std::int64_t i = 0; i < count; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    m1[idx] = config.beta1 * m1[idx] + (1.0 - config.beta1) * g[idx];
    m2[idx] = config.beta2 * m2[idx] + (1.0 - config.beta2) * g[idx] * g[idx];
    const double m_hat = m1[idx] / bias1;
    const double v_hat = m2[idx] / bias2;
    double value = w[idx] * decay;
    value -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    out[idx] = value;
  }

  state.moment1 = ParamVector(params.manifest(), std::move(m1));
  state.moment2 = ParamVector(params.manifest(), std::move(m2));
  return ParamVector(params.manifest(), std::move(out));
}

LocalTrainResult local_train(const Model& model, const ParamVector& start,
                             const ClientShard& shard,
                             const LocalTrainConfig& cfg) {
  if (shard.train.empty()) {
    throw EmptyInputError("local_train: empty training shard");
  }
  if (cfg.epochs_per_round < 1 || cfg.batch_size < 1 ||
      !(cfg.learning_rate >= 0.0)) {
    throw ConfigError("local_train: invalid training configuration");
  }

  LocalTrainResult result;
  result.params = start;
  AdamWState state = make_adamw_state(start.manifest());
  AdamWConfig adamw{cfg.learning_rate, cfg.weight_decay};

  std::vector<std::size_t> order(shard.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> val_all(shard.val.size());
  std::iota(val_all.begin(), val_all.end(), std::size_t{0});

  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs_per_round; ++epoch) {
    Rng rng(mix_seed(cfg.seed, {seed_domain::kShuffle,
                                static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t lo = 0; lo < order.size(); lo += batch) {
      const std::size_t hi = std::min(lo + batch, order.size());
      std::span<const std::size_t> indices(&order[lo], hi - lo);
      ++step;
      try {
        const auto [loss, grad] =
            model.loss_and_gradient(result.params, shard.train, indices);
        if (!std::isfinite(loss)) {
          throw NonFiniteError("non-finite loss");
        }
        result.train_trace.push_back({step, epoch, loss});
        if (cfg.optimizer == OptimizerKind::AdamW) {
          result.params = adamw_step(result.params, grad, state, step, adamw);
        } else {
          std::vector<double> next(result.params.values());
          const double* g = grad.values().data();
          const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
          for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] = next[i] * decay - cfg.learning_rate * g[i];
          }
          result.params =
              ParamVector(result.params.manifest(), std::move(next));
        }
      } catch (const NonFiniteError& e) {
        throw DivergenceError(step, "local_train: diverged at step " +
                                        std::to_string(step) + " (" +
                                        e.what() + ")");
      } catch (const NumericOverflowError& e) {
        throw DivergenceError(step, "local_train: diverged at step " +
                                        std::to_string(step) + " (" +
                                        e.what() + ")");
      }
    }
    const double val_loss =
        shard.val.empty() ? 0.0 : model.loss(result.params, shard.val, val_all);
    result.epoch_val_losses.push_back(val_loss);
  }
  result.validation_loss = result.epoch_val_losses.back();
  return result;
}

ClientUpdate apply_adversary(const ClientUpdate& update,
                             const AdversaryMode& mode, std::uint64_t seed) {
  if (mode.kind == AdversaryMode::Kind::Honest) return update;
  std::vector<double> values(update.params.values());
  switch (mode.kind) {
    case AdversaryMode::Kind::Scale:
      for (double& v : values) v *= mode.factor;
      break;
    case AdversaryMode::Kind::SignFlip:
      for (double& v : values) v *= -1.0;
      break;
    case AdversaryMode::Kind::GaussianNoise: {
      Rng rng(mix_seed(seed, {seed_domain::kAdversary}));
      for (double& v : values) v += rng.normal(0.0, mode.sigma);
      break;
    }
    case AdversaryMode::Kind::Honest:
      break;
  }
  ClientUpdate out = update;
  out.params = ParamVector(update.params.manifest(), std::move(values));
  return out;
}

}  // namespace fedsim
