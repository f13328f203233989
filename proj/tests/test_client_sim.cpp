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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "fedsim/client_sim.h"
#include "fedsim/rng.h"

using namespace fedsim;

namespace {

Dataset numbered_samples(int n) {
  Dataset data;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.id = i;
    s.label = i % 3;
    s.features = {static_cast<double>(i)};
    s.ref_tokens = {1};
    data.push_back(s);
  }
  return data;
}

// w -> 0.5 * mean((w . x - y)^2), the 1-D least-squares toy used to pin the
// optimizer step algebra; anything matching Model plugs into local_train.
class LeastSquaresModel : public Model {
 public:
  Manifest manifest() const override { return {{"w", {1}}}; }

  ParamVector init_params(std::uint64_t seed) const override {
    Rng rng(seed);
    return ParamVector(manifest(), {rng.normal(0.0, 1.0)});
  }

  double loss(const ParamVector& params, const Dataset& data,
              std::span<const std::size_t> batch) const override {
    const double w = params.values()[0];
    double total = 0.0;
    for (std::size_t s : batch) {
      const double r = w * data[s].features[0] - data[s].features.back();
      total += 0.5 * r * r;
    }
    return total / static_cast<double>(batch.size());
  }

  std::pair<double, ParamVector> loss_and_gradient(
      const ParamVector& params, const Dataset& data,
      std::span<const std::size_t> batch) const override {
    const double w = params.values()[0];
    double total = 0.0;
    double grad = 0.0;
    for (std::size_t s : batch) {
      const double x = data[s].features[0];
      const double y = data[s].features.back();
      const double r = w * x - y;
      total += 0.5 * r * r;
      grad += r * x;
    }
    const double n = static_cast<double>(batch.size());
    const double loss_value = total / n;
    return {loss_value, ParamVector(manifest(), {grad / n})};
  }

  std::vector<int> decode(const ParamVector&,
                          std::span<const double>) const override {
    return {};
  }
};

Sample xy_sample(double x, double y) {
  Sample s;
  s.features = {x, y};
  s.ref_tokens = {1};
  return s;
}

}  // namespace

TEST_CASE("partition sizes") {
  SUBCASE("default ratios reproduce the reference shard sizes") {
    const std::vector<double> train_ratios = {1655, 1241, 828, 414};
    CHECK(partition_sizes(4138, train_ratios) ==
          std::vector<std::size_t>{1655, 1241, 828, 414});
    const std::vector<double> val_ratios = {237, 178, 117, 60};
    CHECK(partition_sizes(592, val_ratios) ==
          std::vector<std::size_t>{237, 178, 117, 60});
  }
  SUBCASE("even split") {
    CHECK(partition_sizes(8, std::vector<double>{1, 1}) ==
          std::vector<std::size_t>{4, 4});
  }
  SUBCASE("largest remainder") {
    CHECK(partition_sizes(10, std::vector<double>{4, 3, 2, 1}) ==
          std::vector<std::size_t>{4, 3, 2, 1});
    // 11 samples, third gets the extra via largest fractional part.
    CHECK(partition_sizes(7, std::vector<double>{2, 2, 3}) ==
          std::vector<std::size_t>{2, 2, 3});
  }
  SUBCASE("every client gets at least one sample") {
    const auto sizes = partition_sizes(5, std::vector<double>{1000, 1, 1, 1, 1});
    for (std::size_t s : sizes) CHECK(s >= 1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(partition_sizes(2, std::vector<double>{1, 1, 1}),
                    ConfigError);
    CHECK_THROWS_AS(partition_sizes(5, std::vector<double>{}), EmptyInputError);
    CHECK_THROWS_AS(partition_sizes(5, std::vector<double>{1, -1}), ConfigError);
  }
}

TEST_CASE("partition") {
  const Dataset data = numbered_samples(20);

  SUBCASE("shards are a disjoint cover of the input") {
    PartitionSpec spec{{3, 2, 1}, 9, true, 0.0};
    const auto shards = partition(data, spec);
    std::multiset<std::int64_t> seen;
    std::size_t total = 0;
    for (const auto& shard : shards) {
      total += shard.size();
      for (const auto& s : shard) seen.insert(s.id);
    }
    CHECK(total == data.size());
    CHECK(seen.size() == data.size());
    std::multiset<std::int64_t> want;
    for (const auto& s : data) want.insert(s.id);
    CHECK(seen == want);
  }

  SUBCASE("deterministic given the seed") {
    PartitionSpec spec{{1, 1}, 42, true, 0.0};
    const auto a = partition(data, spec);
    const auto b = partition(data, spec);
    for (std::size_t k = 0; k < a.size(); ++k) {
      REQUIRE(a[k].size() == b[k].size());
      for (std::size_t i = 0; i < a[k].size(); ++i) {
        CHECK(a[k][i].id == b[k][i].id);
      }
    }
  }

  SUBCASE("class skew concentrates labels") {
    PartitionSpec skewed{{1, 1, 1}, 4, true, 1.0};
    const auto shards = partition(data, skewed);
    // Fully sorted by class: the first shard holds the lowest labels.
    int max_first = 0;
    for (const auto& s : shards[0]) max_first = std::max(max_first, s.label);
    int min_last = 99;
    for (const auto& s : shards[2]) min_last = std::min(min_last, s.label);
    CHECK(max_first <= min_last);
  }

  SUBCASE("empty dataset is rejected") {
    PartitionSpec spec{{1, 1}, 0, true, 0.0};
    CHECK_THROWS_AS(partition({}, spec), EmptyInputError);
  }
}

TEST_CASE("adamw_step") {
  const Manifest manifest = {{"w", {3}}};
  const ParamVector params(manifest, {1.0, -2.0, 0.5});

  SUBCASE("zero gradient, zero decay: nothing moves") {
    AdamWState state = make_adamw_state(manifest);
    const ParamVector zero_grad(manifest, {0.0, 0.0, 0.0});
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    const auto next = adamw_step(params, zero_grad, state, 1, cfg);
    CHECK(next == params);
    for (double m : state.moment1.values()) CHECK(m == 0.0);
    for (double v : state.moment2.values()) CHECK(v == 0.0);
  }

  SUBCASE("zero gradient with decay shrinks params by (1 - lr*wd) per step") {
    AdamWState state = make_adamw_state(manifest);
    const ParamVector zero_grad(manifest, {0.0, 0.0, 0.0});
    AdamWConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.5;
    ParamVector current = params;
    for (int step = 1; step <= 3; ++step) {
      current = adamw_step(current, zero_grad, state, step, cfg);
    }
    const double shrink = std::pow(1.0 - 0.1 * 0.5, 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(current.values()[i] ==
            doctest::Approx(params.values()[i] * shrink).epsilon(1e-15));
    }
  }

  SUBCASE("matches a scalar hand-rolled oracle over several steps") {
    AdamWConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.weight_decay = 0.04;
    const Manifest scalar = {{"w", {1}}};
    ParamVector w(scalar, {0.8});
    AdamWState state = make_adamw_state(scalar);
    double ow = 0.8, om1 = 0.0, om2 = 0.0;
    Rng rng(3);
    for (int step = 1; step <= 20; ++step) {
      const double g = rng.normal(0.0, 1.0);
      w = adamw_step(w, ParamVector(scalar, {g}), state, step, cfg);
      // Oracle: textbook decoupled-decay update.
      om1 = cfg.beta1 * om1 + (1 - cfg.beta1) * g;
      om2 = cfg.beta2 * om2 + (1 - cfg.beta2) * g * g;
      const double mh = om1 / (1 - std::pow(cfg.beta1, step));
      const double vh = om2 / (1 - std::pow(cfg.beta2, step));
      ow = ow * (1 - cfg.learning_rate * cfg.weight_decay) -
           cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
      CHECK(w.values()[0] == doctest::Approx(ow).epsilon(1e-12));
    }
  }

  SUBCASE("beta1=beta2=0, no decay: sign-scaled SGD") {
    AdamWConfig cfg;
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.weight_decay = 0.0;
    cfg.learning_rate = 0.3;
    AdamWState state = make_adamw_state(manifest);
    const ParamVector grad(manifest, {0.5, -2.0, 0.0});
    const auto next = adamw_step(params, grad, state, 1, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = grad.values()[i];
      const double expected =
          params.values()[i] - 0.3 * g / (std::abs(g) + cfg.epsilon);
      CHECK(next.values()[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  SUBCASE("manifest mismatch and bad step index") {
    AdamWState state = make_adamw_state(manifest);
    const ParamVector wrong({{"w", {2}}}, {0.0, 0.0});
    CHECK_THROWS_AS(adamw_step(params, wrong, state, 1, AdamWConfig{}),
                    ShapeMismatchError);
    const ParamVector grad(manifest, {0.0, 0.0, 0.0});
    CHECK_THROWS_AS(adamw_step(params, grad, state, 0, AdamWConfig{}),
                    ConfigError);
  }
}

TEST_CASE("local_train") {
  const LeastSquaresModel model;

  SUBCASE("zero learning rate leaves params unchanged with a flat trace") {
    ClientShard shard;
    shard.train = {xy_sample(1.0, 2.0), xy_sample(2.0, 1.0)};
    shard.val = {xy_sample(1.0, 1.0)};
    LocalTrainConfig cfg;
    cfg.epochs_per_round = 3;
    cfg.batch_size = 16;  // full batch, so every step sees the same data
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 1e-300;  // configs require lr > 0
    cfg.weight_decay = 0.0;
    cfg.seed = 1;
    const ParamVector start({{"w", {1}}}, {1.5});
    const auto result = local_train(model, start, shard, cfg);
    CHECK(result.params.values()[0] == doctest::Approx(1.5).epsilon(1e-12));
    REQUIRE(result.train_trace.size() == 3);
    CHECK(result.train_trace[0].loss == result.train_trace[1].loss);
    CHECK(result.train_trace[1].loss == result.train_trace[2].loss);
  }

  SUBCASE("one SGD step moves by exactly -lr * analytic gradient") {
    ClientShard shard;
    shard.train = {xy_sample(2.0, 1.0)};  // residual = 2w - 1, grad = (2w-1)*2
    shard.val = {xy_sample(2.0, 1.0)};
    LocalTrainConfig cfg;
    cfg.epochs_per_round = 1;
    cfg.batch_size = 1;
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 0.25;
    cfg.weight_decay = 0.0;
    cfg.seed = 7;
    const double w0 = 3.0;
    const ParamVector start({{"w", {1}}}, {w0});
    const auto result = local_train(model, start, shard, cfg);
    const double analytic_grad = (2.0 * w0 - 1.0) * 2.0;
    CHECK(result.params.values()[0] == w0 - 0.25 * analytic_grad);
    CHECK(result.train_trace.size() == 1);
    CHECK(result.train_trace[0].loss == 0.5 * (2.0 * w0 - 1.0) * (2.0 * w0 - 1.0));
  }

  SUBCASE("same seed twice is bit-identical") {
    ClientShard shard;
    for (int i = 0; i < 13; ++i) {
      shard.train.push_back(xy_sample(0.1 * i, 1.0 - 0.05 * i));
    }
    shard.val = {xy_sample(1.0, 1.0)};
    LocalTrainConfig cfg;
    cfg.epochs_per_round = 2;
    cfg.batch_size = 4;
    cfg.seed = 99;
    const ParamVector start({{"w", {1}}}, {0.2});
    const auto a = local_train(model, start, shard, cfg);
    const auto b = local_train(model, start, shard, cfg);
    CHECK(a.params == b.params);
    REQUIRE(a.train_trace.size() == b.train_trace.size());
    for (std::size_t i = 0; i < a.train_trace.size(); ++i) {
      CHECK(a.train_trace[i].loss == b.train_trace[i].loss);
    }
    CHECK(a.validation_loss == b.validation_loss);
  }

  SUBCASE("emits epochs * batches trace entries and per-epoch val losses") {
    ClientShard shard;
    for (int i = 0; i < 10; ++i) shard.train.push_back(xy_sample(1.0, 0.5));
    shard.val = {xy_sample(1.0, 0.5)};
    LocalTrainConfig cfg;
    cfg.epochs_per_round = 3;
    cfg.batch_size = 4;  // 10 samples -> 3 batches, short last batch kept
    cfg.seed = 5;
    const auto result =
        local_train(model, ParamVector({{"w", {1}}}, {0.0}), shard, cfg);
    CHECK(result.train_trace.size() == 9);
    CHECK(result.epoch_val_losses.size() == 3);
    CHECK(result.validation_loss == result.epoch_val_losses.back());
    int step = 1;
    for (const auto& row : result.train_trace) {
      CHECK(row.step == step++);
    }
  }

  SUBCASE("divergence raises an error carrying the step index") {
    ClientShard shard;
    shard.train = {xy_sample(1.0, 0.0)};
    shard.val = {xy_sample(1.0, 0.0)};
    LocalTrainConfig cfg;
    cfg.epochs_per_round = 100;
    cfg.batch_size = 1;
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 1e10;
    cfg.weight_decay = 0.0;
    cfg.seed = 0;
    try {
      local_train(model, ParamVector({{"w", {1}}}, {1.0}), shard, cfg);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(e.step() > 1);
    }
  }

  SUBCASE("empty shard is rejected") {
    ClientShard shard;
    shard.val = {xy_sample(1.0, 1.0)};
    CHECK_THROWS_AS(
        local_train(model, ParamVector({{"w", {1}}}, {0.0}), shard,
                    LocalTrainConfig{}),
        EmptyInputError);
  }
}

TEST_CASE("apply_adversary") {
  const Manifest manifest = {{"w", {4}}};
  const ClientUpdate honest{3, ParamVector(manifest, {1.0, -2.0, 0.5, 4.0}),
                            123, 0.75};

  SUBCASE("honest mode is the identity") {
    const auto out = apply_adversary(honest, AdversaryMode{}, 42);
    CHECK(out.params == honest.params);
    CHECK(out.client_id == honest.client_id);
  }

  SUBCASE("scale(-1) equals sign_flip") {
    AdversaryMode scale{AdversaryMode::Kind::Scale, -1.0, 0.0};
    AdversaryMode flip{AdversaryMode::Kind::SignFlip, 1.0, 0.0};
    CHECK(apply_adversary(honest, scale, 1).params ==
          apply_adversary(honest, flip, 2).params);
  }

  SUBCASE("gaussian noise is seeded and leaves metadata untouched") {
    AdversaryMode noise{AdversaryMode::Kind::GaussianNoise, 1.0, 0.5};
    const auto a = apply_adversary(honest, noise, 9);
    const auto b = apply_adversary(honest, noise, 9);
    const auto c = apply_adversary(honest, noise, 10);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);
    CHECK(a.params != honest.params);
    CHECK(a.data_length == honest.data_length);
    CHECK(a.validation_loss == honest.validation_loss);
  }
}
