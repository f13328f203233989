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

#include "fedsim/toy_model.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "fedsim/kernels.h"
#include "fedsim/rng.h"

namespace fedsim {

namespace {

struct TaskTables {
  std::vector<std::vector<double>> centroids;   // class -> feature_dim
  std::vector<std::vector<int>> templates;      // class -> report_length
};

TaskTables build_task_tables(const SyntheticTaskSpec& spec) {
  TaskTables tables;
  Rng rng(mix_seed(spec.seed, {seed_domain::kTask, 0}));
  tables.centroids.resize(static_cast<std::size_t>(spec.num_classes));
  tables.templates.resize(static_cast<std::size_t>(spec.num_classes));
  for (int c = 0; c < spec.num_classes; ++c) {
    auto& centroid = tables.centroids[static_cast<std::size_t>(c)];
    centroid.resize(static_cast<std::size_t>(spec.feature_dim));
    for (double& v : centroid) v = rng.uniform(-1.0, 1.0);
    auto& tmpl = tables.templates[static_cast<std::size_t>(c)];
    tmpl.resize(static_cast<std::size_t>(spec.report_length));
    // Templates avoid PAD so references are always full length.
    for (int& t : tmpl) {
      t = 1 + static_cast<int>(rng.bounded(
                  static_cast<std::uint64_t>(spec.vocab_size - 1)));
    }
  }
  return tables;
}

Dataset generate_split(const SyntheticTaskSpec& spec, const TaskTables& tables,
                       std::uint64_t split_tag, int count,
                       std::int64_t id_base) {
  Dataset data;
  data.reserve(static_cast<std::size_t>(count));
  Rng rng(mix_seed(spec.seed, {seed_domain::kTask, split_tag}));
  for (int i = 0; i < count; ++i) {
    Sample s;
    s.id = id_base + i;
    s.label = static_cast<int>(
        rng.bounded(static_cast<std::uint64_t>(spec.num_classes)));
    const auto& centroid = tables.centroids[static_cast<std::size_t>(s.label)];
    s.features.resize(static_cast<std::size_t>(spec.feature_dim));
    for (int d = 0; d < spec.feature_dim; ++d) {
      s.features[static_cast<std::size_t>(d)] =
          centroid[static_cast<std::size_t>(d)] +
          rng.normal(0.0, spec.noise_sigma);
    }
    s.ref_tokens = tables.templates[static_cast<std::size_t>(s.label)];
    for (int& tok : s.ref_tokens) {
      if (rng.uniform() < spec.token_swap_rate) {
        tok = 1 + static_cast<int>(rng.bounded(
                      static_cast<std::uint64_t>(spec.vocab_size - 1)));
      }
    }
    data.push_back(std::move(s));
  }
  return data;
}

void append_csv_rows(std::ofstream& out, const Dataset& data) {
  char buf[64];
  for (const auto& s : data) {
    out << s.id << ',' << s.label;
    for (double f : s.features) {
      std::snprintf(buf, sizeof buf, "%.17g", f);
      out << ',' << buf;
    }
    out << ',';
    for (std::size_t i = 0; i < s.ref_tokens.size(); ++i) {
      if (i) out << ' ';
      out << s.ref_tokens[i];
    }
    out << '\n';
  }
}

// Stable log-sum-exp; returns lse and leaves exp(l - max) in scratch.
double log_sum_exp(std::span<const double> logits, std::span<double> scratch) {
  double max_logit = logits[0];
  for (double l : logits) max_logit = std::max(max_logit, l);
  double sum = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    scratch[v] = std::exp(logits[v] - max_logit);
    sum += scratch[v];
  }
  for (std::size_t v = 0; v < logits.size(); ++v) scratch[v] /= sum;
  return max_logit + std::log(sum);
}

}  // namespace

SyntheticData synth_generate(const SyntheticTaskSpec& spec) {
  if (spec.vocab_size < 2 || spec.num_classes < 2 || spec.report_length < 1 ||
      spec.feature_dim < 1) {
    throw ConfigError("synthetic task: invalid dimensions");
  }
  const TaskTables tables = build_task_tables(spec);
  SyntheticData out;
  out.train = generate_split(spec, tables, 1, spec.train_samples, 0);
  out.test = generate_split(spec, tables, 2, spec.test_samples,
                            spec.train_samples);
  out.val = generate_split(spec, tables, 3, spec.val_samples,
                           spec.train_samples + spec.test_samples);
  return out;
}

void write_samples_csv(const SyntheticData& data,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  if (data.train.empty() && data.test.empty() && data.val.empty()) return;
  const Dataset& any = !data.train.empty()
                           ? data.train
                           : (!data.test.empty() ? data.test : data.val);
  out << "sample_id,class";
  for (std::size_t d = 0; d < any.front().features.size(); ++d) {
    out << ",feature_" << d;
  }
  out << ",ref_tokens\n";
  append_csv_rows(out, data.train);
  append_csv_rows(out, data.test);
  append_csv_rows(out, data.val);
}

double mean_loss_over(const Model& model, const ParamVector& params,
                      const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return model.loss(params, data, all);
}

ToyCaptioner::ToyCaptioner(int feature_dim, int vocab_size, int report_length)
    : feature_dim_(feature_dim),
      vocab_size_(vocab_size),
      report_length_(report_length) {}

Manifest ToyCaptioner::manifest() const {
  Manifest m;
  m.reserve(static_cast<std::size_t>(2 * report_length_));
  for (int t = 1; t <= report_length_; ++t) {
    m.push_back({"W_" + std::to_string(t),
                 {static_cast<std::uint32_t>(vocab_size_),
                  static_cast<std::uint32_t>(feature_dim_)}});
  }
  for (int t = 1; t <= report_length_; ++t) {
    m.push_back({"b_" + std::to_string(t),
                 {static_cast<std::uint32_t>(vocab_size_)}});
  }
  return m;
}

ParamVector ToyCaptioner::init_params(std::uint64_t seed) const {
  Rng rng(mix_seed(seed, {seed_domain::kInitParams}));
  const std::size_t total = static_cast<std::size_t>(report_length_) *
                            static_cast<std::size_t>(vocab_size_) *
                            (static_cast<std::size_t>(feature_dim_) + 1);
  std::vector<double> values(total);
  for (double& v : values) v = rng.normal(0.0, 0.01);
  return ParamVector(manifest(), std::move(values));
}

double ToyCaptioner::loss(const ParamVector& params, const Dataset& data,
                          std::span<const std::size_t> batch) const {
  const std::size_t V = static_cast<std::size_t>(vocab_size_);
  const std::size_t D = static_cast<std::size_t>(feature_dim_);
  const std::size_t L = static_cast<std::size_t>(report_length_);
  const double* p = params.values().data();
  const double* bias_base = p + L * V * D;

  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  std::vector<double> sample_loss(batch.size(), 0.0);
  std::vector<std::int64_t> sample_count(batch.size(), 0);
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::int64_t s = 0; s < n; ++s) {
    const Sample& sample = data[batch[static_cast<std::size_t>(s)]];
    std::vector<double> logits(V);
    std::vector<double> probs(V);
    double acc = 0.0;
    std::int64_t cnt = 0;
    for (std::size_t t = 0; t < L; ++t) {
      const int ref = sample.ref_tokens[t];
      if (ref == kPadToken) continue;
      const double* W = p + t * V * D;
      const double* b = bias_base + t * V;
      for (std::size_t v = 0; v < V; ++v) {
        double z = b[v];
        const double* row = W + v * D;
        for (std::size_t i = 0; i < D; ++i) z += row[i] * sample.features[i];
        logits[v] = z;
      }
      const double lse = log_sum_exp(logits, probs);
      acc += lse - logits[static_cast<std::size_t>(ref)];
      ++cnt;
    }
    sample_loss[static_cast<std::size_t>(s)] = acc;
    sample_count[static_cast<std::size_t>(s)] = cnt;
  }
  std::int64_t count = 0;
  for (std::int64_t c : sample_count) count += c;
  if (count == 0) return 0.0;
  const double total = kernels::block_sum(sample_loss);
  return total / static_cast<double>(count);
}

std::pair<double, ParamVector> ToyCaptioner::loss_and_gradient(
    const ParamVector& params, const Dataset& data,
    std::span<const std::size_t> batch) const {
  const std::size_t V = static_cast<std::size_t>(vocab_size_);
  const std::size_t D = static_cast<std::size_t>(feature_dim_);
  const std::size_t L = static_cast<std::size_t>(report_length_);
  const std::size_t B = batch.size();
  const double* p = params.values().data();
  const double* bias_base = p + L * V * D;

  // Pass 1: per-sample softmax tables and losses.
  std::vector<double> probs(B * L * V, 0.0);
  std::vector<std::uint8_t> included(B * L, 0);
  std::vector<double> sample_loss(B, 0.0);
  std::vector<std::int64_t> sample_count(B, 0);
  const std::int64_t nb = static_cast<std::int64_t>(B);
#pragma omp parallel for schedule(static) if (nb > 256)
  for (std::int64_t s = 0; s < nb; ++s) {
    const Sample& sample = data[batch[static_cast<std::size_t>(s)]];
    std::vector<double> logits(V);
    double acc = 0.0;
    std::int64_t cnt = 0;
    for (std::size_t t = 0; t < L; ++t) {
      const int ref = sample.ref_tokens[t];
      if (ref == kPadToken) continue;
      const double* W = p + t * V * D;
      const double* b = bias_base + t * V;
      for (std::size_t v = 0; v < V; ++v) {
        double z = b[v];
        const double* row = W + v * D;
        for (std::size_t i = 0; i < D; ++i) z += row[i] * sample.features[i];
        logits[v] = z;
      }
      std::span<double> prow(&probs[(static_cast<std::size_t>(s) * L + t) * V], V);
      const double lse = log_sum_exp(logits, prow);
      acc += lse - logits[static_cast<std::size_t>(ref)];
      included[static_cast<std::size_t>(s) * L + t] = 1;
      ++cnt;
    }
    sample_loss[static_cast<std::size_t>(s)] = acc;
    sample_count[static_cast<std::size_t>(s)] = cnt;
  }

  std::int64_t count = 0;
  for (std::int64_t c : sample_count) count += c;
  std::vector<double> grad(params.size(), 0.0);
  if (count == 0) {
    return {0.0, ParamVector(params.manifest(), std::move(grad))};
  }
  const double scale = 1.0 / static_cast<double>(count);

  // Pass 2: accumulate rows of dW and db. Each (t, v) row sums over samples
  // in batch order, so the result is independent of the thread count.
  double* grad_bias = grad.data() + L * V * D;
  const std::int64_t rows = static_cast<std::int64_t>(L * V);
#pragma omp parallel for schedule(static) if (rows > 64)
  for (std::int64_t row = 0; row < rows; ++row) {
    const std::size_t t = static_cast<std::size_t>(row) / V;
    const std::size_t v = static_cast<std::size_t>(row) % V;
    double* w_row = grad.data() + (t * V + v) * D;
    double db = 0.0;
    for (std::size_t s = 0; s < B; ++s) {
      if (!included[s * L + t]) continue;
      const Sample& sample = data[batch[s]];
      double coeff = probs[(s * L + t) * V + v];
      if (static_cast<std::size_t>(sample.ref_tokens[t]) == v) coeff -= 1.0;
      coeff *= scale;
      db += coeff;
      for (std::size_t i = 0; i < D; ++i) w_row[i] += coeff * sample.features[i];
    }
    grad_bias[t * V + v] = db;
  }

  const double total = kernels::block_sum(sample_loss);
  const double loss_value = total / static_cast<double>(count);
  if (!std::isfinite(loss_value)) {
    throw NonFiniteError("toy captioner: non-finite loss");
  }
  return {loss_value, ParamVector(params.manifest(), std::move(grad))};
}

std::vector<int> ToyCaptioner::decode(const ParamVector& params,
                                      std::span<const double> features) const {
  const std::size_t V = static_cast<std::size_t>(vocab_size_);
  const std::size_t D = static_cast<std::size_t>(feature_dim_);
  const std::size_t L = static_cast<std::size_t>(report_length_);
  const double* p = params.values().data();
  const double* bias_base = p + L * V * D;
  std::vector<int> out(L, 0);
  for (std::size_t t = 0; t < L; ++t) {
    const double* W = p + t * V * D;
    const double* b = bias_base + t * V;
    double best = -std::numeric_limits<double>::infinity();
    int best_v = 0;
    for (std::size_t v = 0; v < V; ++v) {
      double z = b[v];
      const double* row = W + v * D;
      for (std::size_t i = 0; i < D; ++i) z += row[i] * features[i];
      if (z > best) {
        best = z;
        best_v = static_cast<int>(v);
      }
    }
    out[t] = best_v;
  }
  return out;
}

std::vector<int> strip_pad(std::span<const int> tokens) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t != ToyCaptioner::kPadToken) out.push_back(t);
  }
  return out;
}

}  // namespace fedsim
