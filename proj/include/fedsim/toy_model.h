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

/// The desk-scale image-to-report task.
///
/// The synthetic dataset pairs a feature vector ("image" embedding), drawn
/// from a per-class Gaussian around a seeded centroid, with a reference token
/// sequence derived from a seeded per-class template under token-swap noise.
///
/// The captioner is position-wise linear-softmax: for each output position t
/// it scores every vocabulary token as W_t x + b_t. No position feeds into
/// the next, so the loss gradient is closed-form and checkable by finite
/// differences. The trainable state travels as one ParamVector with manifest
/// entries W_1..W_L then b_1..b_L; anything matching the Model interface can
/// replace it without touching the federation machinery.

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "fedsim/param_vector.h"

namespace fedsim {

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

struct Sample {
  std::int64_t id = 0;
  int label = 0;
  std::vector<double> features;
  std::vector<int> ref_tokens;
};

using Dataset = std::vector<Sample>;

/// Abstract trainable model: parameter manifest + loss + gradient + decode.
class Model {
 public:
  virtual ~Model() = default;

  virtual Manifest manifest() const = 0;
  virtual ParamVector init_params(std::uint64_t seed) const = 0;

  /// Mean loss over the batch (indices into data).
  virtual double loss(const ParamVector& params, const Dataset& data,
                      std::span<const std::size_t> batch) const = 0;

  virtual std::pair<double, ParamVector> loss_and_gradient(
      const ParamVector& params, const Dataset& data,
      std::span<const std::size_t> batch) const = 0;

  virtual std::vector<int> decode(const ParamVector& params,
                                  std::span<const double> features) const = 0;
};

struct SyntheticTaskSpec {
  int feature_dim = 16;
  int vocab_size = 24;     // includes PAD = 0
  int report_length = 8;
  int num_classes = 4;
  double noise_sigma = 0.1;
  double token_swap_rate = 0.05;
  int train_samples = 4138;
  int test_samples = 1180;
  int val_samples = 592;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  Dataset val;
};

/// Generates the three splits from one task (shared centroids/templates).
SyntheticData synth_generate(const SyntheticTaskSpec& spec);

/// samples.csv: sample_id,class,feature_0..feature_{d-1},ref_tokens
void write_samples_csv(const SyntheticData& data,
                       const std::filesystem::path& path);

double mean_loss_over(const Model& model, const ParamVector& params,
                      const Dataset& data);

class ToyCaptioner : public Model {
 public:
  static constexpr int kPadToken = 0;

  ToyCaptioner(int feature_dim, int vocab_size, int report_length);

  explicit ToyCaptioner(const SyntheticTaskSpec& spec)
      : ToyCaptioner(spec.feature_dim, spec.vocab_size, spec.report_length) {}

  Manifest manifest() const override;
  ParamVector init_params(std::uint64_t seed) const override;
  double loss(const ParamVector& params, const Dataset& data,
              std::span<const std::size_t> batch) const override;
  std::pair<double, ParamVector> loss_and_gradient(
      const ParamVector& params, const Dataset& data,
      std::span<const std::size_t> batch) const override;
  /// Argmax per position, ties toward the lowest token id.
  std::vector<int> decode(const ParamVector& params,
                          std::span<const double> features) const override;

  int feature_dim() const noexcept { return feature_dim_; }
  int vocab_size() const noexcept { return vocab_size_; }
  int report_length() const noexcept { return report_length_; }

 private:
  int feature_dim_;
  int vocab_size_;
  int report_length_;
};

/// Drops PAD tokens; applied to decodes before metric computation.
std::vector<int> strip_pad(std::span<const int> tokens);

}  // namespace fedsim
