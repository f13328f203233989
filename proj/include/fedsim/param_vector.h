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

/// Flat model-parameter vectors with a shape manifest.
///
/// A ParamVector is the unit of exchange between clients and the server: a
/// flat array of binary64 values plus an ordered (tensor-name, dims) manifest
/// whose total element count equals the array length. Vectors are immutable
/// after construction and all values are finite by construction, so they are
/// safe to share across threads.
///
/// Wire format "FPV1" (all integers little-endian):
///   magic "FPV1" | version u16 | manifest entry count u32 |
///   per entry: name length u16, UTF-8 name, rank u8, dims u32 x rank |
///   value count u64 | IEEE-754 binary64 x count

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, LengthMismatch, NonFiniteValue };

  DecodeError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct TensorSpec {
  std::string name;
  std::vector<std::uint32_t> dims;

  std::uint64_t element_count() const noexcept {
    std::uint64_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }

  bool operator==(const TensorSpec&) const = default;
};

using Manifest = std::vector<TensorSpec>;

std::uint64_t manifest_element_count(const Manifest& manifest);

class ParamVector {
 public:
  static constexpr std::uint16_t kFormatVersion = 1;

  ParamVector() = default;

  /// Throws ShapeMismatchError if the manifest does not account for
  /// values.size(), NonFiniteError if any value is NaN or infinite.
  ParamVector(Manifest manifest, std::vector<double> values);

  const Manifest& manifest() const noexcept { return manifest_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  bool same_manifest(const ParamVector& other) const noexcept {
    return manifest_ == other.manifest_;
  }

  bool operator==(const ParamVector&) const = default;

  std::vector<std::uint8_t> serialize() const;
  static ParamVector deserialize(std::span<const std::uint8_t> bytes);

 private:
  Manifest manifest_;
  std::vector<double> values_;
};

struct WeightedTerm {
  double coefficient;
  const ParamVector* params;
};

/// Element-wise sum_j c_j * pv_j, term order ascending by index.
/// Throws EmptyInputError on no terms, ShapeMismatchError on manifest
/// disagreement, NumericOverflowError if the result is not finite.
ParamVector linear_combine(std::span<const WeightedTerm> terms);

/// Squared Euclidean distance. Manifests must match.
double squared_l2_distance(const ParamVector& a, const ParamVector& b);

/// Hex SHA-256 of the serialized vector; the identity used in status records
/// and aggregation reports.
std::string param_digest(const ParamVector& pv);

}  // namespace fedsim
