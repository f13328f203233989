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

#include "fedsim/param_vector.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "fedsim/digest.h"
#include "fedsim/kernels.h"

namespace fedsim {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'V', '1'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw DecodeError(DecodeError::Kind::LengthMismatch,
                        "param decode: truncated stream");
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
  }

  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t manifest_element_count(const Manifest& manifest) {
  std::uint64_t total = 0;
  for (const auto& entry : manifest) total += entry.element_count();
  return total;
}

ParamVector::ParamVector(Manifest manifest, std::vector<double> values)
    : manifest_(std::move(manifest)), values_(std::move(values)) {
  if (manifest_element_count(manifest_) != values_.size()) {
    throw ShapeMismatchError(
        "param vector: manifest element count does not match value count");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw NonFiniteError("param vector: non-finite value on construction");
    }
  }
}

std::vector<std::uint8_t> ParamVector::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(16 + values_.size() * 8);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(manifest_.size()));
  for (const auto& entry : manifest_) {
    put_u16(out, static_cast<std::uint16_t>(entry.name.size()));
    out.insert(out.end(), entry.name.begin(), entry.name.end());
    out.push_back(static_cast<std::uint8_t>(entry.dims.size()));
    for (std::uint32_t d : entry.dims) put_u32(out, d);
  }
  put_u64(out, values_.size());
  for (double v : values_) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamVector ParamVector::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw DecodeError(DecodeError::Kind::BadMagic, "param decode: bad magic");
  }
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion) {
    throw DecodeError(DecodeError::Kind::BadVersion,
                      "param decode: unsupported format version " +
                          std::to_string(version));
  }
  const std::uint32_t entries = r.u32();
  Manifest manifest;
  manifest.reserve(entries);
  for (std::uint32_t i = 0; i < entries; ++i) {
    TensorSpec spec;
    const std::uint16_t name_len = r.u16();
    auto name = r.take(name_len);
    spec.name.assign(name.begin(), name.end());
    const std::uint8_t rank = r.take(1)[0];
    spec.dims.reserve(rank);
    for (std::uint8_t d = 0; d < rank; ++d) spec.dims.push_back(r.u32());
    manifest.push_back(std::move(spec));
  }
  const std::uint64_t count = r.u64();
  if (count != manifest_element_count(manifest)) {
    throw DecodeError(DecodeError::Kind::LengthMismatch,
                      "param decode: value count disagrees with manifest");
  }
  std::vector<double> values;
  values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const double v = std::bit_cast<double>(r.u64());
    if (!std::isfinite(v)) {
      throw DecodeError(DecodeError::Kind::NonFiniteValue,
                        "param decode: non-finite value at index " +
                            std::to_string(i));
    }
    values.push_back(v);
  }
  if (r.remaining() != 0) {
    throw DecodeError(DecodeError::Kind::LengthMismatch,
                      "param decode: trailing bytes after values");
  }
  return ParamVector(std::move(manifest), std::move(values));
}

ParamVector linear_combine(std::span<const WeightedTerm> terms) {
  if (terms.empty()) {
    throw EmptyInputError("linear_combine: no terms");
  }
  const ParamVector& first = *terms.front().params;
  std::vector<double> coeffs;
  std::vector<const double*> inputs;
  coeffs.reserve(terms.size());
  inputs.reserve(terms.size());
  for (const auto& term : terms) {
    if (!std::isfinite(term.coefficient)) {
      throw NonFiniteError("linear_combine: non-finite coefficient");
    }
    if (!term.params->same_manifest(first)) {
      throw ShapeMismatchError("linear_combine: manifest mismatch");
    }
    coeffs.push_back(term.coefficient);
    inputs.push_back(term.params->values().data());
  }
  std::vector<double> out(first.size());
  kernels::linear_combine(out, coeffs, inputs);
  for (double v : out) {
    if (!std::isfinite(v)) {
      throw NumericOverflowError("linear_combine: non-finite result");
    }
  }
  return ParamVector(first.manifest(), std::move(out));
}

double squared_l2_distance(const ParamVector& a, const ParamVector& b) {
  if (!a.same_manifest(b)) {
    throw ShapeMismatchError("squared_l2_distance: manifest mismatch");
  }
  return kernels::squared_l2_distance(a.values(), b.values());
}

std::string param_digest(const ParamVector& pv) {
  const auto bytes = pv.serialize();
  return sha256_hex(bytes);
}

}  // namespace fedsim
