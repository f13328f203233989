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

#include <cmath>
#include <limits>
#include <vector>

#include "fedsim/param_vector.h"
#include "fedsim/rng.h"

using namespace fedsim;

namespace {

ParamVector flat(std::vector<double> values) {
  Manifest m = {{"w", {static_cast<std::uint32_t>(values.size())}}};
  return ParamVector(std::move(m), std::move(values));
}

ParamVector random_pv(const Manifest& manifest, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> values(manifest_element_count(manifest));
  for (double& v : values) v = rng.normal(0.0, 2.0);
  return ParamVector(manifest, std::move(values));
}

Manifest random_manifest(Rng& rng) {
  Manifest m;
  const std::size_t entries = rng.bounded(4);
  for (std::size_t e = 0; e < entries; ++e) {
    TensorSpec spec;
    spec.name = "t" + std::to_string(e);
    const std::size_t rank = rng.bounded(3);
    for (std::size_t r = 0; r < rank; ++r) {
      spec.dims.push_back(static_cast<std::uint32_t>(1 + rng.bounded(5)));
    }
    m.push_back(std::move(spec));
  }
  return m;
}

}  // namespace

TEST_CASE("construction validates manifest totals and finiteness") {
  CHECK_NOTHROW(flat({1.0, 2.0}));
  CHECK_THROWS_AS(ParamVector({{"w", {3}}}, {1.0, 2.0}), ShapeMismatchError);
  CHECK_THROWS_AS(flat({1.0, std::numeric_limits<double>::quiet_NaN()}),
                  NonFiniteError);
  CHECK_THROWS_AS(flat({std::numeric_limits<double>::infinity()}),
                  NonFiniteError);
  // Rank-0 entries are scalars.
  const ParamVector scalar({{"s", {}}}, {7.0});
  CHECK(scalar.size() == 1);
}

TEST_CASE("linear_combine") {
  const auto a = flat({1.0, 2.0});
  const auto b = flat({3.0, 5.0});

  SUBCASE("single unit term is the identity") {
    const std::vector<WeightedTerm> terms = {{1.0, &a}};
    CHECK(linear_combine(terms) == a);
  }
  SUBCASE("symmetric mean") {
    const auto c = flat({1.0, 3.0});
    const auto d = flat({3.0, 5.0});
    const std::vector<WeightedTerm> terms = {{0.5, &c}, {0.5, &d}};
    CHECK(linear_combine(terms).values() == std::vector<double>{2.0, 4.0});
  }
  SUBCASE("weighted combination against direct arithmetic") {
    const auto c = flat({4.0, 0.0});
    const auto d = flat({0.0, 4.0});
    const std::vector<WeightedTerm> terms = {{0.25, &c}, {0.75, &d}};
    CHECK(linear_combine(terms).values() == std::vector<double>{1.0, 3.0});
  }
  SUBCASE("errors") {
    const auto wide = flat({1.0, 2.0, 3.0});
    const std::vector<WeightedTerm> mismatched = {{1.0, &a}, {1.0, &wide}};
    CHECK_THROWS_AS(linear_combine(mismatched), ShapeMismatchError);
    CHECK_THROWS_AS(linear_combine(std::vector<WeightedTerm>{}),
                    EmptyInputError);
    const auto huge = flat({1e308, 1e308});
    const std::vector<WeightedTerm> overflow = {{1e10, &huge}};
    CHECK_THROWS_AS(linear_combine(overflow), NumericOverflowError);
    const std::vector<WeightedTerm> nan_coeff = {
        {std::numeric_limits<double>::quiet_NaN(), &a}};
    CHECK_THROWS_AS(linear_combine(nan_coeff), NonFiniteError);
  }
  SUBCASE("linearity: scaling after equals scaling inputs first") {
    Rng rng(99);
    const Manifest manifest = {{"w", {64}}, {"b", {8, 2}}};
    for (int trial = 0; trial < 20; ++trial) {
      const auto x = random_pv(manifest, rng.next_u64());
      const auto y = random_pv(manifest, rng.next_u64());
      const double ca = rng.uniform(-2.0, 2.0);
      const double cb = rng.uniform(-2.0, 2.0);
      const double s = rng.uniform(-3.0, 3.0);
      const std::vector<WeightedTerm> inner = {{ca, &x}, {cb, &y}};
      const auto combined = linear_combine(inner);
      const std::vector<WeightedTerm> outer = {{s, &combined}};
      const auto scaled_after = linear_combine(outer);
      const std::vector<WeightedTerm> direct = {{s * ca, &x}, {s * cb, &y}};
      const auto scaled_first = linear_combine(direct);
      for (std::size_t i = 0; i < scaled_after.size(); ++i) {
        const double lhs = scaled_after.values()[i];
        const double rhs = scaled_first.values()[i];
        CHECK(std::abs(lhs - rhs) <=
              1e-12 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
      }
    }
  }
}

TEST_CASE("squared_l2_distance") {
  CHECK(squared_l2_distance(flat({1.0, 2.0}), flat({1.0, 2.0})) == 0.0);
  CHECK(squared_l2_distance(flat({0.0, 0.0}), flat({3.0, 4.0})) == 25.0);
  CHECK_THROWS_AS(squared_l2_distance(flat({1.0}), flat({1.0, 2.0})),
                  ShapeMismatchError);

  SUBCASE("random 100-element pair matches a naive loop") {
    const Manifest manifest = {{"w", {100}}};
    const auto a = random_pv(manifest, 1);
    const auto b = random_pv(manifest, 2);
    double naive = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      const double d = a.values()[i] - b.values()[i];
      naive += d * d;
    }
    CHECK(squared_l2_distance(a, b) == doctest::Approx(naive).epsilon(1e-12));
  }
  SUBCASE("symmetry") {
    const Manifest manifest = {{"w", {33}}};
    const auto a = random_pv(manifest, 3);
    const auto b = random_pv(manifest, 4);
    CHECK(squared_l2_distance(a, b) == squared_l2_distance(b, a));
  }
}

TEST_CASE("serialization round-trips bit-exactly") {
  Rng rng(2026);
  for (int trial = 0; trial < 50; ++trial) {
    Manifest manifest = random_manifest(rng);
    const auto pv = random_pv(manifest, rng.next_u64());
    const auto restored = ParamVector::deserialize(pv.serialize());
    CHECK(restored == pv);
  }
  // Degenerate: empty manifest, zero values.
  const ParamVector empty;
  CHECK(ParamVector::deserialize(empty.serialize()) == empty);
  CHECK(empty.size() == 0);
}

TEST_CASE("deserialize rejects malformed streams") {
  const auto pv = flat({1.5, -2.5});
  auto bytes = pv.serialize();

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(ParamVector::deserialize(bad), DecodeError);
    try {
      ParamVector::deserialize(bad);
    } catch (const DecodeError& e) {
      CHECK(e.kind() == DecodeError::Kind::BadMagic);
    }
  }
  SUBCASE("bad version") {
    auto bad = bytes;
    bad[4] = 9;
    try {
      ParamVector::deserialize(bad);
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(e.kind() == DecodeError::Kind::BadVersion);
    }
  }
  SUBCASE("truncated stream") {
    auto bad = bytes;
    bad.resize(bad.size() - 5);
    try {
      ParamVector::deserialize(bad);
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(e.kind() == DecodeError::Kind::LengthMismatch);
    }
  }
  SUBCASE("trailing garbage") {
    auto bad = bytes;
    bad.push_back(0);
    try {
      ParamVector::deserialize(bad);
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(e.kind() == DecodeError::Kind::LengthMismatch);
    }
  }
  SUBCASE("non-finite value") {
    auto bad = bytes;
    // Overwrite the first value with +inf (0x7ff0000000000000 LE).
    const std::size_t value_off = bad.size() - 16;
    for (int i = 0; i < 8; ++i) bad[value_off + i] = 0;
    bad[value_off + 6] = 0xf0;
    bad[value_off + 7] = 0x7f;
    try {
      ParamVector::deserialize(bad);
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(e.kind() == DecodeError::Kind::NonFiniteValue);
    }
  }
}

TEST_CASE("param_digest is stable across identical vectors") {
  const auto a = flat({1.0, 2.0, 3.0});
  const auto b = flat({1.0, 2.0, 3.0});
  CHECK(param_digest(a) == param_digest(b));
  CHECK(param_digest(a).size() == 64);
  CHECK(param_digest(a) != param_digest(flat({1.0, 2.0, 4.0})));
}
