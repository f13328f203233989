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

#include "fedsim/nlg_metrics.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>

#include "nlohmann/json.hpp"

#include "fedsim/param_vector.h"  // error types

namespace fedsim::metrics {

namespace {

// Whitespace code points recognized by the tokenizer: ASCII plus the usual
// Unicode space separators.
bool is_space_cp(std::uint32_t cp) {
  switch (cp) {
    case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
    case 0x00a0: case 0x1680: case 0x2028: case 0x2029: case 0x202f:
    case 0x205f: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200a;
  }
}

// Minimal UTF-8 decode; invalid bytes pass through as Latin-1.
std::uint32_t next_cp(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) {
    return static_cast<std::uint8_t>(s[k]);
  };
  const std::uint8_t b0 = byte(i);
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  auto cont = [&](std::size_t k) {
    return k < s.size() && (byte(k) & 0xc0) == 0x80;
  };
  if ((b0 & 0xe0) == 0xc0 && cont(i + 1)) {
    const std::uint32_t cp = ((b0 & 0x1fu) << 6) | (byte(i + 1) & 0x3fu);
    i += 2;
    return cp;
  }
  if ((b0 & 0xf0) == 0xe0 && cont(i + 1) && cont(i + 2)) {
    const std::uint32_t cp = ((b0 & 0x0fu) << 12) |
                             ((byte(i + 1) & 0x3fu) << 6) |
                             (byte(i + 2) & 0x3fu);
    i += 3;
    return cp;
  }
  if ((b0 & 0xf8) == 0xf0 && cont(i + 1) && cont(i + 2) && cont(i + 3)) {
    const std::uint32_t cp = ((b0 & 0x07u) << 18) |
                             ((byte(i + 1) & 0x3fu) << 12) |
                             ((byte(i + 2) & 0x3fu) << 6) |
                             (byte(i + 3) & 0x3fu);
    i += 4;
    return cp;
  }
  i += 1;
  return b0;
}

// ASCII alnum; multi-byte characters count as word characters so they are
// never stripped from token edges.
bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

// Key type for n-gram multisets: the n tokens joined with '\x1f'.
std::map<std::string, int> ngram_counts(const TokenSequence& tokens, int n) {
  std::map<std::string, int> counts;
  if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += tokens[i + static_cast<std::size_t>(k)];
    }
    ++counts[key];
  }
  return counts;
}

std::int64_t clipped_overlap(const std::map<std::string, int>& cand,
                             const std::map<std::string, int>& ref) {
  std::int64_t overlap = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(count, it->second);
  }
  return overlap;
}

PrecisionRecallF1 prf_from_counts(std::int64_t overlap, std::int64_t cand_total,
                                  std::int64_t ref_total) {
  PrecisionRecallF1 out;
  out.precision = cand_total > 0
                      ? static_cast<double>(overlap) / static_cast<double>(cand_total)
                      : 0.0;
  out.recall = ref_total > 0
                   ? static_cast<double>(overlap) / static_cast<double>(ref_total)
                   : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::string current;
  auto flush = [&] {
    // Strip non-word characters from both edges.
    std::size_t lo = 0;
    std::size_t hi = current.size();
    while (lo < hi && !is_word_byte(static_cast<unsigned char>(current[lo]))) ++lo;
    while (hi > lo && !is_word_byte(static_cast<unsigned char>(current[hi - 1]))) --hi;
    if (hi > lo) tokens.push_back(current.substr(lo, hi - lo));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const std::uint32_t cp = next_cp(text, i);
    if (is_space_cp(cp)) {
      flush();
    } else {
      for (std::size_t k = start; k < i; ++k) {
        const char c = text[k];
        current.push_back(static_cast<char>(
            std::tolower(static_cast<unsigned char>(c))));
      }
    }
  }
  flush();
  return tokens;
}

PrecisionRecallF1 rouge_n(const TokenSequence& candidate,
                          const TokenSequence& reference, int n) {
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::int64_t cand_total = 0;
  std::int64_t ref_total = 0;
  for (const auto& [gram, c] : cand) cand_total += c;
  for (const auto& [gram, c] : ref) ref_total += c;
  return prf_from_counts(clipped_overlap(cand, ref), cand_total, ref_total);
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  if (a.empty() || b.empty()) return 0;
  // Two-row DP.
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1]) {
        curr[j] = prev[j - 1] + 1;
      } else {
        curr[j] = std::max(prev[j], curr[j - 1]);
      }
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

PrecisionRecallF1 rouge_l(const TokenSequence& candidate,
                          const TokenSequence& reference) {
  const auto lcs = static_cast<std::int64_t>(lcs_length(candidate, reference));
  return prf_from_counts(lcs, static_cast<std::int64_t>(candidate.size()),
                         static_cast<std::int64_t>(reference.size()));
}

double bleu(const std::vector<TokenSequence>& candidates,
            const std::vector<TokenSequence>& references, int max_n) {
  if (candidates.size() != references.size()) {
    throw ConfigError("bleu: candidate/reference list length mismatch");
  }
  if (candidates.empty() || max_n < 1) return 0.0;

  std::vector<std::int64_t> matches(static_cast<std::size_t>(max_n), 0);
  std::vector<std::int64_t> totals(static_cast<std::size_t>(max_n), 0);
  std::int64_t cand_len = 0;
  std::int64_t ref_len = 0;
  for (std::size_t p = 0; p < candidates.size(); ++p) {
    cand_len += static_cast<std::int64_t>(candidates[p].size());
    ref_len += static_cast<std::int64_t>(references[p].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto cand = ngram_counts(candidates[p], n);
      const auto ref = ngram_counts(references[p], n);
      std::int64_t total = 0;
      for (const auto& [gram, c] : cand) total += c;
      matches[static_cast<std::size_t>(n - 1)] += clipped_overlap(cand, ref);
      totals[static_cast<std::size_t>(n - 1)] += total;
    }
  }
  if (cand_len == 0) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    double num = static_cast<double>(matches[static_cast<std::size_t>(n - 1)]);
    double den = static_cast<double>(totals[static_cast<std::size_t>(n - 1)]);
    if (n >= 2 && num == 0.0) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0 || den == 0.0) return 0.0;  // unigrams unsmoothed
    log_sum += std::log(num / den);
  }
  const double geo_mean = std::exp(log_sum / static_cast<double>(max_n));
  const double brevity =
      cand_len < ref_len
          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
          : 1.0;
  return brevity * geo_mean;
}

MetricReport evaluate_corpus(
    const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs,
    int bleu_max_n) {
  if (pairs.empty()) {
    throw EmptyInputError("evaluate_corpus: no pairs");
  }
  MetricReport report;
  report.bleu_max_n = bleu_max_n;
  report.per_pair.resize(pairs.size());
  const std::int64_t n_pairs = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(static) if (n_pairs > 64)
  for (std::int64_t i = 0; i < n_pairs; ++i) {
    const auto& [cand, ref] = pairs[static_cast<std::size_t>(i)];
    PairMetrics& pm = report.per_pair[static_cast<std::size_t>(i)];
    pm.rouge1_f1 = rouge_n(cand, ref, 1).f1;
    pm.rouge2_f1 = rouge_n(cand, ref, 2).f1;
    pm.rouge3_f1 = rouge_n(cand, ref, 3).f1;
    pm.rouge4_f1 = rouge_n(cand, ref, 4).f1;
    pm.rougeL_f1 = rouge_l(cand, ref).f1;
  }
  // Macro average in pair order, independent of the parallel schedule.
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0, sl = 0;
  for (const auto& pm : report.per_pair) {
    s1 += pm.rouge1_f1;
    s2 += pm.rouge2_f1;
    s3 += pm.rouge3_f1;
    s4 += pm.rouge4_f1;
    sl += pm.rougeL_f1;
  }
  const double count = static_cast<double>(pairs.size());
  report.rouge1_f1 = s1 / count;
  report.rouge2_f1 = s2 / count;
  report.rouge3_f1 = s3 / count;
  report.rouge4_f1 = s4 / count;
  report.rougeL_f1 = sl / count;

  std::vector<TokenSequence> cands;
  std::vector<TokenSequence> refs;
  cands.reserve(pairs.size());
  refs.reserve(pairs.size());
  for (const auto& [cand, ref] : pairs) {
    cands.push_back(cand);
    refs.push_back(ref);
  }
  report.bleu = bleu(cands, refs, bleu_max_n);
  return report;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["rouge1_f1"] = rouge1_f1;
  j["rouge2_f1"] = rouge2_f1;
  j["rouge3_f1"] = rouge3_f1;
  j["rouge4_f1"] = rouge4_f1;
  j["rougeL_f1"] = rougeL_f1;
  j["bleu"] = bleu;
  j["bleu_max_n"] = bleu_max_n;
  j["tokenization"] = tokenization;
  nlohmann::json pp = nlohmann::json::array();
  for (const auto& pm : per_pair) {
    pp.push_back({{"rouge1_f1", pm.rouge1_f1},
                  {"rouge2_f1", pm.rouge2_f1},
                  {"rouge3_f1", pm.rouge3_f1},
                  {"rouge4_f1", pm.rouge4_f1},
                  {"rougeL_f1", pm.rougeL_f1}});
  }
  j["per_pair"] = std::move(pp);
  return j;
}

}  // namespace fedsim::metrics
