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

/// Lexical n-gram metrics, implemented from scratch.
///
/// Conventions (fixed, echoed in every MetricReport):
///   - no stemming; ASCII case folding; token edges stripped of
///     non-alphanumeric characters
///   - ROUGE-n / ROUGE-L are sentence-level, macro-averaged over pairs
///   - BLEU is corpus-level with max order 4 by default, add-one smoothing
///     of zero counts for orders >= 2, brevity penalty exp(1 - r/c) for c < r
///   - any metric with a zero denominator is 0, never NaN

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nlohmann/json_fwd.hpp"

namespace fedsim::metrics {

using TokenSequence = std::vector<std::string>;

/// Lowercase, split on whitespace (ASCII plus the common Unicode space
/// code points), strip leading/trailing non-alphanumeric characters from
/// each token, drop empties.
TokenSequence tokenize(std::string_view text);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Clipped n-gram multiset overlap. n >= 1.
PrecisionRecallF1 rouge_n(const TokenSequence& candidate,
                          const TokenSequence& reference, int n);

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

PrecisionRecallF1 rouge_l(const TokenSequence& candidate,
                          const TokenSequence& reference);

/// Corpus-level BLEU with one reference per candidate; counts pooled over
/// the corpus. Throws ConfigError on list length mismatch.
double bleu(const std::vector<TokenSequence>& candidates,
            const std::vector<TokenSequence>& references, int max_n = 4);

struct PairMetrics {
  double rouge1_f1 = 0.0;
  double rouge2_f1 = 0.0;
  double rouge3_f1 = 0.0;
  double rouge4_f1 = 0.0;
  double rougeL_f1 = 0.0;
};

struct MetricReport {
  // Corpus level: ROUGE macro-averaged over pairs, BLEU pooled.
  double rouge1_f1 = 0.0;
  double rouge2_f1 = 0.0;
  double rouge3_f1 = 0.0;
  double rouge4_f1 = 0.0;
  double rougeL_f1 = 0.0;
  double bleu = 0.0;
  std::vector<PairMetrics> per_pair;
  int bleu_max_n = 4;
  std::string tokenization = "lowercase,whitespace,strip-edge-punct";

  nlohmann::json to_json() const;
};

MetricReport evaluate_corpus(
    const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs,
    int bleu_max_n = 4);

}  // namespace fedsim::metrics
