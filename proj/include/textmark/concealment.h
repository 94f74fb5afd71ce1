// Copyright 2026 The Textmark Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Trigger concealment against a perplexity-based outlier-word filter: an
// n-gram scorer, the filter itself, a rare-word trigger baseline, and the
// with/without-defense evaluation.

#ifndef TEXTMARK_CONCEALMENT_H_
#define TEXTMARK_CONCEALMENT_H_

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "textmark/corpus.h"
#include "textmark/material.h"
#include "textmark/model.h"

namespace textmark {

class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;
  // exp of the mean negative log-probability per token; tokens non-empty.
  virtual double Perplexity(const std::vector<std::string>& tokens) const = 0;
  virtual std::string Fingerprint() const = 0;
};

// Word trigram model with Jelinek-Mercer interpolation over trigram, bigram
// and add-alpha unigram estimates. Context orders whose history was never
// seen drop out and the remaining weights are renormalised. There is no
// sentence-start padding, so the first token is scored by the unigram alone.
class NgramScorer : public PerplexityScorer {
 public:
  struct Options {
    double alpha = 0.1;
    std::array<double, 3> weights = {0.2, 0.3, 0.5};  // uni, bi, tri
  };

  explicit NgramScorer(const Corpus& corpus) : NgramScorer(corpus, Options{}) {}
  NgramScorer(const Corpus& corpus, Options options);

  double Perplexity(const std::vector<std::string>& tokens) const override;
  std::string Fingerprint() const override { return fingerprint_; }

  // P(token) under the add-alpha unigram; unseen tokens share one slot.
  double UnigramProb(const std::string& token) const;
  // Interpolated P(token | history), history holding up to two tokens.
  double Prob(const std::vector<std::string>& history,
              const std::string& token) const;

 private:
  Options options_;
  std::unordered_map<std::string, int64_t> uni_;
  std::unordered_map<std::string, int64_t> bi_;       // "a b"
  std::unordered_map<std::string, int64_t> bi_ctx_;   // "a" as a history
  std::unordered_map<std::string, int64_t> tri_;      // "a b c"
  std::unordered_map<std::string, int64_t> tri_ctx_;  // "a b" as a history
  int64_t total_ = 0;
  std::string fingerprint_;
};

// Perplexity of a raw text; errors when it has no tokens.
double Perplexity(const PerplexityScorer& scorer, const std::string& text);

struct FilterResult {
  std::string text;
  std::vector<std::string> words;  // whitespace-separated pieces of the input
  // p0 - p_i per piece; NaN for pieces without a token (bare punctuation),
  // which are never removed.
  std::vector<double> suspicion;
  std::vector<bool> removed;
  bool all_removed = false;

  size_t Removed() const;
  size_t Scored() const;
};

// One-pass outlier-word filter: removes every word whose deletion lowers the
// perplexity by more than tau. The result joins the kept words with single
// spaces; when nothing is removed the input is returned verbatim. Needs at
// least two tokens.
FilterResult OnionFilter(const std::string& text,
                         const PerplexityScorer& scorer, double tau);

// Smallest tau (an observed suspicion score) for which at most
// `max_removed_fraction` of the scored words of `texts` would be removed.
double CalibrateTau(const std::vector<std::string>& texts,
                    const PerplexityScorer& scorer,
                    double max_removed_fraction = 0.10);

// Baseline triggers: m texts from classes other than target_label, each with
// one word of `trigger_words` inserted at a seeded position, all labelled
// target_label. Words must not be among the `frequent_limit` most frequent
// training tokens.
TriggerSet RarewordTriggerBaseline(const Corpus& train,
                                   const std::vector<std::string>& trigger_words,
                                   int target_label, int m, uint64_t seed,
                                   int frequent_limit = 5000);

struct ConcealmentResult {
  std::string scheme;
  double asr = 0.0;
  double asr_defended = 0.0;
  double cacc = 0.0;
  double cacc_defended = 0.0;
  double tau = 0.0;
  double trigger_retention = 0.0;  // kept scored words / scored words
  double clean_retention = 0.0;
  size_t emptied_texts = 0;
  std::string scorer_fingerprint;

  nlohmann::json ToJson() const;
};

// Suspicion scores of one filtered text, for audit output.
struct SuspicionRow {
  std::string set;
  size_t index = 0;
  FilterResult filtered;
};

// ASR: trigger accuracy; CACC: clean test accuracy; the primed values apply
// OnionFilter to every text first.
ConcealmentResult EvaluateConcealment(const HostModel& model,
                                      const Vocabulary& vocab,
                                      const TriggerSet& triggers,
                                      const Corpus& test,
                                      const PerplexityScorer& scorer,
                                      double tau, const std::string& scheme,
                                      std::vector<SuspicionRow>* audit =
                                          nullptr);

// set,index,position,word,suspicion,removed
std::string SuspicionCsv(const std::vector<SuspicionRow>& rows);

}  // namespace textmark

#endif  // TEXTMARK_CONCEALMENT_H_
