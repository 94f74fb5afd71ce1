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

// Seeded generators for the desk-scale corpora: a 2-class review-sentiment
// corpus and a 4-class news-topic corpus built from class-specific word
// distributions. Texts within one generated bundle are unique.

#ifndef TEXTMARK_SYNTHETIC_H_
#define TEXTMARK_SYNTHETIC_H_

#include <cstdint>
#include <string>

#include "textmark/corpus.h"

namespace textmark {

enum class SyntheticKind { kSentiment, kTopic };

SyntheticKind ParseSyntheticKind(std::string_view name);

struct CorpusBundle {
  Corpus train;
  Corpus test;
  // Disjoint sample from the same distribution, for adversary experiments.
  Corpus extra;
};

CorpusBundle MakeSyntheticCorpora(SyntheticKind kind, uint64_t seed,
                                  int n_train, int n_test, int n_extra);

}  // namespace textmark

#endif  // TEXTMARK_SYNTHETIC_H_
