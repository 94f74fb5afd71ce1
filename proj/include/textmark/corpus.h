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

// Labeled text corpora, vocabularies and fixed-length encoding.

#ifndef TEXTMARK_CORPUS_H_
#define TEXTMARK_CORPUS_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "textmark/common.h"

namespace textmark {

struct TextSample {
  std::string text;
  int label = 0;
  std::string id;
};

// An ordered, immutable list of samples over `num_classes` classes. The
// constructor enforces that labels are in range, ids are unique, texts are
// non-blank and (unless `require_all_classes` is false) that every class is
// represented.
class Corpus {
 public:
  Corpus(std::string name, int num_classes, std::vector<TextSample> samples,
         bool require_all_classes = true);

  const std::string& name() const { return name_; }
  int num_classes() const { return num_classes_; }
  const std::vector<TextSample>& samples() const { return samples_; }
  size_t size() const { return samples_.size(); }
  const TextSample& operator[](size_t i) const { return samples_[i]; }

  // Indices of the samples carrying `label`, in corpus order.
  std::vector<size_t> IndicesOfClass(int label) const;

  // New corpus holding the samples at `indices` (in the given order).
  Corpus Subset(const std::vector<size_t>& indices, std::string name,
                bool require_all_classes = true) const;

 private:
  std::string name_;
  int num_classes_;
  std::vector<TextSample> samples_;
};

enum class CorpusFormat { kJsonl, kTsv };

CorpusFormat ParseCorpusFormat(std::string_view name);

// Reads a corpus file. JSONL records are {"text": ..., "label": ...}; TSV
// lines are "<label>\t<text>". When `num_classes` is 0 it is inferred as
// max(label) + 1. The corpus name defaults to the file stem and sample ids
// are "<name>:<line>" with 1-based line numbers.
Corpus LoadCorpus(const std::string& path, CorpusFormat format,
                  int num_classes = 0, std::string name = "");

// Writes one JSON object per line in corpus order.
void SaveCorpusJsonl(const Corpus& corpus, const std::string& path);

// Lowercases ASCII, splits on whitespace and strips leading/trailing ASCII
// punctuation from every piece. Pieces that become empty are dropped.
std::vector<std::string> Tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  // Keeps tokens with frequency >= min_freq ranked by (frequency desc,
  // token asc). `max_size` bounds the total size including PAD and UNK.
  static Vocabulary Build(const Corpus& train, int min_freq, int max_size);

  static Vocabulary FromJson(std::string_view json);
  std::string ToJson() const;

  int32_t Lookup(std::string_view token) const;
  const std::string& Token(int32_t id) const { return tokens_.at(id); }
  size_t size() const { return tokens_.size(); }
  int max_size() const { return max_size_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens, int max_size);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> ids_;
  int max_size_ = 0;
};

using TokenIds = std::vector<int32_t>;

// Tokenizes, maps unknown tokens to UNK, truncates to max_len and right-pads
// with PAD.
TokenIds Encode(std::string_view text, const Vocabulary& vocab, int max_len);
inline TokenIds Encode(const TextSample& sample, const Vocabulary& vocab,
                       int max_len) {
  return Encode(sample.text, vocab, max_len);
}

// Number of leading non-PAD ids.
int EncodedLength(const TokenIds& ids);

// Stratified, seeded split. The first corpus receives round(fraction * n_c)
// samples of each class c (at least one, at most n_c - 1); both sides keep the
// original relative order.
std::pair<Corpus, Corpus> Split(const Corpus& corpus, double fraction,
                                uint64_t seed);

}  // namespace textmark

#endif  // TEXTMARK_CORPUS_H_
