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

// Owner secrets and watermark carriers: the covert trigger set, the
// HMAC-marked authentication set, and the weight watermark keys.

#ifndef TEXTMARK_MATERIAL_H_
#define TEXTMARK_MATERIAL_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "textmark/corpus.h"
#include "textmark/model.h"

namespace textmark {

struct TriggerItem {
  TextSample sample;  // original text and label, untouched
  int target = 0;     // label the watermarked model must produce
};

struct TriggerSet {
  std::vector<TriggerItem> items;
  std::string source_model_id;
  uint64_t seed = 0;
  int m_per_class = 0;
  int num_classes = 0;
  int resampled = 0;  // candidates skipped because argmin == original label

  std::vector<std::string> Texts() const;
  std::vector<int> Targets() const;

  std::string ToJsonl() const;
  static TriggerSet FromJsonl(const std::string& contents);
};

// Index of the smallest entry; ties go to the lowest index.
int ArgminLowestIndex(std::span<const double> probs);

// Samples m_per_class texts of every class (seeded, without replacement) and
// labels each with the class the clean model finds least probable. Samples
// whose least-probable class equals their own label are skipped. The total
// budget must not exceed 1% of the training set.
TriggerSet GenerateTriggerSet(const HostModel& clean_model,
                              const Vocabulary& vocab, const Corpus& train,
                              int m_per_class, uint64_t seed,
                              std::string source_model_id = "");

class MessageDigest {
 public:
  static constexpr size_t kBytes = 16;

  explicit MessageDigest(std::array<uint8_t, kBytes> raw) : raw_(raw) {}
  static MessageDigest FromRendered(std::string_view rendered);

  const std::array<uint8_t, kBytes>& raw() const { return raw_; }
  // Eight space-separated groups of four lowercase hex digits.
  std::string Rendered() const;

  bool operator==(const MessageDigest& other) const = default;

 private:
  std::array<uint8_t, kBytes> raw_;
};

// HMAC-SHA256 of `owner_info` under `kappa1`, truncated to 16 bytes.
MessageDigest ComputeDigest(std::span<const uint8_t> kappa1,
                            std::string_view owner_info);

struct AuthItem {
  std::string text;
  int label = 0;  // 0 normal, 1 marker
  std::string source_id;
};

struct AuthSet {
  std::vector<AuthItem> items;  // (normal, marker) pairs
  std::string digest;           // rendered digest used for the markers
  uint64_t seed = 0;

  size_t size() const { return items.size(); }
  std::vector<std::string> Texts() const;
  std::vector<int> Labels() const;

  std::string ToJsonl() const;
  static AuthSet FromJsonl(const std::string& contents);
};

// Marker text: rendered digest, one space, then the original text.
std::string CombineWithDigest(const std::string& text,
                              const MessageDigest& digest);

// Draws n_pairs training texts round-robin across classes (seeded, without
// replacement) and emits (text, 0), (digest + " " + text, 1) for each.
AuthSet GenerateAuthSet(const Corpus& train, int n_pairs,
                        const MessageDigest& digest, uint64_t seed);

struct WatermarkKeys {
  int rows = 0;
  int cols = 0;
  std::vector<double> s;         // row-major, entries in [-1, 1]
  std::vector<uint8_t> kappa2;   // row-major, entries in {0, 1}
  double density = 0.5;
  uint64_t owner_seed = 0;

  size_t selected() const;

  // Hash of (S, kappa2); safe to print.
  std::string Fingerprint() const;

  std::string ToJson() const;
  static WatermarkKeys FromJson(const std::string& contents);
};

// S ~ U[-1, 1] and kappa2 ~ Bernoulli(density), both drawn from one stream
// seeded by owner_seed; kappa2 is redrawn until it selects something.
WatermarkKeys GenerateKeys(std::pair<int, int> shape, double density,
                           uint64_t owner_seed);

// Secret HMAC key derived from a seed (32 bytes).
std::vector<uint8_t> GenerateKappa1(uint64_t seed);

// Key files hold the hex encoding of the key bytes.
std::vector<uint8_t> ReadKeyFile(const std::string& path);
void WriteKeyFile(const std::string& path, std::span<const uint8_t> key);

}  // namespace textmark

#endif  // TEXTMARK_MATERIAL_H_
