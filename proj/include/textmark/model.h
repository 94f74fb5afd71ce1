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

// Host classifiers, the secondary authentication network that shares their
// backbone, and checkpoint persistence.

#ifndef TEXTMARK_MODEL_H_
#define TEXTMARK_MODEL_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "textmark/corpus.h"
#include "textmark/nn.h"

namespace textmark {

struct ModelConfig {
  Arch arch = Arch::kTextCnn;
  int vocab_size = 0;
  int embed_dim = 64;
  int hidden_dim = 64;
  int num_classes = 2;
  int max_len = 256;
  uint64_t seed = 0;
  // TextCNN only.
  std::vector<int> filter_widths = {3, 4, 5};
  int filters_per_width = 32;

  nlohmann::json ToJson() const;
  static ModelConfig FromJson(const nlohmann::json& j);
};

// Named tensors plus free-form JSON metadata. On disk: the 8-byte magic
// "TXMKCKPT", a little-endian u64 manifest length, the JSON manifest, then the
// raw little-endian float32 tensor blobs in manifest order.
struct Checkpoint {
  nlohmann::json metadata;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* Find(const std::string& name) const;
};

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint LoadCheckpoint(const std::string& path);
std::string SerializeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DeserializeCheckpoint(const std::string& bytes);

// Encodes a list of samples into a batch the network can consume.
IdBatch MakeBatch(const std::vector<TokenIds>& sequences, int min_steps);

class HostModel {
 public:
  HostModel(ModelConfig config, Network net)
      : config_(std::move(config)), net_(std::move(net)) {}

  const ModelConfig& config() const { return config_; }
  Network& net() { return net_; }
  const Network& net() const { return net_; }
  int num_classes() const { return config_.num_classes; }

  // Rows are samples; every sequence must have length max_len.
  Matrix Logits(const std::vector<TokenIds>& sequences) const;
  std::vector<double> PredictProba(const TokenIds& sequence) const;
  std::vector<int> Predict(const std::vector<TokenIds>& sequences) const;

  HostModel Clone() const { return HostModel(config_, net_.Clone()); }

  Checkpoint ToCheckpoint(nlohmann::json metadata = {}) const;
  static HostModel FromCheckpoint(const Checkpoint& checkpoint);

  void CheckSequence(const TokenIds& sequence) const;

 private:
  ModelConfig config_;
  Network net_;
};

HostModel BuildModel(const ModelConfig& config);

struct SanetConfig {
  int vocab_size = 0;
  int embed_dim = 64;
  int carrier_rows = 16;  // hidden units feeding the carrier layer
  int carrier_cols = 2;   // must be 2 (binary head)
  int max_len = 256;
  uint64_t seed = 0;

  nlohmann::json ToJson() const;
  static SanetConfig FromJson(const nlohmann::json& j);
};

// Binary classifier with its own embedding and head. The head is
// features -> carrier_rows -> 2; the weight of the last layer is the
// watermark carrier. Its backbone is the host's backbone object.
class Sanet {
 public:
  Sanet(SanetConfig config, Network net)
      : config_(std::move(config)), net_(std::move(net)) {}

  const SanetConfig& config() const { return config_; }
  Network& net() { return net_; }
  const Network& net() const { return net_; }

  // carrier_rows x 2 weight matrix (bias excluded).
  const Matrix& Carrier() const { return net_.head().back().weight()->value; }
  Matrix& MutableCarrier() { return net_.head().back().weight()->value; }
  const ParamPtr& CarrierParam() const { return net_.head().back().weight(); }

  Matrix Logits(const std::vector<TokenIds>& sequences) const;
  std::vector<int> Predict(const std::vector<TokenIds>& sequences) const;

  // Own embedding plus head.
  ParamList SpecificParameters() const;

  // Deep copy with a private backbone.
  Sanet Clone() const { return Sanet(config_, net_.Clone()); }

  Checkpoint ToCheckpoint(nlohmann::json metadata = {}) const;
  static Sanet FromCheckpoint(const Checkpoint& checkpoint);

 private:
  SanetConfig config_;
  Network net_;
};

// Builds a SANet whose backbone aliases `host`'s backbone.
Sanet BuildSanet(const HostModel& host, int vocab_size, int embed_dim,
                 std::pair<int, int> wm_shape, uint64_t seed);

// Copies every backbone tensor of `checkpoint` into `sanet`'s backbone by
// value. Throws ShapeError naming the offending tensor.
void LoadBackbone(Sanet& sanet, const Checkpoint& checkpoint);

}  // namespace textmark

#endif  // TEXTMARK_MODEL_H_
