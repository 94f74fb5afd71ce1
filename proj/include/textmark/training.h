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

// Losses, clean training and the alternating host/SANet watermark embedding
// loop.

#ifndef TEXTMARK_TRAINING_H_
#define TEXTMARK_TRAINING_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "textmark/corpus.h"
#include "textmark/material.h"
#include "textmark/model.h"

namespace textmark {

enum class OptimizerKind { kAdaGrad, kSgd };

struct TrainConfig {
  double learning_rate = 0.03;
  int batch_size = 64;
  int epochs = 20;
  double lambda_wm = 10.0;
  OptimizerKind optimizer = OptimizerKind::kAdaGrad;
  uint64_t seed = 0;
  // Stop once both branch losses move less than early_stop_tol between
  // consecutive epochs.
  bool early_stop = false;
  double early_stop_tol = 1e-4;
  // Passes over the auth set after the alternating loop in which only the
  // SANet-specific parameters are updated (backbone frozen).
  int settle_epochs = 20;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
};

std::unique_ptr<Optimizer> MakeOptimizer(const TrainConfig& cfg);

enum class Branch { kHost, kSanet, kSettle };

std::string BranchName(Branch branch);

struct LossRecord {
  int64_t step = 0;
  Branch branch = Branch::kHost;
  double task_loss = 0.0;
  std::optional<double> wm_loss;  // SANet and settle steps only
  double total = 0.0;
};

struct LossReport {
  std::vector<LossRecord> records;
  int epochs_run = 0;

  size_t Count(Branch branch) const;
  // step,branch,task_loss,wm_loss,total
  std::string ToCsv() const;
};

// Pre-encoded sequences with labels.
struct EncodedSet {
  std::vector<TokenIds> sequences;
  std::vector<int> labels;

  size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }
};

EncodedSet EncodeCorpus(const Corpus& corpus, const Vocabulary& vocab,
                        int max_len);
EncodedSet EncodeTexts(const std::vector<std::string>& texts,
                       const std::vector<int>& labels,
                       const Vocabulary& vocab, int max_len);
EncodedSet EncodeTriggers(const TriggerSet& triggers, const Vocabulary& vocab,
                          int max_len);
EncodedSet EncodeAuth(const AuthSet& auth, const Vocabulary& vocab,
                      int max_len);

double Accuracy(const HostModel& model, const EncodedSet& data);
double Accuracy(const Sanet& sanet, const EncodedSet& data);

// -log softmax(logits)[label], computed with max subtraction.
double CrossEntropy(std::span<const double> logits, int label);

// (1/T) * sum_i b_i (w_i - s_i)^2 with T the total number of entries.
double WmRegularizer(std::span<const double> w, std::span<const double> s,
                     std::span<const uint8_t> b);
// d/dw of WmRegularizer: 2 b_i (w_i - s_i) / T.
std::vector<double> WmRegularizerGradient(std::span<const double> w,
                                          std::span<const double> s,
                                          std::span<const uint8_t> b);

// Carrier weights flattened row-major as doubles.
std::vector<double> FlattenCarrier(const Sanet& sanet);

// Mean cross-entropy over the clean batch plus mean cross-entropy over the
// trigger batch (targets as labels). An empty trigger batch contributes 0.
double HostLoss(const HostModel& model, const EncodedSet& clean_batch,
                const EncodedSet& trigger_batch);

// Mean cross-entropy over the auth batch plus lambda_wm * WmRegularizer.
double SanetLoss(const Sanet& sanet, const EncodedSet& auth_batch,
                 const WatermarkKeys& keys, double lambda_wm);

// A single host update: mean cross-entropy over `batch` plus mean
// cross-entropy over `triggers` (may be empty). Returns the loss.
double HostStep(HostModel& model, const EncodedSet& batch,
                const EncodedSet& triggers, Optimizer& opt);

// A single SANet update of `params`: auth cross-entropy plus
// lambda_wm * L_wm on the carrier. Gradients reaching other parameters are
// discarded. Returns (task loss, L_wm) before the update.
std::pair<double, double> SanetStep(Sanet& sanet, const EncodedSet& auth_batch,
                                    const WatermarkKeys& keys,
                                    double lambda_wm, Optimizer& opt,
                                    const ParamList& params);

// Called after each epoch with the 1-based epoch number.
using EpochCallback = std::function<void(int epoch)>;

// Mini-batch training of the host on `train`; when `triggers` is non-empty
// every step also adds the mean loss over the full trigger set. The shuffle
// order of epoch e is a function of (cfg.seed, e).
LossReport TrainHost(HostModel& model, const EncodedSet& train,
                     const EncodedSet& triggers, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = nullptr);

LossReport TrainClean(HostModel& model, const Corpus& train,
                      const Vocabulary& vocab, const TrainConfig& cfg);

// Alternating embedding: odd steps train the SANet on an auth batch with the
// weight regularizer, even steps train the host on a clean batch plus the
// full trigger set. Runs until cfg.epochs passes over `train`, then runs
// cfg.settle_epochs passes of SANet-only steps with the backbone frozen.
LossReport EmbedWatermark(HostModel& model, Sanet& sanet,
                          const EncodedSet& train, const EncodedSet& triggers,
                          const EncodedSet& auth, const WatermarkKeys& keys,
                          const TrainConfig& cfg,
                          const EpochCallback& on_epoch = nullptr);

LossReport EmbedWatermark(HostModel& model, Sanet& sanet, const Corpus& train,
                          const TriggerSet& triggers, const AuthSet& auth,
                          const WatermarkKeys& keys, const Vocabulary& vocab,
                          const TrainConfig& cfg);

}  // namespace textmark

#endif  // TEXTMARK_TRAINING_H_
