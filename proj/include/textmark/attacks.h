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

// Adversary simulations against a watermarked host: fine-tuning, head
// replacement, random pruning and forged watermarks. Every attack works on a
// private copy of the model.

#ifndef TEXTMARK_ATTACKS_H_
#define TEXTMARK_ATTACKS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "textmark/material.h"
#include "textmark/model.h"
#include "textmark/training.h"

namespace textmark {

struct WatermarkMetrics {
  double test_acc = 0.0;
  double trigger_acc = 0.0;
  double auth_acc = 0.0;  // owner SANet on the model's backbone
  double delta = 0.0;     // selected-only extraction rate of the owner SANet

  nlohmann::json ToJson() const;
};

// What the owner measures a (possibly attacked) model with.
struct OwnerProbe {
  EncodedSet test;
  EncodedSet triggers;
  EncodedSet auth;
  Sanet sanet;
  WatermarkKeys keys;

  WatermarkMetrics Evaluate(const HostModel& model) const;
  // Same, with a different task test set (after head replacement).
  WatermarkMetrics Evaluate(const HostModel& model,
                            const EncodedSet& test_set) const;
};

// Table of metrics indexed by an increasing x value (epoch or rate).
struct Curve {
  std::string x_name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // x followed by one value per column

  void Add(double x, const WatermarkMetrics& m);
  std::string ToCsv() const;
  nlohmann::json ToJson() const;
};

struct AttackResult {
  std::string attack;
  nlohmann::json params = nlohmann::json::object();
  double pre_test_acc = 0.0;
  WatermarkMetrics post;
  nlohmann::json extra = nlohmann::json::object();
  Curve curve;

  nlohmann::json ToJson() const;
};

// Fine-tunes every parameter of a copy of `model` on `data` with the plain
// task loss. Zero epochs return an unchanged copy. The curve samples the
// probe every `sample_every` epochs (and at epoch 0).
AttackResult FinetuneGlobal(const HostModel& model, const EncodedSet& data,
                            int epochs, const TrainConfig& cfg,
                            const OwnerProbe& probe, int sample_every = 5,
                            HostModel* attacked = nullptr);

// Copy of `model` whose whole classification head is freshly initialised for
// `new_num_classes`; embedding and backbone keep their values.
HostModel ReplaceHead(const HostModel& model, int new_num_classes,
                      uint64_t seed);

// ReplaceHead followed by whole-network fine-tuning on `data` (labels in
// [0, new_num_classes)). Test accuracy is measured on `new_test`.
AttackResult ReplaceHeadFinetune(const HostModel& model, int new_num_classes,
                                 const EncodedSet& data,
                                 const EncodedSet& new_test, int epochs,
                                 const TrainConfig& cfg,
                                 const OwnerProbe& probe,
                                 int sample_every = 5,
                                 HostModel* attacked = nullptr);

// Number of scalars eligible for pruning: all non-bias weights except the
// embedding PAD row.
size_t PrunableScalars(const HostModel& model);

// Copy of `model` with floor(rate * PrunableScalars) uniformly chosen
// eligible scalars set to zero. rate must lie in [0, 0.9].
HostModel PruneRandom(const HostModel& model, double rate, uint64_t seed);

// Prunes at each rate independently; rows also record whether test accuracy
// stayed within `utility_drop` of the unpruned model.
AttackResult PruneSweep(const HostModel& model,
                        const std::vector<double>& rates, uint64_t seed,
                        const OwnerProbe& probe, double utility_drop = 0.10);

struct ForgeConfig {
  int m_per_class = 10;
  int auth_pairs = 200;
  int wm_rows = 16;
  int wm_cols = 2;
  double density = 0.5;
  uint64_t seed = 0;
  std::string adversary_info = "adversary";
};

// The adversary derives its own trigger set from the stolen model and
// `adversary_data`, then fine-tunes it in.
AttackResult ForgeTriggerAttack(const HostModel& model,
                                const Corpus& adversary_data,
                                const Vocabulary& vocab,
                                const TrainConfig& cfg,
                                const ForgeConfig& forge,
                                const OwnerProbe& probe);

// The adversary builds its own SANet, keys and authentication set and embeds
// them jointly with its own trigger set.
AttackResult ForgeSanetAttack(const HostModel& model,
                              const Corpus& adversary_data,
                              const Vocabulary& vocab, const TrainConfig& cfg,
                              const ForgeConfig& forge,
                              const OwnerProbe& probe);

}  // namespace textmark

#endif  // TEXTMARK_ATTACKS_H_
