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

#include "textmark/attacks.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "textmark/verification.h"

namespace textmark {

namespace {

const std::vector<std::string> kMetricColumns = {"test_acc", "trigger_acc",
                                                 "auth_acc", "delta"};

std::string FormatNumber(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

// Fine-tunes `model` in place, sampling the probe on the curve. Zero epochs
// leave the model untouched.
void FinetuneInPlace(HostModel& model, const EncodedSet& data, int epochs,
                     const TrainConfig& cfg, const EncodedSet& triggers,
                     const std::function<WatermarkMetrics()>& evaluate,
                     int sample_every, Curve& curve) {
  if (epochs < 0) throw Error("epochs must be >= 0");
  if (sample_every < 1) throw Error("sample_every must be >= 1");
  curve.x_name = "epoch";
  curve.Add(0, evaluate());
  if (epochs == 0) return;
  TrainConfig run = cfg;
  run.epochs = epochs;
  run.early_stop = false;
  TrainHost(model, data, triggers, run, [&](int epoch) {
    if (epoch % sample_every == 0 || epoch == epochs) {
      curve.Add(epoch, evaluate());
    }
  });
}

}  // namespace

nlohmann::json WatermarkMetrics::ToJson() const {
  return {{"test_acc", test_acc},
          {"trigger_acc", trigger_acc},
          {"auth_acc", auth_acc},
          {"delta", delta}};
}

WatermarkMetrics OwnerProbe::Evaluate(const HostModel& model) const {
  return Evaluate(model, test);
}

WatermarkMetrics OwnerProbe::Evaluate(const HostModel& model,
                                      const EncodedSet& test_set) const {
  WatermarkMetrics m;
  m.test_acc = Accuracy(model, test_set);
  m.trigger_acc = triggers.empty() ? 0.0 : Accuracy(model, triggers);
  Sanet assembled = sanet.Clone();
  LoadBackbone(assembled, model.ToCheckpoint());
  m.auth_acc = auth.empty() ? 0.0 : Accuracy(assembled, auth);
  m.delta = ExtractDelta(assembled, keys, DeltaMode::kSelectedOnly);
  return m;
}

void Curve::Add(double x, const WatermarkMetrics& m) {
  if (columns.empty()) columns = kMetricColumns;
  if (!rows.empty() && x <= rows.back()[0]) {
    throw Error("curve x values must increase");
  }
  rows.push_back({x, m.test_acc, m.trigger_acc, m.auth_acc, m.delta});
}

std::string Curve::ToCsv() const {
  std::string out = x_name;
  for (const std::string& c : columns) out += "," + c;
  out += "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      out += FormatNumber(row[i]);
    }
    out += "\n";
  }
  return out;
}

nlohmann::json Curve::ToJson() const {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json p = {{x_name, row[0]}};
    for (size_t i = 0; i < columns.size() && i + 1 < row.size(); ++i) {
      p[columns[i]] = row[i + 1];
    }
    points.push_back(std::move(p));
  }
  return points;
}

nlohmann::json AttackResult::ToJson() const {
  return {{"attack", attack},         {"params", params},
          {"pre_test_acc", pre_test_acc}, {"post", post.ToJson()},
          {"extra", extra},           {"curve", curve.ToJson()}};
}

AttackResult FinetuneGlobal(const HostModel& model, const EncodedSet& data,
                            int epochs, const TrainConfig& cfg,
                            const OwnerProbe& probe, int sample_every,
                            HostModel* attacked) {
  if (data.empty()) throw Error("fine-tuning data is empty");
  AttackResult r;
  r.attack = "finetune_global";
  r.params = {{"epochs", epochs}, {"samples", data.size()},
              {"train", cfg.ToJson()}};
  r.pre_test_acc = Accuracy(model, probe.test);
  HostModel copy = model.Clone();
  FinetuneInPlace(copy, data, epochs, cfg, EncodedSet{},
                  [&] { return probe.Evaluate(copy); }, sample_every, r.curve);
  r.post = probe.Evaluate(copy);
  if (attacked) *attacked = std::move(copy);
  return r;
}

HostModel ReplaceHead(const HostModel& model, int new_num_classes,
                      uint64_t seed) {
  if (new_num_classes < 2) throw Error("new_num_classes must be >= 2");
  ModelConfig config = model.config();
  config.num_classes = new_num_classes;
  std::mt19937_64 rng(seed);
  const Network& net = model.net();
  std::vector<Dense> head;
  head.emplace_back("head.0", net.backbone()->feature_dim(), config.hidden_dim,
                    rng);
  head.emplace_back("head.1", config.hidden_dim, new_num_classes, rng);
  Embedding embedding(std::make_shared<Parameter>(*net.embedding().table()));
  return HostModel(config,
                   Network(std::move(embedding),
                           std::shared_ptr<Backbone>(net.backbone()->Clone()),
                           std::move(head)));
}

AttackResult ReplaceHeadFinetune(const HostModel& model, int new_num_classes,
                                 const EncodedSet& data,
                                 const EncodedSet& new_test, int epochs,
                                 const TrainConfig& cfg,
                                 const OwnerProbe& probe, int sample_every,
                                 HostModel* attacked) {
  if (data.empty()) throw Error("fine-tuning data is empty");
  for (int label : data.labels) {
    if (label < 0 || label >= new_num_classes) {
      throw Error("fine-tuning label " + std::to_string(label) +
                  " outside [0, " + std::to_string(new_num_classes) + ")");
    }
  }
  AttackResult r;
  r.attack = "replace_head_finetune";
  r.params = {{"new_num_classes", new_num_classes},
              {"epochs", epochs},
              {"samples", data.size()},
              {"train", cfg.ToJson()}};
  r.pre_test_acc = Accuracy(model, probe.test);
  r.extra["pre_trigger_acc"] = Accuracy(model, probe.triggers);
  HostModel copy = ReplaceHead(model, new_num_classes, cfg.seed);
  FinetuneInPlace(copy, data, epochs, cfg, EncodedSet{},
                  [&] { return probe.Evaluate(copy, new_test); },
                  sample_every, r.curve);
  r.post = probe.Evaluate(copy, new_test);
  r.extra["trigger_drop"] =
      r.extra["pre_trigger_acc"].get<double>() - r.post.trigger_acc;
  if (attacked) *attacked = std::move(copy);
  return r;
}

size_t PrunableScalars(const HostModel& model) {
  size_t n = 0;
  for (const ParamPtr& p : model.net().Parameters()) {
    if (p->bias) continue;
    n += static_cast<size_t>(p->value.size());
  }
  // The PAD row of the embedding is excluded.
  return n - static_cast<size_t>(model.net().embedding().dim());
}

HostModel PruneRandom(const HostModel& model, double rate, uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 0.9)) {
    throw Error("pruning rate must lie in [0, 0.9]");
  }
  HostModel copy = model.Clone();
  // Flat view over every eligible scalar, in parameter order.
  std::vector<float*> slots;
  const ParamPtr& table = copy.net().embedding().table();
  for (const ParamPtr& p : copy.net().Parameters()) {
    if (p->bias) continue;
    float* data = p->value.data();
    Eigen::Index begin = 0;
    if (p == table) begin = p->value.cols() * (Vocabulary::kPad + 1);
    for (Eigen::Index i = begin; i < p->value.size(); ++i) {
      slots.push_back(data + i);
    }
  }
  const size_t k =
      static_cast<size_t>(std::floor(rate * static_cast<double>(slots.size())));
  std::mt19937_64 rng(seed);
  std::vector<size_t> index(slots.size());
  std::iota(index.begin(), index.end(), 0);
  // Partial Fisher-Yates: the first k entries become a uniform k-subset.
  for (size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<size_t> pick(i, index.size() - 1);
    std::swap(index[i], index[pick(rng)]);
    *slots[index[i]] = 0.0f;
  }
  return copy;
}

AttackResult PruneSweep(const HostModel& model,
                        const std::vector<double>& rates, uint64_t seed,
                        const OwnerProbe& probe, double utility_drop) {
  AttackResult r;
  r.attack = "prune_random";
  r.params = {{"rates", rates}, {"seed", seed}, {"utility_drop", utility_drop}};
  r.pre_test_acc = Accuracy(model, probe.test);
  r.curve.x_name = "rate";
  nlohmann::json rows = nlohmann::json::array();
  for (double rate : rates) {
    HostModel pruned = PruneRandom(model, rate, seed);
    WatermarkMetrics m = probe.Evaluate(pruned);
    r.curve.Add(rate, m);
    bool useful = m.test_acc >= r.pre_test_acc - utility_drop;
    rows.push_back({{"rate", rate},
                    {"test_acc", m.test_acc},
                    {"trigger_acc", m.trigger_acc},
                    {"useful", useful},
                    {"pruned_scalars",
                     static_cast<size_t>(std::floor(
                         rate * static_cast<double>(PrunableScalars(model))))}});
    r.post = m;
  }
  r.extra["sweep"] = rows;
  return r;
}

namespace {

Corpus WithoutTexts(const Corpus& corpus, const TriggerSet& triggers) {
  std::unordered_set<std::string> drop;
  for (const TriggerItem& item : triggers.items) drop.insert(item.sample.text);
  std::vector<TextSample> kept;
  for (const TextSample& s : corpus.samples()) {
    if (!drop.count(s.text)) kept.push_back(s);
  }
  return Corpus(corpus.name(), corpus.num_classes(), std::move(kept), false);
}

}  // namespace

AttackResult ForgeTriggerAttack(const HostModel& model,
                                const Corpus& adversary_data,
                                const Vocabulary& vocab,
                                const TrainConfig& cfg,
                                const ForgeConfig& forge,
                                const OwnerProbe& probe) {
  const int max_len = model.config().max_len;
  AttackResult r;
  r.attack = "forge_trigger";
  r.params = {{"m_per_class", forge.m_per_class},
              {"seed", forge.seed},
              {"samples", adversary_data.size()},
              {"train", cfg.ToJson()}};
  r.pre_test_acc = Accuracy(model, probe.test);
  TriggerSet forged = GenerateTriggerSet(model, vocab, adversary_data,
                                         forge.m_per_class, forge.seed,
                                         "stolen-model");
  EncodedSet forged_enc = EncodeTriggers(forged, vocab, max_len);
  // On the owner's pre-attack model the forged labels are argmin labels, so
  // they fail there: that checkpoint settles the ambiguity.
  r.extra["adversary_trigger_acc_pre"] = Accuracy(model, forged_enc);
  r.extra["owner_trigger_acc_pre"] = Accuracy(model, probe.triggers);
  r.extra["adversary_triggers"] = forged.items.size();

  HostModel copy = model.Clone();
  EncodedSet data =
      EncodeCorpus(WithoutTexts(adversary_data, forged), vocab, max_len);
  TrainConfig run = cfg;
  run.early_stop = false;
  r.curve.x_name = "epoch";
  r.curve.Add(0, probe.Evaluate(copy));
  TrainHost(copy, data, forged_enc, run, [&](int epoch) {
    if (epoch == run.epochs) r.curve.Add(epoch, probe.Evaluate(copy));
  });
  r.post = probe.Evaluate(copy);
  r.extra["adversary_trigger_acc_post"] = Accuracy(copy, forged_enc);
  r.extra["owner_trigger_acc_post"] = r.post.trigger_acc;
  return r;
}

AttackResult ForgeSanetAttack(const HostModel& model,
                              const Corpus& adversary_data,
                              const Vocabulary& vocab, const TrainConfig& cfg,
                              const ForgeConfig& forge,
                              const OwnerProbe& probe) {
  const int max_len = model.config().max_len;
  AttackResult r;
  r.attack = "forge_sanet";
  r.params = {{"m_per_class", forge.m_per_class},
              {"auth_pairs", forge.auth_pairs},
              {"wm_shape", {forge.wm_rows, forge.wm_cols}},
              {"density", forge.density},
              {"seed", forge.seed},
              {"samples", adversary_data.size()},
              {"train", cfg.ToJson()}};
  r.pre_test_acc = Accuracy(model, probe.test);

  HostModel copy = model.Clone();
  // Independent adversary secrets, all derived from the forge seed.
  std::seed_seq seq{forge.seed, uint64_t{0x5a4e}};
  std::vector<uint64_t> seeds(5);
  seq.generate(seeds.begin(), seeds.end());
  TriggerSet forged = GenerateTriggerSet(copy, vocab, adversary_data,
                                         forge.m_per_class, seeds[0],
                                         "stolen-model");
  std::vector<uint8_t> kappa1 = GenerateKappa1(seeds[1]);
  MessageDigest digest = ComputeDigest(kappa1, forge.adversary_info);
  AuthSet adv_auth =
      GenerateAuthSet(adversary_data, forge.auth_pairs, digest, seeds[2]);
  WatermarkKeys adv_keys =
      GenerateKeys({forge.wm_rows, forge.wm_cols}, forge.density, seeds[3]);
  Sanet adv_sanet =
      BuildSanet(copy, vocab.size(), copy.net().embedding().dim(),
                 {forge.wm_rows, forge.wm_cols}, seeds[4]);
  TrainConfig run = cfg;
  run.early_stop = false;
  EmbedWatermark(copy, adv_sanet, adversary_data, forged, adv_auth, adv_keys,
                 vocab, run);

  r.post = probe.Evaluate(copy);
  EncodedSet adv_auth_enc = EncodeAuth(adv_auth, vocab, max_len);
  r.extra["adversary_sanet_on_adversary_auth"] =
      Accuracy(adv_sanet, adv_auth_enc);
  r.extra["adversary_sanet_on_owner_auth"] = Accuracy(adv_sanet, probe.auth);
  r.extra["adversary_delta"] =
      ExtractDelta(adv_sanet, adv_keys, DeltaMode::kSelectedOnly);
  r.extra["adversary_trigger_acc_post"] =
      Accuracy(copy, EncodeTriggers(forged, vocab, max_len));
  r.extra["owner_sanet_on_owner_auth"] = r.post.auth_acc;
  r.extra["adversary_keys_fingerprint"] = adv_keys.Fingerprint();
  return r;
}

}  // namespace textmark
