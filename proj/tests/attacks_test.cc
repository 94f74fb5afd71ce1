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

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "textmark/synthetic.h"
#include "textmark/verification.h"

namespace textmark {
namespace {

constexpr int kMaxLen = 24;

struct Fixture {
  CorpusBundle data =
      MakeSyntheticCorpora(SyntheticKind::kSentiment, 8, 200, 40, 200);
  Vocabulary vocab = Vocabulary::Build(data.train, 1, 5000);
  std::optional<HostModel> model;
  std::optional<OwnerProbe> probe;
  EncodedSet train;

  Fixture() {
    ModelConfig mc;
    mc.vocab_size = static_cast<int>(vocab.size());
    mc.embed_dim = 8;
    mc.hidden_dim = 6;
    mc.max_len = kMaxLen;
    mc.filters_per_width = 4;
    mc.seed = 2;
    model.emplace(BuildModel(mc));
    TrainConfig warmup;
    warmup.epochs = 4;
    warmup.batch_size = 32;
    TrainClean(*model, data.train, vocab, warmup);
    TriggerSet trig = GenerateTriggerSet(*model, vocab, data.train, 1, 3);
    AuthSet auth = GenerateAuthSet(data.train, 8,
                                   ComputeDigest(GenerateKappa1(1), "me"), 5);
    Sanet sanet = BuildSanet(*model, mc.vocab_size, 8, {6, 2}, 4);
    probe.emplace(OwnerProbe{EncodeCorpus(data.test, vocab, kMaxLen),
                             EncodeTriggers(trig, vocab, kMaxLen),
                             EncodeAuth(auth, vocab, kMaxLen), sanet.Clone(),
                             GenerateKeys({6, 2}, 0.5, 42)});
    train = EncodeCorpus(data.train, vocab, kMaxLen);
  }
};

std::vector<Matrix> Snapshot(const HostModel& model) {
  std::vector<Matrix> out;
  for (const ParamPtr& p : model.net().Parameters()) out.push_back(p->value);
  return out;
}

bool SameParams(const HostModel& a, const HostModel& b) {
  ParamList pa = a.net().Parameters(), pb = b.net().Parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value != pb[i]->value) return false;
  }
  return true;
}

size_t CountZeros(const Matrix& m) {
  return static_cast<size_t>((m.array() == 0.0f).count());
}

TEST(Prune, ZeroesExactlyFloorRateTimesEligibleScalars) {
  Fixture f;
  const size_t eligible = PrunableScalars(*f.model);
  size_t weights = 0;
  for (const ParamPtr& p : f.model->net().Parameters()) {
    if (!p->bias) weights += p->value.size();
  }
  EXPECT_EQ(eligible, weights - 8);  // minus the PAD row
  auto zeros = [](const HostModel& m) {
    size_t n = 0;
    for (const ParamPtr& p : m.net().Parameters()) {
      if (!p->bias) n += CountZeros(p->value);
    }
    return n;
  };
  const size_t base = zeros(*f.model);  // the PAD row
  for (double rate : {0.0, 0.1, 0.5, 0.9}) {
    HostModel pruned = PruneRandom(*f.model, rate, 4);
    EXPECT_EQ(zeros(pruned) - base,
              static_cast<size_t>(std::floor(rate * eligible)))
        << rate;
  }
}

TEST(Prune, IsPureAndSparesBiases) {
  Fixture f;
  std::vector<Matrix> before = Snapshot(*f.model);
  HostModel pruned = PruneRandom(*f.model, 0.5, 4);
  std::vector<Matrix> after = Snapshot(*f.model);
  ASSERT_EQ(before.size(), after.size());
  for (size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
  ParamList orig = f.model->net().Parameters();
  ParamList pp = pruned.net().Parameters();
  for (size_t i = 0; i < pp.size(); ++i) {
    EXPECT_NE(orig[i].get(), pp[i].get());
    if (pp[i]->bias) EXPECT_EQ(pp[i]->value, orig[i]->value) << pp[i]->name;
  }
  EXPECT_TRUE(SameParams(PruneRandom(*f.model, 0.0, 4), *f.model));
  EXPECT_TRUE(SameParams(PruneRandom(*f.model, 0.3, 9),
                         PruneRandom(*f.model, 0.3, 9)));
  EXPECT_THROW(PruneRandom(*f.model, 0.95, 1), Error);
  EXPECT_THROW(PruneRandom(*f.model, -0.1, 1), Error);
}

TEST(Prune, SweepRecordsUtilityWithEveryRate) {
  Fixture f;
  AttackResult r = PruneSweep(*f.model, {0.0, 0.5}, 3, *f.probe);
  ASSERT_EQ(r.curve.rows.size(), 2u);
  EXPECT_EQ(r.curve.x_name, "rate");
  EXPECT_EQ(r.extra["sweep"].size(), 2u);
  EXPECT_DOUBLE_EQ(r.curve.rows[0][1], r.pre_test_acc);
  EXPECT_TRUE(r.extra["sweep"][0]["useful"].get<bool>());
  for (const auto& row : r.extra["sweep"]) EXPECT_TRUE(row.contains("test_acc"));
}

TEST(Finetune, ZeroEpochsIsIdentity) {
  Fixture f;
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  HostModel attacked = f.model->Clone();
  AttackResult r =
      FinetuneGlobal(*f.model, f.train, 0, cfg, *f.probe, 5, &attacked);
  EXPECT_TRUE(SameParams(attacked, *f.model));
  WatermarkMetrics pre = f.probe->Evaluate(*f.model);
  EXPECT_EQ(r.post.test_acc, pre.test_acc);
  EXPECT_EQ(r.post.trigger_acc, pre.trigger_acc);
  EXPECT_EQ(r.post.auth_acc, pre.auth_acc);
  EXPECT_EQ(r.post.delta, pre.delta);
  EXPECT_EQ(r.curve.rows.size(), 1u);
}

TEST(Finetune, LeavesInputAloneAndSamplesTheCurve) {
  Fixture f;
  std::vector<Matrix> before = Snapshot(*f.model);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.batch_size = 32;
  HostModel attacked = f.model->Clone();
  AttackResult r =
      FinetuneGlobal(*f.model, f.train, 3, cfg, *f.probe, 2, &attacked);
  std::vector<Matrix> after = Snapshot(*f.model);
  for (size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
  EXPECT_FALSE(SameParams(attacked, *f.model));
  ASSERT_EQ(r.curve.rows.size(), 3u);  // epochs 0, 2, 3
  EXPECT_EQ(r.curve.rows[1][0], 2.0);
  EXPECT_EQ(r.curve.rows[2][0], 3.0);
  nlohmann::json j = r.ToJson();
  EXPECT_TRUE(j.contains("post"));
  EXPECT_THROW(FinetuneGlobal(*f.model, EncodedSet{}, 1, cfg, *f.probe),
               Error);
}

TEST(ReplaceHead, NewShapesAndCopiedBackbone) {
  Fixture f;
  HostModel replaced = ReplaceHead(*f.model, 4, 1);
  EXPECT_EQ(replaced.num_classes(), 4);
  EXPECT_EQ(replaced.net().num_outputs(), 4);
  EXPECT_EQ(replaced.net().head().back().weight()->value.cols(), 4);
  EXPECT_NE(replaced.net().backbone().get(), f.model->net().backbone().get());
  ParamList a = replaced.net().BackboneParameters();
  ParamList b = f.model->net().BackboneParameters();
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
  EXPECT_EQ(replaced.net().EmbeddingParameters()[0]->value,
            f.model->net().EmbeddingParameters()[0]->value);
  // The owner's white-box channel only needs the backbone.
  EXPECT_EQ(f.probe->Evaluate(replaced).auth_acc,
            f.probe->Evaluate(*f.model).auth_acc);
  EXPECT_THROW(ReplaceHead(*f.model, 1, 1), Error);
}

TEST(ReplaceHead, FinetuneRejectsOutOfRangeLabels) {
  Fixture f;
  TrainConfig cfg;
  EncodedSet bad = f.train;
  bad.labels[0] = 7;
  EXPECT_THROW(ReplaceHeadFinetune(*f.model, 4, bad, f.probe->test, 1, cfg,
                                   *f.probe),
               Error);
}

TEST(Curve, XMustIncrease) {
  Curve c;
  c.x_name = "epoch";
  c.Add(0, {});
  c.Add(1, {});
  EXPECT_THROW(c.Add(1, {}), Error);
  EXPECT_THROW(c.Add(0.5, {}), Error);
  std::string csv = c.ToCsv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,test_acc,trigger_acc,auth_acc,delta");
}

TEST(Forge, TriggerAttackRecordsBothTriggerSets) {
  Fixture f;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.optimizer = OptimizerKind::kSgd;
  ForgeConfig forge;
  forge.m_per_class = 1;
  forge.seed = 6;
  AttackResult r = ForgeTriggerAttack(*f.model, f.data.extra, f.vocab, cfg,
                                      forge, *f.probe);
  // Forged labels are the stolen model's argmin labels.
  EXPECT_EQ(r.extra["adversary_trigger_acc_pre"], 0.0);
  EXPECT_EQ(r.extra["adversary_triggers"], 2);
  EXPECT_TRUE(r.extra.contains("adversary_trigger_acc_post"));
  EXPECT_TRUE(r.extra.contains("owner_trigger_acc_post"));
}

TEST(Forge, SanetAttackReportsOnlyKeyFingerprints) {
  Fixture f;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.settle_epochs = 1;
  ForgeConfig forge;
  forge.m_per_class = 1;
  forge.auth_pairs = 10;
  forge.wm_rows = 4;
  forge.seed = 6;
  AttackResult r = ForgeSanetAttack(*f.model, f.data.extra, f.vocab, cfg,
                                    forge, *f.probe);
  std::string dumped = r.ToJson().dump();
  EXPECT_EQ(dumped.find("kappa2"), std::string::npos);
  EXPECT_EQ(r.extra["adversary_keys_fingerprint"].get<std::string>().size(),
            16u);
  for (const char* key :
       {"adversary_sanet_on_adversary_auth", "adversary_sanet_on_owner_auth",
        "owner_sanet_on_owner_auth", "adversary_delta"}) {
    EXPECT_TRUE(r.extra.contains(key)) << key;
  }
}

}  // namespace
}  // namespace textmark
