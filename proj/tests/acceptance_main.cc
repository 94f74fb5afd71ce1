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

// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
// Usage: textmark_acceptance [--quick] [--work DIR]
//   --quick  small corpora and few epochs; exercises the code paths, the
//            thresholds are not expected to hold.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "textmark/attacks.h"
#include "textmark/concealment.h"
#include "textmark/run.h"
#include "textmark/synthetic.h"
#include "textmark/training.h"
#include "textmark/verification.h"

namespace textmark {
namespace {

namespace fs = std::filesystem;

struct Scale {
  int train = 2000;
  int sentiment_test = 500;
  int topic_test = 400;
  int extra = 2000;
  int epochs = 20;
  int attack_epochs = 30;
  int forge_epochs = 20;
  int m_sentiment = 10;
  int m_topic = 5;
  int auth_pairs = 200;
};

Scale QuickScale() {
  Scale s;
  s.train = 600;
  s.sentiment_test = 150;
  s.topic_test = 120;
  s.extra = 600;
  s.epochs = 3;
  s.attack_epochs = 3;
  s.forge_epochs = 2;
  s.m_sentiment = 3;
  s.m_topic = 1;
  s.auth_pairs = 40;
  return s;
}

constexpr uint64_t kCorpusSeed = 1;
constexpr uint64_t kModelSeed = 11;
constexpr uint64_t kIndependentSeed = kModelSeed + 1;
constexpr uint64_t kTrainSeed = 5;
constexpr uint64_t kTriggerSeed = 3;
constexpr uint64_t kAuthSeed = 4;
constexpr uint64_t kOwnerSeed = 42;
constexpr uint64_t kSanetSeed = 77;
constexpr int kMaxLen = 256;

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

class Board {
 public:
  void Note(int criterion, const std::string& line) {
    std::cout << "  [" << criterion << "] " << line << std::endl;
    notes_[criterion].push_back(line);
  }
  void Check(int criterion, bool ok, const std::string& what) {
    if (!ok) failures_[criterion].push_back(what);
    checked_[criterion] = true;
  }
  bool Passed(int criterion) const {
    return checked_.count(criterion) && !failures_.count(criterion);
  }
  void Print(int criterion, const std::string& title) const {
    std::cout << "criterion " << std::setw(2) << criterion << ": "
              << (Passed(criterion) ? "PASS" : "FAIL") << "  " << title;
    auto it = failures_.find(criterion);
    if (it != failures_.end()) {
      std::cout << "  (failed:";
      for (const std::string& f : it->second) std::cout << " " << f << ";";
      std::cout << ")";
    }
    if (!checked_.count(criterion)) std::cout << "  (not evaluated)";
    std::cout << std::endl;
  }

 private:
  std::map<int, std::vector<std::string>> notes_;
  std::map<int, std::vector<std::string>> failures_;
  std::map<int, bool> checked_;
};

std::string F(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// Independent oracles (long double, written without the library helpers).

long double OracleCrossEntropy(const std::vector<double>& logits, int label) {
  long double m = *std::max_element(logits.begin(), logits.end());
  long double sum = 0;
  for (double z : logits) sum += std::exp(static_cast<long double>(z) - m);
  return -(static_cast<long double>(logits[label]) - m - std::log(sum));
}

long double OracleWm(const std::vector<double>& w, const std::vector<double>& s,
                     const std::vector<uint8_t>& b) {
  long double acc = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    if (b[i]) {
      long double d = static_cast<long double>(w[i]) - s[i];
      acc += d * d;
    }
  }
  return acc / w.size();
}

double OracleDelta(const std::vector<double>& w, const std::vector<double>& s,
                   const std::vector<uint8_t>& b, bool literal) {
  int pass = 0, count = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    if (literal) {
      ++count;
      double x = b[i] ? std::fabs(w[i] - s[i]) : 0.0;
      pass += x <= 0.01;
    } else if (b[i]) {
      ++count;
      pass += std::fabs(w[i] - s[i]) <= 0.01;
    }
  }
  return static_cast<double>(pass) / count;
}

void CriterionExactness(Board& board) {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  const int kInstances = 60;
  for (int n = 0; n < kInstances; ++n) {
    const int classes = 2 + static_cast<int>(rng() % 6);
    std::vector<double> logits(classes);
    for (double& z : logits) z = 8.0 * u(rng);
    const int label = static_cast<int>(rng() % classes);
    worst = std::max(worst, std::fabs(static_cast<double>(
                                CrossEntropy(logits, label) -
                                OracleCrossEntropy(logits, label))));

    const int t = 4 + static_cast<int>(rng() % 40);
    std::vector<double> w(t), s(t);
    std::vector<uint8_t> b(t);
    for (int i = 0; i < t; ++i) {
      s[i] = u(rng);
      // Mix exact hits, near misses and far misses.
      double kind = (u(rng) + 1.0) / 2.0;
      w[i] = kind < 0.3 ? s[i] : kind < 0.6 ? s[i] + 0.02 * u(rng) : u(rng);
      b[i] = rng() % 2;
    }
    b[rng() % t] = 1;
    worst = std::max(worst, std::fabs(static_cast<double>(
                                WmRegularizer(w, s, b) - OracleWm(w, s, b))));
    worst = std::max(
        worst, std::fabs(ExtractDelta(w, s, b, DeltaMode::kSelectedOnly) -
                         OracleDelta(w, s, b, false)));
    worst = std::max(worst, std::fabs(ExtractDelta(w, s, b, DeltaMode::kLiteral) -
                                      OracleDelta(w, s, b, true)));
    const double x = std::fabs(u(rng)) * 0.02;
    worst = std::max(worst, std::fabs(StepF(x) - (x <= 0.01 ? 1.0 : 0.0)));
  }
  board.Note(1, std::to_string(kInstances) +
                    " random instances, worst abs error " +
                    std::to_string(worst));
  board.Check(1, worst <= 1e-9, "random instances");

  // Worked examples.
  using V = std::vector<double>;
  using B = std::vector<uint8_t>;
  const double wm = WmRegularizer(V{0.5, 0.1, -0.3, 0.2},
                                  V{0.5, 0.9, 0.3, 0.2}, B{1, 0, 1, 0});
  const double g = WmRegularizerGradient(V{0.5, 0.1, -0.3, 0.2},
                                         V{0.5, 0.9, 0.3, 0.2},
                                         B{1, 0, 1, 0})[2];
  const double d = ExtractDelta(V{0.5, -0.2, 0.3}, V{0.5, 0.9, 0.305},
                                B{1, 1, 1}, DeltaMode::kSelectedOnly);
  const double d_sel = ExtractDelta(V{0.5, 9.0}, V{0.5, -9.0}, B{1, 0},
                                    DeltaMode::kSelectedOnly);
  const double d_lit = ExtractDelta(V{0.5, 9.0}, V{0.5, -9.0}, B{1, 0},
                                    DeltaMode::kLiteral);
  const double ce_uniform = CrossEntropy(V{0.0, 0.0}, 0);
  const double ce_far = CrossEntropy(V{10.0, -10.0}, 0);
  const double ce_far_oracle = std::log1p(std::exp(-20.0));
  board.Note(1, "L_wm " + std::to_string(wm) + ", dL/dw3 " +
                    std::to_string(g) + ", delta " + std::to_string(d) +
                    ", b=(1,0) selected/literal " + std::to_string(d_sel) +
                    "/" + std::to_string(d_lit));
  board.Check(1, std::fabs(wm - 0.09) <= 1e-12, "L_wm example");
  board.Check(1, std::fabs(g + 0.3) <= 1e-12, "gradient example");
  board.Check(1, std::fabs(d - 2.0 / 3.0) <= 1e-12, "delta example");
  board.Check(1, d_sel == 1.0 && d_lit == 1.0, "mode example");
  board.Check(1, std::fabs(ce_uniform - std::log(2.0)) <= 1e-12,
              "ce uniform");
  board.Check(1, std::fabs(ce_far - ce_far_oracle) <= 1e-15, "ce far");
  board.Check(1, StepF(0.005) == 1 && StepF(0.01) == 1 && StepF(0.02) == 0,
              "step boundary");
}

void CriterionGradient(Board& board) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int t = 32;
  std::vector<double> s(t);
  std::vector<uint8_t> b(t);
  for (int i = 0; i < t; ++i) {
    s[i] = u(rng);
    b[i] = rng() % 2;
  }
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    std::vector<double> w(t);
    for (double& x : w) x = u(rng);
    std::vector<double> grad = WmRegularizerGradient(w, s, b);
    for (int i = 0; i < t; ++i) {
      const double h = 1e-5;
      std::vector<double> plus = w, minus = w;
      plus[i] += h;
      minus[i] -= h;
      double fd = (WmRegularizer(plus, s, b) - WmRegularizer(minus, s, b)) /
                  (2 * h);
      double scale = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-8});
      double rel = std::fabs(fd - grad[i]) / scale;
      if (std::fabs(fd) < 1e-12 && std::fabs(grad[i]) < 1e-12) rel = 0.0;
      worst = std::max(worst, rel);
    }
  }
  board.Note(2, "20 points x 32 coordinates, worst relative error " +
                    std::to_string(worst));
  board.Check(2, worst <= 1e-5, "finite differences");
}

// ---------------------------------------------------------------------------
// End-to-end setups.

struct Setup {
  std::string kind;
  Arch arch;
  const CorpusBundle* bundle;
  Vocabulary vocab;
  HostModel clean;
  HostModel watermarked;
  Sanet sanet;
  TriggerSet triggers;
  AuthSet auth;
  WatermarkKeys keys;
  EncodedSet test;
  EncodedSet trig;
  EncodedSet auth_enc;
  std::string name() const { return kind + "/" + ArchName(arch); }
};

TrainConfig OwnerTrain(const Scale& scale) {
  TrainConfig tc;
  tc.epochs = scale.epochs;
  tc.seed = kTrainSeed;
  return tc;
}

TrainConfig AttackTrain(int epochs) {
  TrainConfig tc;
  tc.optimizer = OptimizerKind::kSgd;
  tc.seed = 17;
  tc.epochs = epochs;
  return tc;
}

Vocabulary SharedVocab(const Corpus& a, const Corpus* b) {
  if (!b) return Vocabulary::Build(a, 1, 20000);
  std::vector<TextSample> all = a.samples();
  all.insert(all.end(), b->samples().begin(), b->samples().end());
  return Vocabulary::Build(Corpus("vocab", std::max(a.num_classes(),
                                                    b->num_classes()),
                                  std::move(all), false),
                           1, 20000);
}

Setup Build(const std::string& kind, Arch arch, const CorpusBundle& bundle,
            const Corpus* cross_train, const Scale& scale) {
  auto start = std::chrono::steady_clock::now();
  Vocabulary vocab = SharedVocab(bundle.train, cross_train);
  ModelConfig mc;
  mc.arch = arch;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.num_classes = bundle.train.num_classes();
  mc.max_len = kMaxLen;
  mc.seed = kModelSeed;
  TrainConfig tc = OwnerTrain(scale);

  HostModel clean = BuildModel(mc);
  TrainClean(clean, bundle.train, vocab, tc);
  const int m = kind == "sentiment" ? scale.m_sentiment : scale.m_topic;
  TriggerSet triggers =
      GenerateTriggerSet(clean, vocab, bundle.train, m, kTriggerSeed, "clean");
  std::vector<uint8_t> kappa1 = GenerateKappa1(kOwnerSeed);
  AuthSet auth = GenerateAuthSet(bundle.train, scale.auth_pairs,
                                 ComputeDigest(kappa1, "textmark owner"),
                                 kAuthSeed);
  WatermarkKeys keys = GenerateKeys({16, 2}, 0.5, kOwnerSeed);

  HostModel wm = BuildModel(mc);
  Sanet sanet = BuildSanet(wm, static_cast<int>(vocab.size()), mc.embed_dim,
                           {16, 2}, kSanetSeed);
  EmbedWatermark(wm, sanet, bundle.train, triggers, auth, keys, vocab, tc);

  Setup s{kind,
          arch,
          &bundle,
          vocab,
          std::move(clean),
          std::move(wm),
          std::move(sanet),
          triggers,
          auth,
          keys,
          EncodeCorpus(bundle.test, vocab, kMaxLen),
          EncodeTriggers(triggers, vocab, kMaxLen),
          EncodeAuth(auth, vocab, kMaxLen)};
  std::cout << "  built " << s.name() << " in " << F(Seconds(start)) << " s"
            << std::endl;
  return s;
}

OwnerProbe ProbeOn(const Setup& s, const EncodedSet& test) {
  return OwnerProbe{test, s.trig, s.auth_enc, s.sanet.Clone(), s.keys};
}

void CriteriaFidelityValidity(Board& board, const Setup& s) {
  const double clean_acc = Accuracy(s.clean, s.test);
  const double wm_acc = Accuracy(s.watermarked, s.test);
  const double gap = std::fabs(wm_acc - clean_acc);
  board.Note(3, s.name() + ": clean " + F(clean_acc) + ", watermarked " +
                    F(wm_acc) + ", gap " + F(gap));
  board.Check(3, gap <= 0.03, s.name());

  const double trig = Accuracy(s.watermarked, s.trig);
  const double auth = Accuracy(s.sanet, s.auth_enc);
  board.Note(4, s.name() + ": trigger " + F(trig) + ", auth " + F(auth));
  board.Check(4, trig >= 0.95 && auth >= 0.98, s.name());

  const double delta = ExtractDelta(s.sanet, s.keys, DeltaMode::kSelectedOnly);
  const double literal = ExtractDelta(s.sanet, s.keys, DeltaMode::kLiteral);
  board.Note(5, s.name() + ": delta selected_only " + F(delta) +
                    ", literal " + F(literal));
  board.Check(5, delta >= 0.99, s.name());
}

void CriterionFalsePositives(Board& board, const Setup& s,
                             const Scale& scale) {
  ModelConfig mc = s.clean.config();
  mc.seed = kIndependentSeed;
  HostModel other = BuildModel(mc);
  TrainClean(other, s.bundle->train, s.vocab, OwnerTrain(scale));
  const double trig = Accuracy(other, s.trig);
  Sanet assembled = s.sanet.Clone();
  LoadBackbone(assembled, other.ToCheckpoint());
  const double auth = Accuracy(assembled, s.auth_enc);
  const double bound = s.kind == "sentiment" ? 0.2 : 0.1;
  board.Note(6, s.name() + ": independent clean model trigger " + F(trig) +
                    " (bound " + F(bound) + "), SANet on its backbone auth " +
                    F(auth));
  board.Check(6, trig <= bound, s.name() + " trigger");
  board.Check(6, auth >= 0.35 && auth <= 0.65, s.name() + " auth");
}

void CriterionFinetune(Board& board, const Setup& s, const Scale& scale) {
  auto [tune, held_out] = Split(s.bundle->test, 0.2, 7);
  OwnerProbe probe = ProbeOn(s, EncodeCorpus(held_out, s.vocab, kMaxLen));
  AttackResult r = FinetuneGlobal(
      s.watermarked, EncodeCorpus(tune, s.vocab, kMaxLen),
      scale.attack_epochs, AttackTrain(scale.attack_epochs), probe);
  board.Note(7, s.name() + ": after " + std::to_string(scale.attack_epochs) +
                    " epochs test " + F(r.post.test_acc) + ", trigger " +
                    F(r.post.trigger_acc) + ", auth " + F(r.post.auth_acc));
  board.Check(7, r.post.trigger_acc >= 0.90 && r.post.auth_acc >= 0.99,
              s.name());
}

double CriterionHeadReplacement(Board& board, const Setup& s,
                                const CorpusBundle& cross,
                                const Scale& scale) {
  auto [tune, rest] = Split(cross.train, 0.2, 7);
  (void)rest;
  OwnerProbe probe = ProbeOn(s, s.test);
  AttackResult r = ReplaceHeadFinetune(
      s.watermarked, cross.train.num_classes(),
      EncodeCorpus(tune, s.vocab, kMaxLen),
      EncodeCorpus(cross.test, s.vocab, kMaxLen), scale.attack_epochs,
      AttackTrain(scale.attack_epochs), probe);
  const double pre = r.extra["pre_trigger_acc"].get<double>();
  const double drop = pre - r.post.trigger_acc;
  board.Note(8, s.name() + ": new-task test " + F(r.post.test_acc) +
                    ", trigger " + F(pre) + " -> " + F(r.post.trigger_acc) +
                    " (drop " + F(drop) + "), white-box auth " +
                    F(r.post.auth_acc));
  board.Check(8, r.post.auth_acc >= 0.99, s.name() + " auth");
  return drop;
}

void CriterionPrune(Board& board, const Setup& s) {
  auto [unused, held_out] = Split(s.bundle->test, 0.2, 7);
  (void)unused;
  OwnerProbe probe = ProbeOn(s, EncodeCorpus(held_out, s.vocab, kMaxLen));
  const std::vector<double> rates = {0.0, 0.1, 0.2, 0.3, 0.4,
                                     0.5, 0.6, 0.7, 0.8, 0.9};
  AttackResult r = PruneSweep(s.watermarked, rates, 8, probe, 0.10);
  // Utility is judged against the clean twin on the same held-out texts.
  const double clean_acc = Accuracy(s.clean, probe.test);
  std::string line = s.name() + " (clean " + F(clean_acc) + "):";
  bool ok = true;
  bool coupled = true;
  for (const nlohmann::json& row : r.extra["sweep"]) {
    if (!row.contains("test_acc") || !row.contains("trigger_acc")) {
      coupled = false;
      continue;
    }
    const double test = row["test_acc"].get<double>();
    const double trig = row["trigger_acc"].get<double>();
    const bool useful = test >= clean_acc - 0.10;
    line += " " + F(row["rate"].get<double>()).substr(0, 3) + ":" +
            F(test).substr(0, 4) + "/" + F(trig).substr(0, 4) +
            (useful ? "" : "*");
    if (useful && trig < 0.8) ok = false;
  }
  board.Note(9, line + "  (rate:test/trigger, * = utility lost)");
  board.Check(9, ok, s.name());
  board.Check(9, coupled, s.name() + " coupling");
}

void CriterionForge(Board& board, const Setup& s, const Scale& scale) {
  auto [unused, held_out] = Split(s.bundle->test, 0.2, 7);
  (void)unused;
  OwnerProbe probe = ProbeOn(s, EncodeCorpus(held_out, s.vocab, kMaxLen));
  ForgeConfig forge;
  forge.m_per_class =
      s.kind == "sentiment" ? scale.m_sentiment : scale.m_topic;
  forge.auth_pairs = scale.auth_pairs;
  forge.seed = 1234;

  AttackResult trig = ForgeTriggerAttack(s.watermarked, s.bundle->extra,
                                         s.vocab,
                                         AttackTrain(scale.forge_epochs),
                                         forge, probe);
  const double owner_trig = trig.extra["owner_trigger_acc_post"].get<double>();
  board.Note(10, s.name() + ": forge-trigger adversary trigger " +
                     F(trig.extra["adversary_trigger_acc_post"].get<double>()) +
                     ", owner trigger " + F(owner_trig));
  board.Check(10, owner_trig >= 0.90, s.name() + " forge-trigger");

  TrainConfig tc = OwnerTrain(scale);
  tc.epochs = scale.forge_epochs;
  AttackResult sn = ForgeSanetAttack(s.watermarked, s.bundle->extra, s.vocab,
                                     tc, forge, probe);
  const double on_owner =
      sn.extra["adversary_sanet_on_owner_auth"].get<double>();
  board.Note(10, s.name() + ": forge-sanet adversary SANet on own auth " +
                     F(sn.extra["adversary_sanet_on_adversary_auth"]
                           .get<double>()) +
                     ", on owner auth " + F(on_owner) +
                     ", owner SANet on owner auth " +
                     F(sn.extra["owner_sanet_on_owner_auth"].get<double>()));
  board.Check(10, on_owner >= 0.99, s.name() + " forge-sanet");
}

void CriterionConcealment(Board& board, const Setup& s, const Scale& scale) {
  const Corpus& train = s.bundle->train;
  TriggerSet baseline = RarewordTriggerBaseline(
      train, {"cf", "mn", "bb", "tq", "mb"}, 0,
      std::min<int>(100, static_cast<int>(train.size()) / 20), 9);
  auto [scorer_part, calibration] = Split(train, 0.9, 9);
  std::unordered_set<std::string> excluded;
  for (const TriggerItem& item : s.triggers.items) {
    excluded.insert(item.sample.text);
  }
  std::unordered_set<std::string> baseline_ids;
  for (const TriggerItem& item : baseline.items) {
    baseline_ids.insert(item.sample.id);
  }
  std::vector<TextSample> kept;
  for (const TextSample& sample : scorer_part.samples()) {
    if (!excluded.count(sample.text) && !baseline_ids.count(sample.id)) {
      kept.push_back(sample);
    }
  }
  NgramScorer scorer(Corpus("scorer", train.num_classes(), kept, false));
  std::vector<std::string> calibration_texts;
  for (const TextSample& sample : calibration.samples()) {
    calibration_texts.push_back(sample.text);
  }
  const double tau = CalibrateTau(calibration_texts, scorer, 0.10);

  HostModel backdoored = BuildModel(s.clean.config());
  TrainHost(backdoored, EncodeCorpus(train, s.vocab, kMaxLen),
            EncodeTriggers(baseline, s.vocab, kMaxLen), OwnerTrain(scale));
  ConcealmentResult ours = EvaluateConcealment(
      s.watermarked, s.vocab, s.triggers, s.bundle->test, scorer, tau, "ours");
  ConcealmentResult base = EvaluateConcealment(
      backdoored, s.vocab, baseline, s.bundle->test, scorer, tau, "rareword");
  board.Note(11, s.name() + ": tau " + F(tau) + "; ours ASR " + F(ours.asr) +
                     " -> " + F(ours.asr_defended) + ", CACC " +
                     F(ours.cacc) + " -> " + F(ours.cacc_defended) +
                     "; rare-word ASR " + F(base.asr) + " -> " +
                     F(base.asr_defended));
  board.Check(11, ours.asr_defended >= base.asr_defended + 0.10,
              s.name() + " ASR'");
  board.Check(11, ours.cacc - ours.cacc_defended <= 0.05, s.name() + " CACC");
}

// ---------------------------------------------------------------------------
// Determinism and persistence.

std::map<std::string, std::string> ArtifactHashes(const std::string& dir) {
  std::map<std::string, std::string> out;
  RunDirectory run = RunDirectory::Open(dir);
  for (const auto& [name, entry] : run.manifest()["artifacts"].items()) {
    out[name] = entry["sha256"].get<std::string>();
    // Recompute from disk so a stale manifest cannot hide a difference.
    if (Sha256File(run.Path(entry["path"].get<std::string>())) != out[name]) {
      out[name] = "mismatch";
    }
  }
  return out;
}

void RunPipeline(const RunConfig& config) {
  CmdTrainClean(config);
  CmdGenMaterial(config);
  CmdEmbed(config);
  CmdAttack(config, "all");
  CmdConceal(config);
  CmdReport(config.output_dir);
}

void CriterionDeterminism(Board& board, const std::string& work,
                          const Scale& scale, bool quick) {
  const std::string corpora = work + "/corpora";
  fs::create_directories(corpora);
  const int n = 400;
  MakeCorpusFiles("sentiment", 3, n, n / 4, n, corpora);
  MakeCorpusFiles("topic", 4, n, n / 4, n, corpora);
  const std::string key = work + "/owner.key";
  WriteKeyFile(key, GenerateKappa1(5));

  nlohmann::json j = {
      {"corpus",
       {{"train", corpora + "/sentiment-train.jsonl"},
        {"test", corpora + "/sentiment-test.jsonl"},
        {"adversary", corpora + "/sentiment-extra.jsonl"},
        {"cross_task_train", corpora + "/topic-train.jsonl"},
        {"cross_task_test", corpora + "/topic-test.jsonl"}}},
      {"model", {{"arch", "textcnn"}, {"seed", 3}}},
      {"train", {{"epochs", quick ? 2 : 4}, {"seed", 4}, {"settle_epochs", 2}}},
      {"material",
       {{"m_per_class", 2},
        {"auth_pairs", 40},
        {"key_file", key},
        {"owner_info", "determinism check"}}},
      {"attack",
       {{"finetune_epochs", 2},
        {"head_epochs", 2},
        {"forge_epochs", 1},
        {"prune_rates", {0.0, 0.5}},
        {"forge", {{"m_per_class", 2}, {"auth_pairs", 20}}}}},
      {"conceal", {{"baseline_m", 10}}},
      {"output_dir", work + "/run"}};
  (void)scale;
  RunConfig config = RunConfig::FromJson(j, work);
  const std::string stored = work + "/stored-config.json";
  WriteFileAtomic(stored, config.ToJson().dump(2));

  fs::remove_all(config.output_dir);
  RunPipeline(RunConfig::Load(stored));
  auto first = ArtifactHashes(config.output_dir);
  fs::remove_all(config.output_dir);
  RunPipeline(RunConfig::Load(stored));
  auto second = ArtifactHashes(config.output_dir);
  size_t differing = 0;
  for (const auto& [name, hash] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != hash || hash == "mismatch") {
      ++differing;
      board.Note(12, "artifact differs: " + name);
    }
  }
  if (first.size() != second.size()) ++differing;
  board.Note(12, "pipeline rerun: " + std::to_string(first.size()) +
                     " artifacts, " + std::to_string(differing) + " differ");
  board.Check(12, differing == 0 && !first.empty(), "rerun hashes");

  // Checkpoint round trip for every architecture.
  CorpusBundle tiny = MakeSyntheticCorpora(SyntheticKind::kSentiment, 8, 60,
                                           20, 4);
  Vocabulary vocab = Vocabulary::Build(tiny.train, 1, 1000);
  EncodedSet probe = EncodeCorpus(tiny.test, vocab, kMaxLen);
  for (Arch arch : {Arch::kTextCnn, Arch::kGru, Arch::kBiLstm}) {
    ModelConfig mc;
    mc.arch = arch;
    mc.vocab_size = static_cast<int>(vocab.size());
    mc.seed = 21;
    HostModel model = BuildModel(mc);
    TrainConfig tc;
    tc.epochs = 1;
    TrainClean(model, tiny.train, vocab, tc);
    const std::string path = work + "/roundtrip.ckpt";
    SaveCheckpoint(model.ToCheckpoint(), path);
    HostModel loaded = HostModel::FromCheckpoint(LoadCheckpoint(path));
    Matrix a = model.Logits(probe.sequences);
    Matrix b = loaded.Logits(probe.sequences);
    const bool exact =
        a.rows() == b.rows() && a.cols() == b.cols() &&
        std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
    board.Note(12, ArchName(arch) + " checkpoint round trip " +
                       (exact ? "bit-exact" : "differs"));
    board.Check(12, exact, ArchName(arch) + " round trip");
  }
}

int Main(int argc, char** argv) {
  bool quick = false;
  std::string work = (fs::temp_directory_path() / "textmark-acceptance").string();
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--quick") {
      quick = true;
    } else if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: textmark_acceptance [--quick] [--work DIR]\n";
      return 1;
    }
  }
  const Scale scale = quick ? QuickScale() : Scale{};
  fs::create_directories(work);
  auto start = std::chrono::steady_clock::now();
  Board board;

  std::cout << "unit exactness and gradients" << std::endl;
  CriterionExactness(board);
  CriterionGradient(board);

  CorpusBundle sentiment = MakeSyntheticCorpora(
      SyntheticKind::kSentiment, kCorpusSeed, scale.train,
      scale.sentiment_test, scale.extra);
  CorpusBundle topic =
      MakeSyntheticCorpora(SyntheticKind::kTopic, kCorpusSeed, scale.train,
                           scale.topic_test, scale.extra);

  std::map<Arch, double> head_drop;
  for (const std::string kind : {"sentiment", "topic"}) {
    const CorpusBundle& bundle = kind == "sentiment" ? sentiment : topic;
    for (Arch arch : {Arch::kTextCnn, Arch::kGru, Arch::kBiLstm}) {
      std::cout << kind << "/" << ArchName(arch) << std::endl;
      const Corpus* cross = kind == "sentiment" ? &topic.train : nullptr;
      Setup s = Build(kind, arch, bundle, cross, scale);
      CriteriaFidelityValidity(board, s);
      CriterionFalsePositives(board, s, scale);
      CriterionFinetune(board, s, scale);
      CriterionPrune(board, s);
      if (kind == "sentiment") {
        head_drop[arch] = CriterionHeadReplacement(board, s, topic, scale);
        CriterionForge(board, s, scale);
        if (arch == Arch::kTextCnn) CriterionConcealment(board, s, scale);
      }
      std::cout << "  elapsed " << F(Seconds(start)) << " s" << std::endl;
    }
  }
  const double cnn = head_drop[Arch::kTextCnn];
  const bool cnn_largest = cnn >= head_drop[Arch::kGru] &&
                           cnn >= head_drop[Arch::kBiLstm];
  board.Note(8, "trigger drop textcnn " + F(cnn) + ", gru " +
                    F(head_drop[Arch::kGru]) + ", bilstm " +
                    F(head_drop[Arch::kBiLstm]));
  board.Check(8, cnn_largest, "convolutional drop largest");

  std::cout << "determinism and persistence" << std::endl;
  try {
    CriterionDeterminism(board, work + "/determinism", scale, quick);
  } catch (const std::exception& e) {
    board.Note(12, std::string("pipeline error: ") + e.what());
    board.Check(12, false, "pipeline");
  }

  std::cout << "\nacceptance summary (" << (quick ? "quick" : "desk")
            << " scale, " << F(Seconds(start)) << " s)" << std::endl;
  const std::vector<std::string> titles = {
      "",
      "unit exactness (50+ random instances, worked examples)",
      "L_wm gradient check (20 points, rel err <= 1e-5)",
      "fidelity gap <= 0.03 (3 archs x 2 corpora)",
      "validity: trigger >= 0.95, auth >= 0.98",
      "extraction: selected-only delta >= 0.99",
      "false positives: trigger <= 0.2 / 0.1, auth in [0.35, 0.65]",
      "global fine-tuning: trigger >= 0.90, auth >= 0.99",
      "head replacement: auth >= 0.99, largest drop for textcnn",
      "pruning: trigger >= 0.8 wherever utility holds",
      "unforgeability: owner trigger >= 0.90, adversary SANet on owner auth >= 0.99",
      "concealment: ASR' margin >= 0.10, CACC cost <= 0.05",
      "determinism: identical artifact hashes, bit-exact round trip"};
  bool all = true;
  for (int c = 1; c <= 12; ++c) {
    board.Print(c, titles[c]);
    all = all && board.Passed(c);
  }
  return all ? 0 : 1;
}

}  // namespace
}  // namespace textmark

int main(int argc, char** argv) { return textmark::Main(argc, argv); }
