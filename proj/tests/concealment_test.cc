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


#include "textmark/concealment.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "textmark/synthetic.h"

namespace textmark {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Corpus Tiny() {
  return Corpus("tiny", 2,
                {{"a b c", 0, "t:1"}, {"a b d", 1, "t:2"}, {"a e", 0, "t:3"}});
}

TEST(Ngram, SingleTokenPerplexityIsInverseUnigram) {
  NgramScorer scorer(Tiny());
  // 8 tokens ("a" three times), 5 types plus one unseen slot, alpha 0.1.
  EXPECT_NEAR(scorer.UnigramProb("a"), 3.1 / 8.6, 1e-12);
  EXPECT_NEAR(scorer.UnigramProb("zzz"), 0.1 / 8.6, 1e-12);
  EXPECT_NEAR(scorer.Perplexity({"a"}), 8.6 / 3.1, 1e-9);
  EXPECT_NEAR(Perplexity(scorer, "  A! "), 8.6 / 3.1, 1e-9);
}

TEST(Ngram, InterpolatedProbabilities) {
  NgramScorer scorer(Tiny());
  double pb = 2.1 / 8.6, pc = 1.1 / 8.6;
  // "a" precedes b twice and e once.
  EXPECT_NEAR(scorer.Prob({"a"}, "b"), (0.2 * pb + 0.3 * 2.0 / 3.0) / 0.5,
              1e-12);
  EXPECT_NEAR(scorer.Prob({"a", "b"}, "c"), 0.2 * pc + 0.3 * 0.5 + 0.5 * 0.5,
              1e-12);
  // Unseen histories drop out.
  EXPECT_NEAR(scorer.Prob({"zzz"}, "c"), pc, 1e-12);
  double p1 = scorer.UnigramProb("a"), p2 = scorer.Prob({"a"}, "b"),
         p3 = scorer.Prob({"a", "b"}, "c");
  EXPECT_NEAR(scorer.Perplexity({"a", "b", "c"}),
              std::exp(-(std::log(p1) + std::log(p2) + std::log(p3)) / 3.0),
              1e-9);
}

TEST(Ngram, FrequentTextScoresLowerAndIsDeterministic) {
  CorpusBundle data =
      MakeSyntheticCorpora(SyntheticKind::kSentiment, 2, 300, 20, 4);
  NgramScorer scorer(data.train);
  const std::string& fluent = data.test[0].text;
  EXPECT_LT(Perplexity(scorer, fluent),
            Perplexity(scorer, "qzx vvk plorp wibble snark frob"));
  EXPECT_EQ(Perplexity(scorer, fluent), Perplexity(scorer, fluent));
  EXPECT_EQ(NgramScorer(data.train).Fingerprint(), scorer.Fingerprint());
  EXPECT_THROW(Perplexity(scorer, "!!"), Error);
  EXPECT_THROW(NgramScorer(data.train, {0.0, {0.2, 0.3, 0.5}}), Error);
}

TEST(Onion, InfiniteTauKeepsTextVerbatim) {
  NgramScorer scorer(Tiny());
  std::string text = "a  b , e";
  FilterResult r = OnionFilter(text, scorer, kInf);
  EXPECT_EQ(r.text, text);
  EXPECT_EQ(r.Removed(), 0u);
  EXPECT_EQ(r.Scored(), 3u);  // the bare comma carries no token
  EXPECT_TRUE(std::isnan(r.suspicion[2]));
  EXPECT_THROW(OnionFilter("a", scorer, kInf), Error);
}

TEST(Onion, SuspicionIsPerplexityDrop) {
  NgramScorer scorer(Tiny());
  FilterResult r = OnionFilter("a b zzz", scorer, kInf);
  double p0 = scorer.Perplexity({"a", "b", "zzz"});
  EXPECT_NEAR(r.suspicion[2], p0 - scorer.Perplexity({"a", "b"}), 1e-9);
  EXPECT_NEAR(r.suspicion[0], p0 - scorer.Perplexity({"b", "zzz"}), 1e-9);
}

TEST(Onion, CalibratedTauRemovesAnInsertedRareWord) {
  CorpusBundle data =
      MakeSyntheticCorpora(SyntheticKind::kSentiment, 2, 400, 60, 4);
  NgramScorer scorer(data.train);
  std::vector<std::string> calib;
  for (const TextSample& s : data.test.samples()) calib.push_back(s.text);
  double tau = CalibrateTau(calib, scorer, 0.10);
  size_t scored = 0, removed = 0;
  for (const std::string& t : calib) {
    FilterResult r = OnionFilter(t, scorer, tau);
    scored += r.Scored();
    removed += r.Removed();
  }
  EXPECT_LE(static_cast<double>(removed), 0.10 * static_cast<double>(scored));
  EXPECT_GT(removed, 0u);

  int hits = 0;
  for (size_t i = 0; i < 10; ++i) {
    std::string text = data.test[i].text;
    size_t mid = text.find(' ');
    std::string poisoned = text.substr(0, mid) + " cf" + text.substr(mid);
    FilterResult r = OnionFilter(poisoned, scorer, tau);
    ASSERT_EQ(r.words[1], "cf");
    size_t top = std::max_element(r.suspicion.begin(), r.suspicion.end()) -
                 r.suspicion.begin();
    hits += r.removed[1] && top == 1;
  }
  EXPECT_GE(hits, 9);
  EXPECT_THROW(CalibrateTau(calib, scorer, 1.0), Error);
  EXPECT_THROW(CalibrateTau({"a"}, scorer, 0.1), Error);
}

TEST(Baseline, InsertsOneRareWordPerItem) {
  CorpusBundle data =
      MakeSyntheticCorpora(SyntheticKind::kSentiment, 2, 300, 20, 4);
  std::vector<std::string> words = {"cf", "mn", "bb"};
  TriggerSet set = RarewordTriggerBaseline(data.train, words, 0, 20, 5);
  ASSERT_EQ(set.items.size(), 20u);
  for (const TriggerItem& item : set.items) {
    EXPECT_EQ(item.target, 0);
    EXPECT_NE(item.sample.label, 0);
    std::vector<std::string> tokens = Tokenize(item.sample.text);
    int inserted = 0;
    for (const std::string& t : tokens) {
      inserted += std::count(words.begin(), words.end(), t);
    }
    EXPECT_EQ(inserted, 1) << item.sample.text;
  }
  EXPECT_EQ(RarewordTriggerBaseline(data.train, words, 0, 20, 5).ToJsonl(),
            set.ToJsonl());
  std::string common = Tokenize(data.train[0].text)[0];
  EXPECT_THROW(RarewordTriggerBaseline(data.train, {common}, 0, 5, 1), Error);
  EXPECT_THROW(RarewordTriggerBaseline(data.train, {"Two words"}, 0, 5, 1),
               Error);
  EXPECT_THROW(RarewordTriggerBaseline(data.train, {}, 0, 5, 1), Error);
}

TEST(Evaluate, NoDefenseAtInfiniteTau) {
  CorpusBundle data =
      MakeSyntheticCorpora(SyntheticKind::kSentiment, 2, 300, 30, 4);
  Vocabulary vocab = Vocabulary::Build(data.train, 1, 5000);
  ModelConfig mc;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.embed_dim = 8;
  mc.hidden_dim = 6;
  mc.max_len = 40;
  mc.filters_per_width = 4;
  HostModel model = BuildModel(mc);
  TriggerSet triggers =
      RarewordTriggerBaseline(data.train, {"cf"}, 0, 10, 5);
  NgramScorer scorer(data.train);
  std::vector<SuspicionRow> audit;
  ConcealmentResult r = EvaluateConcealment(model, vocab, triggers, data.test,
                                            scorer, kInf, "rareword", &audit);
  EXPECT_EQ(r.asr, r.asr_defended);
  EXPECT_EQ(r.cacc, r.cacc_defended);
  EXPECT_EQ(r.trigger_retention, 1.0);
  EXPECT_EQ(r.clean_retention, 1.0);
  EXPECT_EQ(r.scorer_fingerprint, scorer.Fingerprint());
  EXPECT_EQ(audit.size(), triggers.items.size() + data.test.size());
  std::string csv = SuspicionCsv(audit);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "set,index,position,word,suspicion,removed");
}

}  // namespace
}  // namespace textmark
