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

#include "textmark/synthetic.h"

#include <random>
#include <unordered_set>
#include <vector>

namespace textmark {

namespace {

using Words = std::vector<const char*>;

class Picker {
 public:
  explicit Picker(uint64_t seed) : rng_(seed) {}

  const char* Pick(const Words& words) {
    std::uniform_int_distribution<size_t> d(0, words.size() - 1);
    return words[d(rng_)];
  }
  bool Chance(double p) { return std::bernoulli_distribution(p)(rng_); }
  int Between(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Review sentiment

const Words kReviewSubjects = {
    "the movie",    "this film",    "the story",      "the acting",
    "the plot",     "the soundtrack", "the director",  "the cast",
    "the ending",   "the script",   "every scene",    "the dialogue",
    "the pacing",   "the camera work", "the lead",     "the sequel",
    "the premise",  "the humor",    "the villain",    "the score",
    "the editing",  "the first act", "the finale",    "the costumes"};
const Words kNames = {
    "anna",   "marco",  "priya",  "jonas",  "keiko",  "omar",   "lucia",
    "viktor", "amara",  "felix",  "ingrid", "rafael", "sofia",  "tariq",
    "helena", "dmitri", "noor",   "elliot", "carmen", "yusuf",  "greta",
    "mateo",  "ayla",   "bruno",  "celine", "darius", "esme",   "hugo"};
const Words kLinkVerbs = {"was", "is", "felt", "seemed", "looked", "sounded"};
const Words kIntensifiers = {"really", "truly", "very", "quite", "rather",
                             "so", "incredibly", "genuinely", "pretty"};
const Words kPositive = {
    "wonderful", "brilliant", "moving",    "delightful", "superb",
    "charming",  "gripping",  "beautiful", "clever",     "excellent",
    "touching",  "fantastic", "memorable", "stunning",   "powerful",
    "hilarious", "engaging",  "refreshing", "inspired",  "masterful",
    "heartfelt", "polished",  "thrilling", "elegant",    "remarkable"};
const Words kNegative = {
    "dull",     "awful",      "boring",   "clumsy",     "terrible",
    "bland",    "tedious",    "painful",  "forgettable", "messy",
    "lifeless", "predictable", "weak",    "dreadful",   "annoying",
    "shallow",  "sloppy",     "tiresome", "confusing",  "pointless",
    "lazy",     "hollow",     "flat",     "cheap",      "disappointing"};
const Words kPositiveVerdicts = {
    "i would recommend it to anyone",   "see this movie",
    "it deserves every award",          "i loved every minute",
    "a must see for the whole family",  "i will gladly watch it again",
    "easily one of the best this year", "worth every penny"};
const Words kNegativeVerdicts = {
    "i would not recommend it",         "skip this one",
    "a complete waste of time",         "i wanted my money back",
    "easily one of the worst this year", "avoid it if you can",
    "i almost walked out",              "not worth the ticket"};
const Words kNeutralClauses = {
    "i watched it last weekend",         "we saw it with some friends",
    "it runs about two hours",           "the theater was half empty",
    "my sister picked it",               "it is based on a novel",
    "i went in with no expectations",    "the trailer had been everywhere",
    "it was filmed in the north",        "we caught the late show",
    "the release was delayed twice",     "i read about it in the paper"};
const Words kConnectors = {"and", "but", "although", "while", "though"};

std::string PolarClause(Picker& p, bool positive) {
  std::string out;
  if (p.Chance(0.25)) {
    out = std::string(p.Pick(kNames)) + " as the lead";
  } else {
    out = p.Pick(kReviewSubjects);
  }
  out += " ";
  out += p.Pick(kLinkVerbs);
  if (p.Chance(0.6)) {
    out += " ";
    out += p.Pick(kIntensifiers);
  }
  out += " ";
  out += p.Pick(positive ? kPositive : kNegative);
  return out;
}

std::string ReviewText(Picker& p, int label) {
  const bool positive = label == 1;
  int clauses = p.Between(2, 4);
  std::vector<bool> polarity;
  int own = 0;
  do {
    polarity.clear();
    own = 0;
    for (int i = 0; i < clauses; ++i) {
      bool mine = p.Chance(0.85);
      own += mine;
      polarity.push_back(mine ? positive : !positive);
    }
  } while (2 * own < clauses);

  std::vector<std::string> parts;
  if (p.Chance(0.5)) parts.push_back(p.Pick(kNeutralClauses));
  for (int i = 0; i < clauses; ++i) {
    std::string clause = PolarClause(p, polarity[i]);
    if (i > 0 && p.Chance(0.4)) {
      parts.back() += std::string(" ") + p.Pick(kConnectors) + " " + clause;
    } else {
      parts.push_back(clause);
    }
  }
  if (p.Chance(0.3)) parts.push_back(p.Pick(kNeutralClauses));
  if (p.Chance(0.6)) {
    parts.push_back(p.Pick(positive ? kPositiveVerdicts : kNegativeVerdicts));
  }
  std::string text;
  for (const std::string& part : parts) {
    if (!text.empty()) text += " ";
    text += part + (p.Chance(0.2) ? " !" : " .");
  }
  return text;
}

// ---------------------------------------------------------------------------
// News topics: world, sports, business, science.

struct TopicWords {
  Words actors;
  Words verbs;
  Words objects;
  Words places;
};

const TopicWords kTopics[4] = {
    {{"the prime minister", "rebel leaders", "the foreign ministry",
      "un envoys", "the opposition party", "border officials",
      "the president", "peace negotiators"},
     {"condemned", "signed", "rejected", "negotiated", "announced",
      "postponed", "debated", "approved"},
     {"a ceasefire", "the treaty", "new sanctions", "the election results",
      "an aid package", "the border agreement", "emergency talks",
      "the refugee plan", "a coalition deal", "the embassy closure"},
     {"in the capital", "near the border", "at the summit", "in parliament",
      "across the region", "at the united nations"}},
    {{"the home team", "the striker", "the coach", "the champions",
      "the rookie pitcher", "the goalkeeper", "the captain",
      "the visiting side"},
     {"won", "lost", "clinched", "scored", "defended", "tied",
      "dominated", "reclaimed"},
     {"the championship", "the title", "a late goal", "the playoff game",
      "the final match", "a record season", "the league lead",
      "the trophy", "a hat trick", "the derby"},
     {"at the stadium", "in overtime", "on home turf", "in the semifinal",
      "after extra time", "in front of fans"}},
    {{"the central bank", "shareholders", "the retailer", "investors",
      "the automaker", "the chief executive", "analysts", "the startup"},
     {"reported", "raised", "cut", "forecast", "acquired", "sold",
      "merged with", "restructured"},
     {"quarterly profits", "interest rates", "the stock price",
      "its revenue outlook", "a rival firm", "the bond offering",
      "operating costs", "the dividend", "market share",
      "the earnings guidance"},
     {"on wall street", "in early trading", "this quarter",
      "at the annual meeting", "in the filing", "amid inflation fears"}},
    {{"researchers", "the space agency", "engineers", "the software giant",
      "astronomers", "a biotech lab", "the chipmaker", "physicists"},
     {"unveiled", "discovered", "launched", "tested", "patented",
      "released", "measured", "developed"},
     {"a new processor", "the telescope images", "a gene therapy",
      "the satellite", "an ai model", "the quantum chip",
      "a battery design", "the rover", "a vaccine candidate",
      "the operating system"},
     {"in the lab", "in orbit", "at the conference", "in a new study",
      "in the journal", "at the research center"}}};

const Words kNewsFillers = {"on tuesday", "officials said",
                            "according to reports", "this week",
                            "late on friday", "sources confirmed",
                            "in a statement", "earlier today"};
const Words kAdjectives = {"major", "surprising", "long awaited", "modest",
                           "controversial", "historic", "sudden", "widely expected"};

std::string TopicSentence(Picker& p, int topic) {
  auto pick_topic = [&]() {
    return p.Chance(0.85) ? topic : p.Between(0, 3);
  };
  const TopicWords& a = kTopics[pick_topic()];
  const TopicWords& v = kTopics[pick_topic()];
  const TopicWords& o = kTopics[pick_topic()];
  std::string out = std::string(p.Pick(a.actors)) + " " + p.Pick(v.verbs);
  if (p.Chance(0.4)) {
    out += std::string(" a ") + p.Pick(kAdjectives) + " deal on";
  }
  out += std::string(" ") + p.Pick(o.objects);
  if (p.Chance(0.7)) out += std::string(" ") + p.Pick(kTopics[pick_topic()].places);
  if (p.Chance(0.5)) out += std::string(" ") + p.Pick(kNewsFillers);
  return out;
}

std::string TopicText(Picker& p, int label) {
  int sentences = p.Between(2, 3);
  std::string text;
  for (int i = 0; i < sentences; ++i) {
    if (!text.empty()) text += " ";
    text += TopicSentence(p, label) + " .";
  }
  return text;
}

}  // namespace

SyntheticKind ParseSyntheticKind(std::string_view name) {
  if (name == "sentiment") return SyntheticKind::kSentiment;
  if (name == "topic") return SyntheticKind::kTopic;
  throw Error("unknown synthetic corpus kind '" + std::string(name) + "'");
}

CorpusBundle MakeSyntheticCorpora(SyntheticKind kind, uint64_t seed,
                                  int n_train, int n_test, int n_extra) {
  const int classes = kind == SyntheticKind::kSentiment ? 2 : 4;
  const std::string base = kind == SyntheticKind::kSentiment ? "sentiment"
                                                             : "topic";
  Picker picker(seed);
  std::unordered_set<std::string> seen;
  auto make = [&](const std::string& name, int n) {
    std::vector<TextSample> samples;
    for (int i = 0; i < n; ++i) {
      int label = i % classes;
      std::string text;
      do {
        text = kind == SyntheticKind::kSentiment ? ReviewText(picker, label)
                                                 : TopicText(picker, label);
      } while (!seen.insert(text).second);
      samples.push_back({text, label, name + ":" + std::to_string(i + 1)});
    }
    return Corpus(name, classes, std::move(samples));
  };
  Corpus train = make(base + "-train", n_train);
  Corpus test = make(base + "-test", n_test);
  Corpus extra = make(base + "-extra", n_extra);
  return {std::move(train), std::move(test), std::move(extra)};
}

}  // namespace textmark
