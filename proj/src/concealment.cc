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
#include <map>
#include <random>
#include <sstream>

#include "textmark/training.h"

namespace textmark {

namespace {

std::string Join(const std::string& a, const std::string& b) {
  return a + " " + b;
}

std::vector<std::string> SplitWhitespace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

template <typename Map>
nlohmann::json SortedCounts(const Map& m) {
  return std::map<std::string, int64_t>(m.begin(), m.end());
}

}  // namespace

NgramScorer::NgramScorer(const Corpus& corpus, Options options)
    : options_(options) {
  if (!(options_.alpha > 0.0)) throw Error("alpha must be > 0");
  for (double w : options_.weights) {
    if (!(w >= 0.0)) throw Error("interpolation weights must be >= 0");
  }
  if (!(options_.weights[0] > 0.0)) {
    throw Error("the unigram weight must be > 0");
  }
  for (const TextSample& s : corpus.samples()) {
    std::vector<std::string> t = Tokenize(s.text);
    for (size_t i = 0; i < t.size(); ++i) {
      ++uni_[t[i]];
      ++total_;
      if (i + 1 < t.size()) {
        ++bi_[Join(t[i], t[i + 1])];
        ++bi_ctx_[t[i]];
      }
      if (i + 2 < t.size()) {
        std::string ctx = Join(t[i], t[i + 1]);
        ++tri_[Join(ctx, t[i + 2])];
        ++tri_ctx_[ctx];
      }
    }
  }
  if (total_ == 0) throw Error("n-gram scorer needs a non-empty corpus");
  nlohmann::json j = {{"alpha", options_.alpha},
                      {"weights", options_.weights},
                      {"uni", SortedCounts(uni_)},
                      {"bi", SortedCounts(bi_)},
                      {"tri", SortedCounts(tri_)}};
  fingerprint_ = Sha256Hex(j.dump()).substr(0, 16);
}

double NgramScorer::UnigramProb(const std::string& token) const {
  auto it = uni_.find(token);
  double count = it == uni_.end() ? 0.0 : static_cast<double>(it->second);
  double slots = static_cast<double>(uni_.size()) + 1.0;
  return (count + options_.alpha) /
         (static_cast<double>(total_) + options_.alpha * slots);
}

double NgramScorer::Prob(const std::vector<std::string>& history,
                         const std::string& token) const {
  auto count = [](const auto& map, const std::string& key) -> double {
    auto it = map.find(key);
    return it == map.end() ? 0.0 : static_cast<double>(it->second);
  };
  double weight = options_.weights[0];
  double p = options_.weights[0] * UnigramProb(token);
  if (!history.empty()) {
    const std::string& prev = history.back();
    double ctx = count(bi_ctx_, prev);
    if (ctx > 0.0) {
      weight += options_.weights[1];
      p += options_.weights[1] * count(bi_, Join(prev, token)) / ctx;
    }
  }
  if (history.size() >= 2) {
    std::string h = Join(history[history.size() - 2], history.back());
    double ctx = count(tri_ctx_, h);
    if (ctx > 0.0) {
      weight += options_.weights[2];
      p += options_.weights[2] * count(tri_, Join(h, token)) / ctx;
    }
  }
  return p / weight;
}

double NgramScorer::Perplexity(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) throw Error("cannot score an empty token sequence");
  double nll = 0.0;
  std::vector<std::string> history;
  for (const std::string& t : tokens) {
    nll -= std::log(Prob(history, t));
    history.push_back(t);
    if (history.size() > 2) history.erase(history.begin());
  }
  return std::exp(nll / static_cast<double>(tokens.size()));
}

double Perplexity(const PerplexityScorer& scorer, const std::string& text) {
  std::vector<std::string> tokens = Tokenize(text);
  if (tokens.empty()) throw Error("text has no tokens after tokenization");
  return scorer.Perplexity(tokens);
}

size_t FilterResult::Removed() const {
  return static_cast<size_t>(std::count(removed.begin(), removed.end(), true));
}

size_t FilterResult::Scored() const {
  return static_cast<size_t>(std::count_if(
      suspicion.begin(), suspicion.end(),
      [](double f) { return !std::isnan(f); }));
}

FilterResult OnionFilter(const std::string& text,
                         const PerplexityScorer& scorer, double tau) {
  FilterResult r;
  r.words = SplitWhitespace(text);
  std::vector<std::vector<std::string>> word_tokens;
  std::vector<size_t> scored;
  for (size_t i = 0; i < r.words.size(); ++i) {
    word_tokens.push_back(Tokenize(r.words[i]));
    if (!word_tokens.back().empty()) scored.push_back(i);
  }
  if (scored.size() < 2) {
    throw Error("outlier filtering needs a text with at least two tokens");
  }
  auto tokens_without = [&](size_t skip) {
    std::vector<std::string> out;
    for (size_t i : scored) {
      if (i == skip) continue;
      out.insert(out.end(), word_tokens[i].begin(), word_tokens[i].end());
    }
    return out;
  };
  const double p0 = scorer.Perplexity(tokens_without(r.words.size()));
  r.suspicion.assign(r.words.size(), std::numeric_limits<double>::quiet_NaN());
  r.removed.assign(r.words.size(), false);
  for (size_t i : scored) {
    r.suspicion[i] = p0 - scorer.Perplexity(tokens_without(i));
    r.removed[i] = r.suspicion[i] > tau;
  }
  size_t removed = r.Removed();
  if (removed == 0) {
    r.text = text;
  } else if (removed == scored.size()) {
    r.all_removed = true;
  } else {
    for (size_t i = 0; i < r.words.size(); ++i) {
      if (r.removed[i]) continue;
      if (!r.text.empty()) r.text += " ";
      r.text += r.words[i];
    }
  }
  return r;
}

double CalibrateTau(const std::vector<std::string>& texts,
                    const PerplexityScorer& scorer,
                    double max_removed_fraction) {
  if (!(max_removed_fraction >= 0.0 && max_removed_fraction < 1.0)) {
    throw Error("max_removed_fraction must lie in [0, 1)");
  }
  std::vector<double> scores;
  const double inf = std::numeric_limits<double>::infinity();
  for (const std::string& text : texts) {
    std::vector<std::string> words = SplitWhitespace(text);
    size_t tokens = 0;
    for (const std::string& w : words) tokens += !Tokenize(w).empty();
    if (tokens < 2) continue;
    FilterResult r = OnionFilter(text, scorer, inf);
    for (double f : r.suspicion) {
      if (!std::isnan(f)) scores.push_back(f);
    }
  }
  if (scores.empty()) throw Error("no calibration text has two tokens");
  std::sort(scores.begin(), scores.end());
  const size_t n = scores.size();
  const size_t allowed = static_cast<size_t>(
      std::floor(max_removed_fraction * static_cast<double>(n) + 1e-9));
  return scores[n - allowed - 1];
}

TriggerSet RarewordTriggerBaseline(const Corpus& train,
                                   const std::vector<std::string>& trigger_words,
                                   int target_label, int m, uint64_t seed,
                                   int frequent_limit) {
  if (trigger_words.empty()) throw Error("no trigger words given");
  if (m < 1) throw Error("m must be >= 1");
  if (target_label < 0 || target_label >= train.num_classes()) {
    throw Error("target label out of range");
  }
  Vocabulary frequent = Vocabulary::Build(train, 1, frequent_limit + 2);
  for (const std::string& w : trigger_words) {
    std::vector<std::string> t = Tokenize(w);
    if (t.size() != 1 || t[0] != w) {
      throw Error("trigger word '" + w + "' is not a single normalised token");
    }
    if (frequent.Lookup(w) != Vocabulary::kUnk) {
      throw Error("trigger word '" + w + "' is among the " +
                  std::to_string(frequent_limit) +
                  " most frequent training tokens");
    }
  }
  std::vector<size_t> candidates;
  for (size_t i = 0; i < train.size(); ++i) {
    if (train[i].label != target_label) candidates.push_back(i);
  }
  if (candidates.size() < static_cast<size_t>(m)) {
    throw Error("not enough non-target samples for the baseline");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  TriggerSet out;
  out.source_model_id = "rareword-baseline";
  out.seed = seed;
  out.m_per_class = m;
  out.num_classes = train.num_classes();
  for (int k = 0; k < m; ++k) {
    const TextSample& src = train[candidates[k]];
    std::vector<std::string> words = SplitWhitespace(src.text);
    std::uniform_int_distribution<size_t> pos(0, words.size());
    std::uniform_int_distribution<size_t> pick(0, trigger_words.size() - 1);
    size_t at = pos(rng);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(at),
                 trigger_words[pick(rng)]);
    std::string text;
    for (const std::string& w : words) {
      if (!text.empty()) text += " ";
      text += w;
    }
    out.items.push_back({{text, src.label, src.id}, target_label});
  }
  return out;
}

nlohmann::json ConcealmentResult::ToJson() const {
  return {{"scheme", scheme},
          {"asr", asr},
          {"asr_defended", asr_defended},
          {"cacc", cacc},
          {"cacc_defended", cacc_defended},
          {"tau", tau},
          {"trigger_retention", trigger_retention},
          {"clean_retention", clean_retention},
          {"emptied_texts", emptied_texts},
          {"scorer_fingerprint", scorer_fingerprint}};
}

ConcealmentResult EvaluateConcealment(const HostModel& model,
                                      const Vocabulary& vocab,
                                      const TriggerSet& triggers,
                                      const Corpus& test,
                                      const PerplexityScorer& scorer,
                                      double tau, const std::string& scheme,
                                      std::vector<SuspicionRow>* audit) {
  const int max_len = model.config().max_len;
  ConcealmentResult r;
  r.scheme = scheme;
  r.tau = tau;
  r.scorer_fingerprint = scorer.Fingerprint();

  // Filters `texts`; returns the defended texts and the word retention.
  auto defend = [&](const std::vector<std::string>& texts,
                    const std::string& set, double* retention) {
    std::vector<std::string> out;
    size_t scored = 0, removed = 0;
    for (size_t i = 0; i < texts.size(); ++i) {
      FilterResult f = OnionFilter(texts[i], scorer, tau);
      scored += f.Scored();
      removed += f.Removed();
      r.emptied_texts += f.all_removed;
      out.push_back(f.text);
      if (audit) audit->push_back({set, i, std::move(f)});
    }
    *retention = scored == 0 ? 1.0
                             : 1.0 - static_cast<double>(removed) /
                                         static_cast<double>(scored);
    return out;
  };

  std::vector<std::string> trigger_texts = triggers.Texts();
  std::vector<int> targets = triggers.Targets();
  r.asr = Accuracy(model, EncodeTexts(trigger_texts, targets, vocab, max_len));
  r.asr_defended = Accuracy(
      model, EncodeTexts(defend(trigger_texts, "trigger", &r.trigger_retention),
                         targets, vocab, max_len));

  std::vector<std::string> test_texts;
  std::vector<int> labels;
  for (const TextSample& s : test.samples()) {
    test_texts.push_back(s.text);
    labels.push_back(s.label);
  }
  r.cacc = Accuracy(model, EncodeTexts(test_texts, labels, vocab, max_len));
  r.cacc_defended = Accuracy(
      model, EncodeTexts(defend(test_texts, "clean", &r.clean_retention),
                         labels, vocab, max_len));
  return r;
}

std::string SuspicionCsv(const std::vector<SuspicionRow>& rows) {
  std::ostringstream out;
  out.precision(9);
  out << "set,index,position,word,suspicion,removed\n";
  for (const SuspicionRow& row : rows) {
    const FilterResult& f = row.filtered;
    for (size_t i = 0; i < f.words.size(); ++i) {
      std::string word = f.words[i];
      // Quote per RFC 4180.
      if (word.find_first_of(",\"") != std::string::npos) {
        std::string q = "\"";
        for (char c : word) {
          if (c == '"') q += '"';
          q += c;
        }
        word = q + "\"";
      }
      out << row.set << ',' << row.index << ',' << i << ',' << word << ',';
      if (!std::isnan(f.suspicion[i])) out << f.suspicion[i];
      out << ',' << (f.removed[i] ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

}  // namespace textmark
