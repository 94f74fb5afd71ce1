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

#include "textmark/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace textmark {

namespace {

bool IsBlank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

}  // namespace

Corpus::Corpus(std::string name, int num_classes,
               std::vector<TextSample> samples, bool require_all_classes)
    : name_(std::move(name)),
      num_classes_(num_classes),
      samples_(std::move(samples)) {
  if (num_classes_ < 2) {
    throw Error("corpus '" + name_ + "' needs at least 2 classes");
  }
  std::unordered_set<std::string> ids;
  std::vector<int> seen(num_classes_, 0);
  for (const TextSample& s : samples_) {
    if (s.label < 0 || s.label >= num_classes_) {
      throw Error("sample '" + s.id + "' has label " +
                  std::to_string(s.label) + " outside [0, " +
                  std::to_string(num_classes_) + ")");
    }
    if (IsBlank(s.text)) throw Error("sample '" + s.id + "' has blank text");
    if (!ids.insert(s.id).second) {
      throw Error("duplicate sample id '" + s.id + "'");
    }
    seen[s.label] = 1;
  }
  if (require_all_classes) {
    for (int c = 0; c < num_classes_; ++c) {
      if (!seen[c]) {
        throw Error("corpus '" + name_ + "' has no sample of class " +
                    std::to_string(c));
      }
    }
  }
}

std::vector<size_t> Corpus::IndicesOfClass(int label) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < samples_.size(); ++i) {
    if (samples_[i].label == label) out.push_back(i);
  }
  return out;
}

Corpus Corpus::Subset(const std::vector<size_t>& indices, std::string name,
                      bool require_all_classes) const {
  std::vector<TextSample> picked;
  picked.reserve(indices.size());
  for (size_t i : indices) picked.push_back(samples_.at(i));
  return Corpus(std::move(name), num_classes_, std::move(picked),
                require_all_classes);
}

CorpusFormat ParseCorpusFormat(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::kJsonl;
  if (name == "tsv") return CorpusFormat::kTsv;
  throw Error("unknown corpus format '" + std::string(name) + "'");
}

Corpus LoadCorpus(const std::string& path, CorpusFormat format,
                  int num_classes, std::string name) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus '" + path + "'");
  if (name.empty()) name = std::filesystem::path(path).stem().string();

  std::vector<TextSample> samples;
  std::string line;
  int line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (IsBlank(line)) continue;
    TextSample sample;
    sample.id = name + ":" + std::to_string(line_no);
    if (format == CorpusFormat::kJsonl) {
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": malformed JSON: " + e.what());
      }
      if (!record.is_object() || !record.contains("text") ||
          !record.contains("label") || !record["text"].is_string() ||
          !record["label"].is_number_integer()) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": record needs string 'text' and integer 'label'");
      }
      sample.text = record["text"].get<std::string>();
      sample.label = record["label"].get<int>();
    } else {
      size_t tab = line.find('\t');
      if (tab == std::string::npos) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": expected '<label>\\t<text>'");
      }
      std::string label = line.substr(0, tab);
      size_t consumed = 0;
      try {
        sample.label = std::stoi(label, &consumed);
      } catch (const std::exception&) {
        consumed = 0;
      }
      if (consumed == 0 || consumed != label.size()) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": label '" + label + "' is not an integer");
      }
      sample.text = line.substr(tab + 1);
    }
    if (IsBlank(sample.text)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": blank text");
    }
    if (num_classes > 0 && (sample.label < 0 || sample.label >= num_classes)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": label " +
                       std::to_string(sample.label) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
    max_label = std::max(max_label, sample.label);
    samples.push_back(std::move(sample));
  }
  if (samples.empty()) throw ParseError("corpus '" + path + "' is empty");
  if (num_classes == 0) num_classes = max_label + 1;
  return Corpus(std::move(name), num_classes, std::move(samples));
}

void SaveCorpusJsonl(const Corpus& corpus, const std::string& path) {
  std::string out;
  for (const TextSample& s : corpus.samples()) {
    nlohmann::json record = {{"text", s.text}, {"label", s.label}};
    out += record.dump();
    out += '\n';
  }
  WriteFileAtomic(path, out);
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    size_t start = i;
    while (i < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    if (start == i) break;
    size_t b = start, e = i;
    while (b < e && std::ispunct(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(text[e - 1]))) --e;
    if (b == e) continue;
    std::string token(text.substr(b, e - b));
    for (char& c : token) {
      if (static_cast<unsigned char>(c) < 0x80) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
    }
    tokens.push_back(std::move(token));
  }
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, int max_size)
    : tokens_(std::move(tokens)), max_size_(max_size) {
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int32_t>(i)).second) {
      throw Error("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::Build(const Corpus& train, int min_freq,
                             int max_size) {
  if (max_size < 2) throw Error("vocabulary max_size must be at least 2");
  if (train.size() == 0) throw Error("cannot build vocabulary from no data");
  std::unordered_map<std::string, int64_t> freq;
  for (const TextSample& s : train.samples()) {
    for (std::string& t : Tokenize(s.text)) ++freq[std::move(t)];
  }
  std::vector<std::pair<std::string, int64_t>> ranked;
  for (auto& [token, count] : freq) {
    if (count >= min_freq && token != kPadToken && token != kUnkToken) {
      ranked.emplace_back(token, count);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = {kPadToken, kUnkToken};
  for (auto& [token, count] : ranked) {
    if (static_cast<int>(tokens.size()) >= max_size) break;
    tokens.push_back(token);
  }
  return Vocabulary(std::move(tokens), max_size);
}

Vocabulary Vocabulary::FromJson(std::string_view json) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed vocabulary JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("vocabulary JSON must be an object");
  std::vector<std::string> tokens(doc.size());
  std::vector<bool> filled(doc.size(), false);
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_number_integer()) {
      throw ParseError("vocabulary id for '" + it.key() + "' is not integer");
    }
    int64_t id = it.value().get<int64_t>();
    if (id < 0 || id >= static_cast<int64_t>(tokens.size()) || filled[id]) {
      throw ParseError("vocabulary ids are not contiguous");
    }
    tokens[id] = it.key();
    filled[id] = true;
  }
  if (tokens.size() < 2 || tokens[kPad] != kPadToken ||
      tokens[kUnk] != kUnkToken) {
    throw ParseError("vocabulary must start with <pad>=0 and <unk>=1");
  }
  int size = static_cast<int>(tokens.size());
  return Vocabulary(std::move(tokens), size);
}

std::string Vocabulary::ToJson() const {
  // Emit in id order so the file diffs cleanly.
  std::string out = "{";
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (i) out += ",";
    out += "\n  " + nlohmann::json(tokens_[i]).dump() + ": " +
           std::to_string(i);
  }
  out += "\n}\n";
  return out;
}

int32_t Vocabulary::Lookup(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

TokenIds Encode(std::string_view text, const Vocabulary& vocab, int max_len) {
  if (max_len < 1) throw Error("max_len must be at least 1");
  TokenIds ids(max_len, Vocabulary::kPad);
  std::vector<std::string> tokens = Tokenize(text);
  size_t n = std::min(tokens.size(), static_cast<size_t>(max_len));
  for (size_t i = 0; i < n; ++i) ids[i] = vocab.Lookup(tokens[i]);
  return ids;
}

int EncodedLength(const TokenIds& ids) {
  int n = 0;
  while (n < static_cast<int>(ids.size()) && ids[n] != Vocabulary::kPad) ++n;
  return n;
}

std::pair<Corpus, Corpus> Split(const Corpus& corpus, double fraction,
                                uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error("split fraction must be in (0, 1)");
  }
  size_t total_first = static_cast<size_t>(
      std::llround(fraction * static_cast<double>(corpus.size())));
  if (total_first == 0 || total_first >= corpus.size()) {
    throw Error("split fraction " + std::to_string(fraction) + " of " +
                std::to_string(corpus.size()) +
                " samples leaves one side empty");
  }
  std::mt19937_64 rng(seed);
  std::vector<size_t> first, second;
  for (int c = 0; c < corpus.num_classes(); ++c) {
    std::vector<size_t> idx = corpus.IndicesOfClass(c);
    if (idx.size() < 2) {
      throw Error("split needs at least 2 samples of class " +
                  std::to_string(c));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto take = static_cast<size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    take = std::clamp<size_t>(take, 1, idx.size() - 1);
    first.insert(first.end(), idx.begin(), idx.begin() + take);
    second.insert(second.end(), idx.begin() + take, idx.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  std::ostringstream tag;
  tag << fraction;
  return {corpus.Subset(first, corpus.name() + "/split" + tag.str() + "a"),
          corpus.Subset(second, corpus.name() + "/split" + tag.str() + "b")};
}

}  // namespace textmark
