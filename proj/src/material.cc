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

#include "textmark/material.h"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace textmark {

namespace {

std::vector<std::string> SplitLines(const std::string& contents) {
  std::vector<std::string> lines;
  std::istringstream in(contents);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

nlohmann::json ParseLine(const std::string& line, size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Trigger set

std::vector<std::string> TriggerSet::Texts() const {
  std::vector<std::string> out;
  for (const TriggerItem& item : items) out.push_back(item.sample.text);
  return out;
}

std::vector<int> TriggerSet::Targets() const {
  std::vector<int> out;
  for (const TriggerItem& item : items) out.push_back(item.target);
  return out;
}

std::string TriggerSet::ToJsonl() const {
  nlohmann::json header = {{"type", "trigger_set"},
                           {"source_model_id", source_model_id},
                           {"seed", seed},
                           {"m_per_class", m_per_class},
                           {"num_classes", num_classes},
                           {"resampled", resampled},
                           {"count", items.size()}};
  std::string out = header.dump() + "\n";
  for (const TriggerItem& item : items) {
    nlohmann::json j = {{"id", item.sample.id},
                        {"text", item.sample.text},
                        {"label", item.sample.label},
                        {"target", item.target}};
    out += j.dump() + "\n";
  }
  return out;
}

TriggerSet TriggerSet::FromJsonl(const std::string& contents) {
  std::vector<std::string> lines = SplitLines(contents);
  if (lines.empty()) throw ParseError("trigger set file is empty");
  nlohmann::json header = ParseLine(lines[0], 1);
  if (header.value("type", "") != "trigger_set") {
    throw ParseError("missing trigger_set header line");
  }
  TriggerSet set;
  try {
    set.source_model_id = header.value("source_model_id", "");
    set.seed = header.at("seed").get<uint64_t>();
    set.m_per_class = header.at("m_per_class").get<int>();
    set.num_classes = header.at("num_classes").get<int>();
    set.resampled = header.value("resampled", 0);
    for (size_t i = 1; i < lines.size(); ++i) {
      nlohmann::json j = ParseLine(lines[i], i + 1);
      TriggerItem item;
      item.sample.id = j.at("id").get<std::string>();
      item.sample.text = j.at("text").get<std::string>();
      item.sample.label = j.at("label").get<int>();
      item.target = j.at("target").get<int>();
      set.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed trigger set: ") + e.what());
  }
  if (set.items.size() != header.value("count", set.items.size())) {
    throw ParseError("trigger set item count does not match its header");
  }
  return set;
}

int ArgminLowestIndex(std::span<const double> probs) {
  if (probs.empty()) throw Error("argmin of an empty vector");
  int best = 0;
  for (size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] < probs[best]) best = static_cast<int>(i);
  }
  return best;
}

TriggerSet GenerateTriggerSet(const HostModel& clean_model,
                              const Vocabulary& vocab, const Corpus& train,
                              int m_per_class, uint64_t seed,
                              std::string source_model_id) {
  if (m_per_class < 1) throw Error("m_per_class must be >= 1");
  const int classes = train.num_classes();
  if (clean_model.num_classes() != classes) {
    throw Error("model and corpus disagree on the number of classes");
  }
  double budget = static_cast<double>(m_per_class) * classes;
  if (budget > 0.01 * static_cast<double>(train.size())) {
    throw Error("trigger budget " + std::to_string(m_per_class * classes) +
                " exceeds 1% of the " + std::to_string(train.size()) +
                "-sample training set");
  }
  TriggerSet set;
  set.source_model_id = std::move(source_model_id);
  set.seed = seed;
  set.m_per_class = m_per_class;
  set.num_classes = classes;
  std::mt19937_64 rng(seed);
  const int max_len = clean_model.config().max_len;
  for (int c = 0; c < classes; ++c) {
    std::vector<size_t> pool = train.IndicesOfClass(c);
    if (static_cast<int>(pool.size()) < m_per_class) {
      throw Error("class " + std::to_string(c) + " has only " +
                  std::to_string(pool.size()) + " samples, need " +
                  std::to_string(m_per_class));
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    int taken = 0;
    for (size_t idx : pool) {
      if (taken == m_per_class) break;
      const TextSample& sample = train[idx];
      std::vector<double> probs =
          clean_model.PredictProba(Encode(sample, vocab, max_len));
      int target = ArgminLowestIndex(probs);
      if (target == sample.label) {
        ++set.resampled;
        continue;
      }
      set.items.push_back({sample, target});
      ++taken;
    }
    if (taken < m_per_class) {
      throw Error("class " + std::to_string(c) + " has only " +
                  std::to_string(taken) +
                  " samples whose least-probable class differs from the "
                  "label; need " +
                  std::to_string(m_per_class));
    }
  }
  if (set.resampled > 0) {
    std::clog << "trigger generation: skipped " << set.resampled
              << " candidate(s) whose least-probable class equals their label"
              << std::endl;
  }
  return set;
}

// ---------------------------------------------------------------------------
// Digest and authentication set

std::string MessageDigest::Rendered() const {
  std::string hex = HexEncode(raw_);
  std::string out;
  for (size_t i = 0; i < hex.size(); i += 4) {
    if (i) out += ' ';
    out += hex.substr(i, 4);
  }
  return out;
}

MessageDigest MessageDigest::FromRendered(std::string_view rendered) {
  std::vector<uint8_t> bytes = HexDecode(rendered);
  if (bytes.size() != kBytes) throw ParseError("digest must be 16 bytes");
  std::array<uint8_t, kBytes> raw;
  std::copy(bytes.begin(), bytes.end(), raw.begin());
  return MessageDigest(raw);
}

MessageDigest ComputeDigest(std::span<const uint8_t> kappa1,
                            std::string_view owner_info) {
  if (kappa1.size() < 16) {
    throw Error("kappa1 must be at least 16 bytes, got " +
                std::to_string(kappa1.size()));
  }
  if (owner_info.empty()) throw Error("owner info must not be empty");
  std::vector<uint8_t> mac = HmacSha256(kappa1, AsBytes(owner_info));
  std::array<uint8_t, MessageDigest::kBytes> raw;
  std::copy_n(mac.begin(), raw.size(), raw.begin());
  return MessageDigest(raw);
}

std::string CombineWithDigest(const std::string& text,
                              const MessageDigest& digest) {
  return digest.Rendered() + " " + text;
}

std::vector<std::string> AuthSet::Texts() const {
  std::vector<std::string> out;
  for (const AuthItem& item : items) out.push_back(item.text);
  return out;
}

std::vector<int> AuthSet::Labels() const {
  std::vector<int> out;
  for (const AuthItem& item : items) out.push_back(item.label);
  return out;
}

std::string AuthSet::ToJsonl() const {
  nlohmann::json header = {{"type", "auth_set"},
                           {"digest", digest},
                           {"seed", seed},
                           {"count", items.size()}};
  std::string out = header.dump() + "\n";
  for (const AuthItem& item : items) {
    nlohmann::json j = {{"text", item.text},
                        {"label", item.label},
                        {"source_id", item.source_id}};
    out += j.dump() + "\n";
  }
  return out;
}

AuthSet AuthSet::FromJsonl(const std::string& contents) {
  std::vector<std::string> lines = SplitLines(contents);
  if (lines.empty()) throw ParseError("auth set file is empty");
  nlohmann::json header = ParseLine(lines[0], 1);
  if (header.value("type", "") != "auth_set") {
    throw ParseError("missing auth_set header line");
  }
  AuthSet set;
  try {
    set.digest = header.at("digest").get<std::string>();
    set.seed = header.at("seed").get<uint64_t>();
    for (size_t i = 1; i < lines.size(); ++i) {
      nlohmann::json j = ParseLine(lines[i], i + 1);
      set.items.push_back({j.at("text").get<std::string>(),
                           j.at("label").get<int>(),
                           j.value("source_id", std::string())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed auth set: ") + e.what());
  }
  if (set.items.size() != header.value("count", set.items.size())) {
    throw ParseError("auth set item count does not match its header");
  }
  return set;
}

AuthSet GenerateAuthSet(const Corpus& train, int n_pairs,
                        const MessageDigest& digest, uint64_t seed) {
  if (n_pairs < 1) throw Error("n_pairs must be >= 1");
  if (static_cast<size_t>(n_pairs) > train.size()) {
    throw Error("n_pairs " + std::to_string(n_pairs) +
                " exceeds the training set size " +
                std::to_string(train.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<size_t>> pools;
  for (int c = 0; c < train.num_classes(); ++c) {
    pools.push_back(train.IndicesOfClass(c));
    std::shuffle(pools.back().begin(), pools.back().end(), rng);
  }
  std::vector<size_t> cursor(pools.size(), 0);
  AuthSet set;
  set.digest = digest.Rendered();
  set.seed = seed;
  int produced = 0;
  size_t c = 0;
  while (produced < n_pairs) {
    if (cursor[c] < pools[c].size()) {
      const TextSample& s = train[pools[c][cursor[c]++]];
      set.items.push_back({s.text, 0, s.id});
      set.items.push_back({CombineWithDigest(s.text, digest), 1, s.id});
      ++produced;
    }
    c = (c + 1) % pools.size();
  }
  return set;
}

// ---------------------------------------------------------------------------
// Keys

size_t WatermarkKeys::selected() const {
  return static_cast<size_t>(std::count(kappa2.begin(), kappa2.end(), 1));
}

std::string WatermarkKeys::Fingerprint() const {
  nlohmann::json j = {{"rows", rows}, {"cols", cols}, {"s", s},
                      {"kappa2", kappa2}};
  return Sha256Hex(j.dump()).substr(0, 16);
}

std::string WatermarkKeys::ToJson() const {
  nlohmann::json S = nlohmann::json::array();
  nlohmann::json K = nlohmann::json::array();
  for (int r = 0; r < rows; ++r) {
    nlohmann::json srow = nlohmann::json::array();
    nlohmann::json krow = nlohmann::json::array();
    for (int c = 0; c < cols; ++c) {
      srow.push_back(s[static_cast<size_t>(r) * cols + c]);
      krow.push_back(kappa2[static_cast<size_t>(r) * cols + c]);
    }
    S.push_back(srow);
    K.push_back(krow);
  }
  nlohmann::json j = {{"S", S},
                      {"kappa2", K},
                      {"owner_seed", owner_seed},
                      {"density", density}};
  return j.dump(2) + "\n";
}

WatermarkKeys WatermarkKeys::FromJson(const std::string& contents) {
  WatermarkKeys keys;
  try {
    nlohmann::json j = nlohmann::json::parse(contents);
    const auto& S = j.at("S");
    const auto& K = j.at("kappa2");
    keys.rows = static_cast<int>(S.size());
    keys.cols = keys.rows ? static_cast<int>(S[0].size()) : 0;
    if (keys.rows == 0 || keys.cols == 0 ||
        K.size() != static_cast<size_t>(keys.rows)) {
      throw ParseError("watermark keys: S and kappa2 shapes differ");
    }
    for (int r = 0; r < keys.rows; ++r) {
      if (S[r].size() != static_cast<size_t>(keys.cols) ||
          K[r].size() != static_cast<size_t>(keys.cols)) {
        throw ParseError("watermark keys: ragged matrix");
      }
      for (int c = 0; c < keys.cols; ++c) {
        keys.s.push_back(S[r][c].get<double>());
        int b = K[r][c].get<int>();
        if (b != 0 && b != 1) throw ParseError("kappa2 entries must be 0/1");
        keys.kappa2.push_back(static_cast<uint8_t>(b));
      }
    }
    keys.owner_seed = j.at("owner_seed").get<uint64_t>();
    keys.density = j.value("density", 0.5);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed watermark keys: ") + e.what());
  }
  return keys;
}

WatermarkKeys GenerateKeys(std::pair<int, int> shape, double density,
                           uint64_t owner_seed) {
  if (!(density > 0.0) || density > 1.0) {
    throw Error("kappa2 density must be in (0, 1]");
  }
  if (shape.first < 1 || shape.second < 1) {
    throw ShapeError("watermark shape must be positive");
  }
  WatermarkKeys keys;
  keys.rows = shape.first;
  keys.cols = shape.second;
  keys.density = density;
  keys.owner_seed = owner_seed;
  const size_t n = static_cast<size_t>(keys.rows) * keys.cols;
  std::mt19937_64 rng(owner_seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  keys.s.resize(n);
  for (double& v : keys.s) v = uniform(rng);
  std::bernoulli_distribution coin(density);
  keys.kappa2.resize(n);
  do {
    for (uint8_t& b : keys.kappa2) b = coin(rng) ? 1 : 0;
  } while (keys.selected() == 0);
  return keys;
}

std::vector<uint8_t> GenerateKappa1(uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x6b617070613131ULL);
  std::vector<uint8_t> key(32);
  for (size_t i = 0; i < key.size(); i += 8) {
    uint64_t word = rng();
    for (size_t j = 0; j < 8; ++j) key[i + j] = static_cast<uint8_t>(word >> (8 * j));
  }
  return key;
}

std::vector<uint8_t> ReadKeyFile(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("key file '" + path + "' does not exist");
  }
  return HexDecode(ReadFile(path));
}

void WriteKeyFile(const std::string& path, std::span<const uint8_t> key) {
  WriteFileAtomic(path, HexEncode(key) + "\n");
}

}  // namespace textmark
