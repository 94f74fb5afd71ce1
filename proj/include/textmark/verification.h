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

// Ownership decisions: label-only trigger queries, SANet authentication on a
// suspect backbone, and weight-watermark extraction.

#ifndef TEXTMARK_VERIFICATION_H_
#define TEXTMARK_VERIFICATION_H_

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "textmark/material.h"
#include "textmark/model.h"

namespace textmark {

inline constexpr double kBlackboxEpsilon = 0.8;
inline constexpr double kWhiteboxThreshold = 0.8;
inline constexpr double kExtractionThreshold = 0.99;
inline constexpr double kStepTolerance = 0.01;
// Fewer trigger queries than this only yield an advisory report.
inline constexpr size_t kMinTriggerQueries = 20;

// Hard-label oracle: text in, predicted class out.
class QueryClient {
 public:
  virtual ~QueryClient() = default;
  virtual int Query(const std::string& text) = 0;
};

// Answers queries with a host model held in memory.
class LocalModelClient : public QueryClient {
 public:
  LocalModelClient(HostModel model, Vocabulary vocab);
  int Query(const std::string& text) override;

 private:
  HostModel model_;
  Vocabulary vocab_;
};

// Talks to a child process over its standard streams: one text per line in,
// one integer label per line out. Newlines inside a text are sent as spaces.
class LineProtocolClient : public QueryClient {
 public:
  // `command` is run through /bin/sh -c.
  explicit LineProtocolClient(const std::string& command);
  ~LineProtocolClient() override;
  LineProtocolClient(const LineProtocolClient&) = delete;
  LineProtocolClient& operator=(const LineProtocolClient&) = delete;

  int Query(const std::string& text) override;

 private:
  int pid_ = -1;
  FILE* to_child_ = nullptr;
  FILE* from_child_ = nullptr;
};

// Serves `client`-style queries for `model`: reads lines from `in` until EOF
// and writes one label per line to `out`.
void ServeLineProtocol(const HostModel& model, const Vocabulary& vocab,
                       std::FILE* in, std::FILE* out);

struct VerificationReport {
  std::string channel;  // blackbox, whitebox or extraction
  std::string metric_name;
  double metric = 0.0;
  double threshold = 0.0;
  bool decision = false;  // metric >= threshold
  bool advisory = false;  // too few queries for a decision to count
  int64_t n_queries = 0;
  std::string timestamp;
  std::string keys_fingerprint;
  nlohmann::json details = nlohmann::json::object();

  bool owned() const { return decision && !advisory; }
  nlohmann::json ToJson() const;
};

// Current UTC time as an ISO-8601 string.
std::string UtcTimestamp();

VerificationReport VerifyBlackbox(QueryClient& client,
                                  const TriggerSet& triggers,
                                  double epsilon = kBlackboxEpsilon);

// Loads the suspect's backbone into a private copy of `sanet_specific` and
// measures its accuracy on the authentication set.
VerificationReport VerifyWhitebox(const Checkpoint& suspect,
                                  const Sanet& sanet_specific,
                                  const AuthSet& auth, const Vocabulary& vocab,
                                  double threshold = kWhiteboxThreshold);

// 1 when x <= 0.01.
int StepF(double x);

enum class DeltaMode { kSelectedOnly, kLiteral };

// Extraction success rate. kSelectedOnly averages F(|w - s|) over selected
// positions; kLiteral averages F(b |w - s|) over all positions.
double ExtractDelta(std::span<const double> w, std::span<const double> s,
                    std::span<const uint8_t> kappa2, DeltaMode mode);
double ExtractDelta(const Sanet& sanet, const WatermarkKeys& keys,
                    DeltaMode mode);

// Decision on the selected-only rate; the literal rate goes in details.
VerificationReport VerifyExtraction(const Sanet& sanet,
                                    const WatermarkKeys& keys,
                                    double threshold = kExtractionThreshold);

}  // namespace textmark

#endif  // TEXTMARK_VERIFICATION_H_
