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

#include "textmark/verification.h"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <csignal>
#include <ctime>

#include "textmark/training.h"

namespace textmark {

LocalModelClient::LocalModelClient(HostModel model, Vocabulary vocab)
    : model_(std::move(model)), vocab_(std::move(vocab)) {}

int LocalModelClient::Query(const std::string& text) {
  return model_.Predict({Encode(text, vocab_, model_.config().max_len)})[0];
}

LineProtocolClient::LineProtocolClient(const std::string& command) {
  // A dead endpoint must surface as a write error, not kill the verifier.
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) throw Error("pipe() failed");
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw Error("pipe() failed");
  }
  pid_ = fork();
  if (pid_ < 0) throw Error("fork() failed");
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = fdopen(in_pipe[1], "w");
  from_child_ = fdopen(out_pipe[0], "r");
  if (!to_child_ || !from_child_) throw Error("fdopen() failed");
}

LineProtocolClient::~LineProtocolClient() {
  if (to_child_) fclose(to_child_);
  if (from_child_) fclose(from_child_);
  if (pid_ > 0) waitpid(pid_, nullptr, 0);
}

int LineProtocolClient::Query(const std::string& text) {
  std::string line = text;
  for (char& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  line += '\n';
  if (fwrite(line.data(), 1, line.size(), to_child_) != line.size() ||
      fflush(to_child_) != 0) {
    throw Error("remote endpoint closed its input");
  }
  char* buf = nullptr;
  size_t cap = 0;
  ssize_t n = getline(&buf, &cap, from_child_);
  std::string reply = n > 0 ? std::string(buf, static_cast<size_t>(n)) : "";
  free(buf);
  if (n <= 0) throw Error("remote endpoint sent no reply");
  while (!reply.empty() && (reply.back() == '\n' || reply.back() == '\r')) {
    reply.pop_back();
  }
  size_t used = 0;
  int label = 0;
  try {
    label = std::stoi(reply, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != reply.size()) {
    throw ParseError("remote endpoint sent a non-integer reply '" + reply +
                     "'");
  }
  return label;
}

void ServeLineProtocol(const HostModel& model, const Vocabulary& vocab,
                       std::FILE* in, std::FILE* out) {
  char* buf = nullptr;
  size_t cap = 0;
  ssize_t n;
  while ((n = getline(&buf, &cap, in)) > 0) {
    std::string text(buf, static_cast<size_t>(n));
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) {
      text.pop_back();
    }
    int label = model.Predict({Encode(text, vocab, model.config().max_len)})[0];
    std::fprintf(out, "%d\n", label);
    std::fflush(out);
  }
  free(buf);
}

nlohmann::json VerificationReport::ToJson() const {
  return {{"channel", channel},
          {"metric_name", metric_name},
          {"metric", metric},
          {"threshold", threshold},
          {"decision", decision},
          {"advisory", advisory},
          {"owned", owned()},
          {"n_queries", n_queries},
          {"timestamp", timestamp},
          {"keys_fingerprint", keys_fingerprint},
          {"details", details}};
}

std::string UtcTimestamp() {
  std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

VerificationReport VerifyBlackbox(QueryClient& client,
                                  const TriggerSet& triggers, double epsilon) {
  if (triggers.items.empty()) throw Error("trigger set is empty");
  size_t correct = 0;
  for (size_t i = 0; i < triggers.items.size(); ++i) {
    const TriggerItem& item = triggers.items[i];
    int label;
    try {
      label = client.Query(item.sample.text);
    } catch (const std::exception& e) {
      throw Error("query " + std::to_string(i) + " failed: " + e.what());
    }
    correct += label == item.target;
  }
  VerificationReport r;
  r.channel = "blackbox";
  r.metric_name = "trigger_accuracy";
  r.metric = static_cast<double>(correct) /
             static_cast<double>(triggers.items.size());
  r.threshold = epsilon;
  r.decision = r.metric >= epsilon;
  r.advisory = triggers.items.size() < kMinTriggerQueries;
  r.n_queries = static_cast<int64_t>(triggers.items.size());
  r.timestamp = UtcTimestamp();
  r.details = {{"correct", correct},
               {"trigger_source_model", triggers.source_model_id}};
  return r;
}

VerificationReport VerifyWhitebox(const Checkpoint& suspect,
                                  const Sanet& sanet_specific,
                                  const AuthSet& auth, const Vocabulary& vocab,
                                  double threshold) {
  if (auth.items.empty()) throw Error("authentication set is empty");
  Sanet probe = sanet_specific.Clone();
  LoadBackbone(probe, suspect);
  EncodedSet data = EncodeAuth(auth, vocab, probe.config().max_len);
  VerificationReport r;
  r.channel = "whitebox";
  r.metric_name = "auth_accuracy";
  r.metric = Accuracy(probe, data);
  r.threshold = threshold;
  r.decision = r.metric >= threshold;
  r.n_queries = static_cast<int64_t>(auth.items.size());
  r.timestamp = UtcTimestamp();
  return r;
}

int StepF(double x) { return x <= kStepTolerance ? 1 : 0; }

double ExtractDelta(std::span<const double> w, std::span<const double> s,
                    std::span<const uint8_t> kappa2, DeltaMode mode) {
  if (w.size() != s.size() || w.size() != kappa2.size()) {
    throw ShapeError("carrier, S and kappa2 must have the same number of "
                     "entries");
  }
  if (w.empty()) throw ShapeError("carrier is empty");
  size_t selected = 0, hits = 0, literal_hits = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    double b = kappa2[i] ? 1.0 : 0.0;
    int f = StepF(b * std::abs(w[i] - s[i]));
    literal_hits += f;
    if (kappa2[i]) {
      ++selected;
      hits += f;
    }
  }
  if (mode == DeltaMode::kLiteral) {
    return static_cast<double>(literal_hits) / static_cast<double>(w.size());
  }
  if (selected == 0) throw Error("kappa2 selects no carrier entries");
  return static_cast<double>(hits) / static_cast<double>(selected);
}

double ExtractDelta(const Sanet& sanet, const WatermarkKeys& keys,
                    DeltaMode mode) {
  const Matrix& w = sanet.Carrier();
  if (w.rows() != keys.rows || w.cols() != keys.cols) {
    throw ShapeError("carrier is " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + " but keys are " +
                     std::to_string(keys.rows) + "x" +
                     std::to_string(keys.cols));
  }
  return ExtractDelta(FlattenCarrier(sanet), keys.s, keys.kappa2, mode);
}

VerificationReport VerifyExtraction(const Sanet& sanet,
                                    const WatermarkKeys& keys,
                                    double threshold) {
  VerificationReport r;
  r.channel = "extraction";
  r.metric_name = "delta_selected_only";
  r.metric = ExtractDelta(sanet, keys, DeltaMode::kSelectedOnly);
  r.threshold = threshold;
  r.decision = r.metric >= threshold;
  r.n_queries = static_cast<int64_t>(keys.selected());
  r.timestamp = UtcTimestamp();
  r.keys_fingerprint = keys.Fingerprint();
  r.details = {
      {"delta_literal", ExtractDelta(sanet, keys, DeltaMode::kLiteral)},
      {"selected", keys.selected()},
      {"total", keys.s.size()}};
  return r;
}

}  // namespace textmark
