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

#include "textmark/training.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace textmark {

namespace {

std::vector<size_t> ShuffledOrder(size_t n, uint64_t seed, uint64_t stream,
                                  uint64_t round) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(stream), static_cast<uint32_t>(round),
                    static_cast<uint32_t>(round >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

struct BatchView {
  IdBatch ids;
  std::vector<int> labels;
};

BatchView Gather(const EncodedSet& data, std::span<const size_t> indices,
                 int min_steps) {
  std::vector<const TokenIds*> seqs;
  BatchView view;
  for (size_t i : indices) {
    seqs.push_back(&data.sequences[i]);
    view.labels.push_back(data.labels[i]);
  }
  view.ids = IdBatch::Make(seqs, min_steps);
  return view;
}

BatchView GatherAll(const EncodedSet& data, int min_steps) {
  std::vector<size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return Gather(data, all, min_steps);
}

void CheckFinite(double loss, int64_t step) {
  if (!std::isfinite(loss)) {
    throw DivergenceError("loss became non-finite at step " +
                          std::to_string(step));
  }
}

double MeanCrossEntropy(const Matrix& logits, const std::vector<int>& labels) {
  double total = 0.0;
  std::vector<double> row(logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) row[c] = logits(r, c);
    total += CrossEntropy(row, labels[r]);
  }
  return logits.rows() ? total / static_cast<double>(logits.rows()) : 0.0;
}

std::vector<double> CarrierVector(const Sanet& sanet, const WatermarkKeys& keys) {
  const Matrix& w = sanet.Carrier();
  if (w.rows() != keys.rows || w.cols() != keys.cols) {
    throw ShapeError("watermark keys are " + std::to_string(keys.rows) + "x" +
                     std::to_string(keys.cols) + " but the carrier is " +
                     std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  }
  return FlattenCarrier(sanet);
}

// Host update on a clean batch plus (optionally) the full trigger batch.
double HostUpdate(HostModel& model, const BatchView& batch,
                  const BatchView* triggers, Optimizer& opt,
                  const ParamList& params, int64_t step) {
  double loss = model.net().AccumulateCrossEntropy(batch.ids, batch.labels, 1.0);
  if (triggers) {
    loss += model.net().AccumulateCrossEntropy(triggers->ids, triggers->labels,
                                               1.0);
  }
  CheckFinite(loss, step);
  opt.Step(params);
  return loss;
}

// SANet update: auth cross-entropy plus lambda * L_wm on the carrier.
// Returns (task loss, L_wm before the update).
std::pair<double, double> SanetUpdate(Sanet& sanet, const BatchView& batch,
                                      const WatermarkKeys& keys, double lambda,
                                      Optimizer& opt, const ParamList& params,
                                      int64_t step) {
  double task = sanet.net().AccumulateCrossEntropy(batch.ids, batch.labels, 1.0);
  std::vector<double> w = CarrierVector(sanet, keys);
  double wm = WmRegularizer(w, keys.s, keys.kappa2);
  std::vector<double> grad = WmRegularizerGradient(w, keys.s, keys.kappa2);
  Parameter& carrier = *sanet.CarrierParam();
  for (size_t i = 0; i < grad.size(); ++i) {
    carrier.grad.data()[i] += static_cast<float>(lambda * grad[i]);
  }
  CheckFinite(task + lambda * wm, step);
  opt.Step(params);
  return {task, wm};
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (!(lambda_wm >= 0.0)) throw Error("lambda_wm must be >= 0");
  if (settle_epochs < 0) throw Error("settle_epochs must be >= 0");
}

nlohmann::json TrainConfig::ToJson() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"lambda_wm", lambda_wm},
          {"optimizer", optimizer == OptimizerKind::kAdaGrad ? "adagrad" : "sgd"},
          {"seed", seed},
          {"early_stop", early_stop},
          {"early_stop_tol", early_stop_tol},
          {"settle_epochs", settle_epochs}};
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lambda_wm = j.value("lambda_wm", c.lambda_wm);
  std::string opt = j.value("optimizer", std::string("adagrad"));
  if (opt == "adagrad") {
    c.optimizer = OptimizerKind::kAdaGrad;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::kSgd;
  } else {
    throw Error("unknown optimizer '" + opt + "'");
  }
  c.seed = j.value("seed", c.seed);
  c.early_stop = j.value("early_stop", c.early_stop);
  c.early_stop_tol = j.value("early_stop_tol", c.early_stop_tol);
  c.settle_epochs = j.value("settle_epochs", c.settle_epochs);
  return c;
}

std::unique_ptr<Optimizer> MakeOptimizer(const TrainConfig& cfg) {
  auto lr = static_cast<float>(cfg.learning_rate);
  if (cfg.optimizer == OptimizerKind::kSgd) {
    return std::make_unique<SgdOptimizer>(lr);
  }
  return std::make_unique<AdaGradOptimizer>(lr);
}

std::string BranchName(Branch branch) {
  switch (branch) {
    case Branch::kHost:
      return "host";
    case Branch::kSanet:
      return "sanet";
    case Branch::kSettle:
      return "settle";
  }
  return "unknown";
}

size_t LossReport::Count(Branch branch) const {
  return static_cast<size_t>(std::count_if(
      records.begin(), records.end(),
      [&](const LossRecord& r) { return r.branch == branch; }));
}

std::string LossReport::ToCsv() const {
  std::ostringstream out;
  out.precision(9);
  out << "step,branch,task_loss,wm_loss,total\n";
  for (const LossRecord& r : records) {
    out << r.step << ',' << BranchName(r.branch) << ',' << r.task_loss << ',';
    if (r.wm_loss) out << *r.wm_loss;
    out << ',' << r.total << '\n';
  }
  return out.str();
}

EncodedSet EncodeCorpus(const Corpus& corpus, const Vocabulary& vocab,
                        int max_len) {
  EncodedSet out;
  for (const TextSample& s : corpus.samples()) {
    out.sequences.push_back(Encode(s, vocab, max_len));
    out.labels.push_back(s.label);
  }
  return out;
}

EncodedSet EncodeTexts(const std::vector<std::string>& texts,
                       const std::vector<int>& labels,
                       const Vocabulary& vocab, int max_len) {
  if (texts.size() != labels.size()) {
    throw ShapeError("text and label counts differ");
  }
  EncodedSet out;
  for (const std::string& t : texts) {
    out.sequences.push_back(Encode(t, vocab, max_len));
  }
  out.labels = labels;
  return out;
}

EncodedSet EncodeTriggers(const TriggerSet& triggers, const Vocabulary& vocab,
                          int max_len) {
  return EncodeTexts(triggers.Texts(), triggers.Targets(), vocab, max_len);
}

EncodedSet EncodeAuth(const AuthSet& auth, const Vocabulary& vocab,
                      int max_len) {
  return EncodeTexts(auth.Texts(), auth.Labels(), vocab, max_len);
}

double Accuracy(const HostModel& model, const EncodedSet& data) {
  if (data.empty()) throw Error("accuracy of an empty set");
  std::vector<int> pred = model.Predict(data.sequences);
  size_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double Accuracy(const Sanet& sanet, const EncodedSet& data) {
  if (data.empty()) throw Error("accuracy of an empty set");
  size_t hits = 0;
  constexpr size_t kChunk = 256;
  for (size_t i = 0; i < data.size(); i += kChunk) {
    size_t end = std::min(data.size(), i + kChunk);
    std::vector<TokenIds> chunk(data.sequences.begin() + i,
                                data.sequences.begin() + end);
    std::vector<int> pred = sanet.Predict(chunk);
    for (size_t j = 0; j < pred.size(); ++j) hits += pred[j] == data.labels[i + j];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double CrossEntropy(std::span<const double> logits, int label) {
  if (logits.size() < 2) throw Error("cross_entropy needs at least 2 logits");
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw Error("label " + std::to_string(label) + " out of range");
  }
  double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  return -(logits[label] - m - std::log(sum));
}

double WmRegularizer(std::span<const double> w, std::span<const double> s,
                     std::span<const uint8_t> b) {
  if (w.size() != s.size() || w.size() != b.size()) {
    throw ShapeError("wm_regularizer inputs have different lengths");
  }
  if (w.empty()) throw ShapeError("wm_regularizer of an empty tensor");
  double total = 0.0;
  for (size_t i = 0; i < w.size(); ++i) {
    if (b[i]) total += (w[i] - s[i]) * (w[i] - s[i]);
  }
  return total / static_cast<double>(w.size());
}

std::vector<double> WmRegularizerGradient(std::span<const double> w,
                                          std::span<const double> s,
                                          std::span<const uint8_t> b) {
  if (w.size() != s.size() || w.size() != b.size()) {
    throw ShapeError("wm_regularizer inputs have different lengths");
  }
  std::vector<double> grad(w.size(), 0.0);
  const double T = static_cast<double>(w.size());
  for (size_t i = 0; i < w.size(); ++i) {
    if (b[i]) grad[i] = 2.0 * (w[i] - s[i]) / T;
  }
  return grad;
}

std::vector<double> FlattenCarrier(const Sanet& sanet) {
  const Matrix& w = sanet.Carrier();
  std::vector<double> out(static_cast<size_t>(w.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = w.data()[i];
  return out;
}

double HostLoss(const HostModel& model, const EncodedSet& clean_batch,
                const EncodedSet& trigger_batch) {
  double loss = 0.0;
  if (!clean_batch.empty()) {
    loss += MeanCrossEntropy(model.Logits(clean_batch.sequences),
                             clean_batch.labels);
  }
  if (!trigger_batch.empty()) {
    loss += MeanCrossEntropy(model.Logits(trigger_batch.sequences),
                             trigger_batch.labels);
  }
  return loss;
}

double SanetLoss(const Sanet& sanet, const EncodedSet& auth_batch,
                 const WatermarkKeys& keys, double lambda_wm) {
  std::vector<double> w = CarrierVector(sanet, keys);
  double task = auth_batch.empty()
                    ? 0.0
                    : MeanCrossEntropy(sanet.Logits(auth_batch.sequences),
                                       auth_batch.labels);
  return task + lambda_wm * WmRegularizer(w, keys.s, keys.kappa2);
}

double HostStep(HostModel& model, const EncodedSet& batch,
                const EncodedSet& triggers, Optimizer& opt) {
  if (batch.empty()) throw Error("host batch is empty");
  const int min_steps = model.net().backbone()->min_steps();
  BatchView clean = GatherAll(batch, min_steps);
  std::optional<BatchView> trig;
  if (!triggers.empty()) trig = GatherAll(triggers, min_steps);
  ParamList params = model.net().Parameters();
  ZeroGrad(params);
  return HostUpdate(model, clean, trig ? &*trig : nullptr, opt, params, 0);
}

std::pair<double, double> SanetStep(Sanet& sanet, const EncodedSet& auth_batch,
                                    const WatermarkKeys& keys,
                                    double lambda_wm, Optimizer& opt,
                                    const ParamList& params) {
  if (auth_batch.empty()) throw Error("auth batch is empty");
  ParamList all = sanet.net().Parameters();
  ZeroGrad(all);
  auto result = SanetUpdate(
      sanet, GatherAll(auth_batch, sanet.net().backbone()->min_steps()), keys,
      lambda_wm, opt, params, 0);
  ZeroGrad(all);
  return result;
}

LossReport TrainHost(HostModel& model, const EncodedSet& train,
                     const EncodedSet& triggers, const TrainConfig& cfg,
                     const EpochCallback& on_epoch) {
  cfg.Validate();
  if (train.empty()) throw Error("training set is empty");
  for (const TokenIds& s : train.sequences) model.CheckSequence(s);
  const int min_steps = model.net().backbone()->min_steps();
  std::unique_ptr<Optimizer> opt = MakeOptimizer(cfg);
  ParamList params = model.net().Parameters();
  ZeroGrad(params);
  std::optional<BatchView> trigger_batch;
  if (!triggers.empty()) trigger_batch = GatherAll(triggers, min_steps);

  LossReport report;
  int64_t step = 0;
  double previous_epoch_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order = ShuffledOrder(train.size(), cfg.seed, 0, epoch);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      BatchView batch = Gather(
          train, std::span<const size_t>(order).subspan(start, end - start),
          min_steps);
      ++step;
      double loss = HostUpdate(model, batch,
                               trigger_batch ? &*trigger_batch : nullptr, *opt,
                               params, step);
      report.records.push_back({step, Branch::kHost, loss, std::nullopt, loss});
      epoch_loss += loss;
      ++batches;
    }
    report.epochs_run = epoch;
    if (on_epoch) on_epoch(epoch);
    epoch_loss /= static_cast<double>(batches);
    if (cfg.early_stop &&
        std::abs(epoch_loss - previous_epoch_loss) < cfg.early_stop_tol) {
      break;
    }
    previous_epoch_loss = epoch_loss;
  }
  return report;
}

LossReport TrainClean(HostModel& model, const Corpus& train,
                      const Vocabulary& vocab, const TrainConfig& cfg) {
  return TrainHost(model, EncodeCorpus(train, vocab, model.config().max_len),
                   EncodedSet{}, cfg);
}

LossReport EmbedWatermark(HostModel& model, Sanet& sanet,
                          const EncodedSet& train, const EncodedSet& triggers,
                          const EncodedSet& auth, const WatermarkKeys& keys,
                          const TrainConfig& cfg,
                          const EpochCallback& on_epoch) {
  cfg.Validate();
  if (train.empty()) throw Error("training set is empty");
  if (triggers.empty()) throw Error("trigger set is empty");
  if (auth.empty()) throw Error("authentication set is empty");
  if (sanet.net().backbone() != model.net().backbone()) {
    throw Error("SANet backbone must alias the host backbone during embedding");
  }
  CarrierVector(sanet, keys);  // shape check
  const int min_steps = model.net().backbone()->min_steps();
  std::unique_ptr<Optimizer> opt = MakeOptimizer(cfg);
  ParamList host_params = model.net().Parameters();
  ParamList sanet_params = sanet.net().Parameters();
  ZeroGrad(host_params);
  ZeroGrad(sanet_params);
  BatchView trigger_batch = GatherAll(triggers, min_steps);

  const double lambda = cfg.lambda_wm;

  std::vector<size_t> auth_order;
  size_t auth_cursor = 0;
  uint64_t auth_round = 0;
  auto next_auth_batch = [&]() {
    std::vector<size_t> picked;
    while (picked.size() < static_cast<size_t>(cfg.batch_size) &&
           picked.size() < auth.size()) {
      if (auth_cursor == auth_order.size()) {
        auth_order = ShuffledOrder(auth.size(), cfg.seed, 1, ++auth_round);
        auth_cursor = 0;
      }
      picked.push_back(auth_order[auth_cursor++]);
    }
    return Gather(auth, picked, min_steps);
  };

  int64_t count = 0;
  auto sanet_step = [&](const BatchView& batch, Optimizer& optimizer,
                        const ParamList& params, Branch branch) {
    auto [task, wm] =
        SanetUpdate(sanet, batch, keys, lambda, optimizer, params, count);
    return LossRecord{count, branch, task, wm, task + lambda * wm};
  };

  LossReport report;
  double prev_host = std::numeric_limits<double>::infinity();
  double prev_sanet = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order = ShuffledOrder(train.size(), cfg.seed, 0, epoch);
    size_t start = 0;
    double host_sum = 0.0, sanet_sum = 0.0;
    size_t host_steps = 0, sanet_steps = 0;
    while (start < order.size()) {
      ++count;
      if (count % 2 == 0) {
        size_t end = std::min(order.size(), start + cfg.batch_size);
        BatchView batch = Gather(
            train, std::span<const size_t>(order).subspan(start, end - start),
            min_steps);
        start = end;
        double loss = HostUpdate(model, batch, &trigger_batch, *opt,
                                 host_params, count);
        report.records.push_back(
            {count, Branch::kHost, loss, std::nullopt, loss});
        host_sum += loss;
        ++host_steps;
      } else {
        BatchView batch = next_auth_batch();
        LossRecord record = sanet_step(batch, *opt, sanet_params, Branch::kSanet);
        report.records.push_back(record);
        sanet_sum += record.task_loss;
        ++sanet_steps;
      }
    }
    report.epochs_run = epoch;
    if (on_epoch) on_epoch(epoch);
    double host_mean = host_sum / static_cast<double>(std::max<size_t>(1, host_steps));
    double sanet_mean =
        sanet_sum / static_cast<double>(std::max<size_t>(1, sanet_steps));
    if (cfg.early_stop && std::abs(host_mean - prev_host) < cfg.early_stop_tol &&
        std::abs(sanet_mean - prev_sanet) < cfg.early_stop_tol) {
      break;
    }
    prev_host = host_mean;
    prev_sanet = sanet_mean;
  }

  // Settle: SANet-specific parameters only, backbone frozen, fresh optimizer.
  std::unique_ptr<Optimizer> settle_opt = MakeOptimizer(cfg);
  ParamList specific = sanet.SpecificParameters();
  ParamList backbone = sanet.net().BackboneParameters();
  for (int epoch = 1; epoch <= cfg.settle_epochs; ++epoch) {
    std::vector<size_t> order = ShuffledOrder(auth.size(), cfg.seed, 2, epoch);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      BatchView batch = Gather(
          auth, std::span<const size_t>(order).subspan(start, end - start),
          min_steps);
      ++count;
      report.records.push_back(
          sanet_step(batch, *settle_opt, specific, Branch::kSettle));
      ZeroGrad(backbone);
    }
  }
  return report;
}

LossReport EmbedWatermark(HostModel& model, Sanet& sanet, const Corpus& train,
                          const TriggerSet& triggers, const AuthSet& auth,
                          const WatermarkKeys& keys, const Vocabulary& vocab,
                          const TrainConfig& cfg) {
  const int max_len = model.config().max_len;
  // Trigger sources appear once, with their trigger label, not also with
  // their original one.
  std::unordered_set<std::string> trigger_texts;
  for (const TriggerItem& item : triggers.items) {
    trigger_texts.insert(item.sample.text);
  }
  std::vector<TextSample> kept;
  for (const TextSample& s : train.samples()) {
    if (!trigger_texts.count(s.text)) kept.push_back(s);
  }
  Corpus clean(train.name(), train.num_classes(), std::move(kept),
               /*require_all_classes=*/false);
  return EmbedWatermark(model, sanet, EncodeCorpus(clean, vocab, max_len),
                        EncodeTriggers(triggers, vocab, max_len),
                        EncodeAuth(auth, vocab, max_len), keys, cfg);
}

}  // namespace textmark
