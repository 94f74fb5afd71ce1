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

#include "textmark/model.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <set>

namespace textmark {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native (little-endian) order");

namespace {

constexpr char kMagic[8] = {'T', 'X', 'M', 'K', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

std::unique_ptr<Backbone> MakeBackbone(const ModelConfig& c,
                                       std::mt19937_64& rng) {
  switch (c.arch) {
    case Arch::kTextCnn:
      return std::make_unique<TextCnnBackbone>(c.embed_dim, c.filter_widths,
                                               c.filters_per_width, rng);
    case Arch::kGru:
      return std::make_unique<GruBackbone>(c.embed_dim, c.hidden_dim, rng);
    case Arch::kBiLstm:
      return std::make_unique<BiLstmBackbone>(c.embed_dim, c.hidden_dim, rng);
  }
  throw Error("unknown architecture");
}

// Tensor names as stored in checkpoints.
std::vector<std::pair<std::string, ParamPtr>> NamedParameters(
    const Network& net) {
  std::vector<std::pair<std::string, ParamPtr>> out;
  out.emplace_back("embedding", net.embedding().table());
  for (const ParamPtr& p : net.BackboneParameters()) {
    out.emplace_back("backbone." + p->name, p);
  }
  for (const ParamPtr& p : net.HeadParameters()) out.emplace_back(p->name, p);
  return out;
}

Checkpoint NetworkCheckpoint(const Network& net, nlohmann::json metadata) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  for (auto& [name, p] : NamedParameters(net)) {
    ckpt.tensors.emplace_back(name, p->value);
  }
  return ckpt;
}

// Overwrites every parameter of `net` from `ckpt`; the tensor name sets must
// match exactly.
void RestoreNetwork(Network& net, const Checkpoint& ckpt) {
  auto named = NamedParameters(net);
  std::set<std::string> expected;
  for (auto& [name, p] : named) expected.insert(name);
  for (auto& [name, m] : ckpt.tensors) {
    if (!expected.count(name)) {
      throw ParseError("checkpoint has unexpected tensor '" + name + "'");
    }
  }
  for (auto& [name, p] : named) {
    const Matrix* m = ckpt.Find(name);
    if (!m) throw ParseError("checkpoint is missing tensor '" + name + "'");
    if (m->rows() != p->value.rows() || m->cols() != p->value.cols()) {
      throw ShapeError("tensor '" + name + "' has shape " +
                       std::to_string(m->rows()) + "x" +
                       std::to_string(m->cols()) + ", expected " +
                       std::to_string(p->value.rows()) + "x" +
                       std::to_string(p->value.cols()));
    }
    p->value = *m;
    p->grad.setZero();
  }
}

void CheckKind(const Checkpoint& ckpt, const std::string& kind) {
  if (!ckpt.metadata.contains("kind") ||
      ckpt.metadata["kind"] != kind) {
    throw ParseError("checkpoint is not a " + kind + " checkpoint");
  }
}

}  // namespace

nlohmann::json ModelConfig::ToJson() const {
  return {{"arch", ArchName(arch)},
          {"vocab_size", vocab_size},
          {"embed_dim", embed_dim},
          {"hidden_dim", hidden_dim},
          {"num_classes", num_classes},
          {"max_len", max_len},
          {"seed", seed},
          {"filter_widths", filter_widths},
          {"filters_per_width", filters_per_width}};
}

ModelConfig ModelConfig::FromJson(const nlohmann::json& j) {
  ModelConfig c;
  c.arch = ParseArch(j.at("arch").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.max_len = j.value("max_len", 256);
  c.seed = j.at("seed").get<uint64_t>();
  c.filter_widths = j.value("filter_widths", std::vector<int>{3, 4, 5});
  c.filters_per_width = j.value("filters_per_width", 32);
  return c;
}

nlohmann::json SanetConfig::ToJson() const {
  return {{"vocab_size", vocab_size},   {"embed_dim", embed_dim},
          {"carrier_rows", carrier_rows}, {"carrier_cols", carrier_cols},
          {"max_len", max_len},         {"seed", seed}};
}

SanetConfig SanetConfig::FromJson(const nlohmann::json& j) {
  SanetConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.carrier_rows = j.at("carrier_rows").get<int>();
  c.carrier_cols = j.at("carrier_cols").get<int>();
  c.max_len = j.value("max_len", 256);
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

const Matrix* Checkpoint::Find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

std::string SerializeCheckpoint(const Checkpoint& checkpoint) {
  std::string blob;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, m] : checkpoint.tensors) {
    size_t nbytes = static_cast<size_t>(m.size()) * sizeof(float);
    index.push_back({{"name", name},
                     {"rows", m.rows()},
                     {"cols", m.cols()},
                     {"offset", blob.size()},
                     {"nbytes", nbytes}});
    blob.append(reinterpret_cast<const char*>(m.data()), nbytes);
  }
  nlohmann::json manifest = {{"format", "textmark-checkpoint"},
                             {"version", kFormatVersion},
                             {"metadata", checkpoint.metadata},
                             {"tensors", index},
                             {"blob_sha256", Sha256Hex(blob)}};
  std::string header = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  uint64_t len = header.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += header;
  out += blob;
  return out;
}

Checkpoint DeserializeCheckpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + sizeof(uint64_t) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a textmark checkpoint (bad magic)");
  }
  uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof(kMagic), sizeof(len));
  size_t header_start = sizeof(kMagic) + sizeof(len);
  if (len > bytes.size() - header_start) {
    throw ParseError("checkpoint manifest is truncated");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(header_start, len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "textmark-checkpoint" ||
      manifest.value("version", 0) != kFormatVersion) {
    throw ParseError("unsupported checkpoint format");
  }
  std::string blob = bytes.substr(header_start + len);
  if (Sha256Hex(blob) != manifest.value("blob_sha256", "")) {
    throw IntegrityError("checkpoint tensor data is corrupt (hash mismatch)");
  }
  Checkpoint ckpt;
  ckpt.metadata = manifest["metadata"];
  for (const auto& entry : manifest.at("tensors")) {
    auto rows = entry.at("rows").get<Eigen::Index>();
    auto cols = entry.at("cols").get<Eigen::Index>();
    auto offset = entry.at("offset").get<size_t>();
    auto nbytes = entry.at("nbytes").get<size_t>();
    if (rows < 0 || cols < 0 ||
        nbytes != static_cast<size_t>(rows * cols) * sizeof(float) ||
        offset + nbytes > blob.size()) {
      throw ParseError("checkpoint tensor '" +
                       entry.value("name", std::string("?")) +
                       "' has an inconsistent index entry");
    }
    Matrix m(rows, cols);
    std::memcpy(m.data(), blob.data() + offset, nbytes);
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(),
                              std::move(m));
  }
  return ckpt;
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path) {
  WriteFileAtomic(path, SerializeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::string& path) {
  return DeserializeCheckpoint(ReadFile(path));
}

IdBatch MakeBatch(const std::vector<TokenIds>& sequences, int min_steps) {
  std::vector<const TokenIds*> ptrs;
  ptrs.reserve(sequences.size());
  for (const TokenIds& s : sequences) ptrs.push_back(&s);
  return IdBatch::Make(ptrs, min_steps);
}

// ---------------------------------------------------------------------------
// HostModel

HostModel BuildModel(const ModelConfig& config) {
  if (config.vocab_size < 2 || config.embed_dim < 1 || config.hidden_dim < 1) {
    throw Error("model dimensions must be >= 1 and vocab_size >= 2");
  }
  if (config.num_classes < 2) throw Error("num_classes must be >= 2");
  if (config.max_len < 1) throw Error("max_len must be >= 1");
  std::mt19937_64 rng(config.seed);
  Embedding embedding("embedding", config.vocab_size, config.embed_dim, rng);
  std::shared_ptr<Backbone> backbone = MakeBackbone(config, rng);
  std::vector<Dense> head;
  head.emplace_back("head.0", backbone->feature_dim(), config.hidden_dim, rng);
  head.emplace_back("head.1", config.hidden_dim, config.num_classes, rng);
  return HostModel(config, Network(std::move(embedding), std::move(backbone),
                                   std::move(head)));
}

void HostModel::CheckSequence(const TokenIds& sequence) const {
  if (static_cast<int>(sequence.size()) != config_.max_len) {
    throw ShapeError("sequence length " + std::to_string(sequence.size()) +
                     " does not match model max_len " +
                     std::to_string(config_.max_len));
  }
}

Matrix HostModel::Logits(const std::vector<TokenIds>& sequences) const {
  for (const TokenIds& s : sequences) CheckSequence(s);
  return net_.Logits(MakeBatch(sequences, net_.backbone()->min_steps()));
}

std::vector<double> HostModel::PredictProba(const TokenIds& sequence) const {
  Matrix probs = Softmax(Logits({sequence}));
  std::vector<double> out(probs.cols());
  for (Eigen::Index c = 0; c < probs.cols(); ++c) out[c] = probs(0, c);
  return out;
}

std::vector<int> HostModel::Predict(
    const std::vector<TokenIds>& sequences) const {
  std::vector<int> out;
  constexpr size_t kChunk = 256;
  for (size_t i = 0; i < sequences.size(); i += kChunk) {
    std::vector<TokenIds> chunk(
        sequences.begin() + i,
        sequences.begin() + std::min(sequences.size(), i + kChunk));
    Matrix logits = Logits(chunk);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index best;
      logits.row(r).maxCoeff(&best);
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

Checkpoint HostModel::ToCheckpoint(nlohmann::json metadata) const {
  if (metadata.is_null()) metadata = nlohmann::json::object();
  metadata["kind"] = "host";
  metadata["model"] = config_.ToJson();
  return NetworkCheckpoint(net_, std::move(metadata));
}

HostModel HostModel::FromCheckpoint(const Checkpoint& checkpoint) {
  CheckKind(checkpoint, "host");
  HostModel model =
      BuildModel(ModelConfig::FromJson(checkpoint.metadata.at("model")));
  RestoreNetwork(model.net_, checkpoint);
  return model;
}

// ---------------------------------------------------------------------------
// Sanet

Sanet BuildSanet(const HostModel& host, int vocab_size, int embed_dim,
                 std::pair<int, int> wm_shape, uint64_t seed) {
  const auto& backbone = host.net().backbone();
  if (embed_dim != backbone->input_dim()) {
    throw ShapeError("SANet embed_dim " + std::to_string(embed_dim) +
                     " must equal the shared backbone input dim " +
                     std::to_string(backbone->input_dim()));
  }
  if (wm_shape.first < 1 || wm_shape.second != 2) {
    throw ShapeError("watermark carrier shape (" +
                     std::to_string(wm_shape.first) + ", " +
                     std::to_string(wm_shape.second) +
                     ") incompatible with a binary head; expected (m, 2)");
  }
  if (vocab_size < 2) throw Error("SANet vocab_size must be >= 2");
  SanetConfig config;
  config.vocab_size = vocab_size;
  config.embed_dim = embed_dim;
  config.carrier_rows = wm_shape.first;
  config.carrier_cols = wm_shape.second;
  config.max_len = host.config().max_len;
  config.seed = seed;
  std::mt19937_64 rng(seed);
  Embedding embedding("embedding", vocab_size, embed_dim, rng);
  std::vector<Dense> head;
  head.emplace_back("head.0", backbone->feature_dim(), wm_shape.first, rng);
  head.emplace_back("head.1", wm_shape.first, wm_shape.second, rng);
  return Sanet(config, Network(std::move(embedding), backbone, std::move(head)));
}

Matrix Sanet::Logits(const std::vector<TokenIds>& sequences) const {
  for (const TokenIds& s : sequences) {
    if (static_cast<int>(s.size()) != config_.max_len) {
      throw ShapeError("sequence length does not match SANet max_len");
    }
  }
  return net_.Logits(MakeBatch(sequences, net_.backbone()->min_steps()));
}

std::vector<int> Sanet::Predict(const std::vector<TokenIds>& sequences) const {
  Matrix logits = Logits(sequences);
  std::vector<int> out;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out.push_back(logits(r, 1) > logits(r, 0) ? 1 : 0);
  }
  return out;
}

ParamList Sanet::SpecificParameters() const {
  ParamList out = net_.EmbeddingParameters();
  for (const ParamPtr& p : net_.HeadParameters()) out.push_back(p);
  return out;
}

Checkpoint Sanet::ToCheckpoint(nlohmann::json metadata) const {
  if (metadata.is_null()) metadata = nlohmann::json::object();
  metadata["kind"] = "sanet";
  metadata["sanet"] = config_.ToJson();
  const Backbone& bb = *net_.backbone();
  // Enough to rebuild a backbone of the right shape on load.
  nlohmann::json backbone_cfg = {{"arch", ArchName(bb.arch())},
                                 {"input_dim", bb.input_dim()},
                                 {"feature_dim", bb.feature_dim()}};
  if (bb.arch() == Arch::kTextCnn) {
    const auto& cnn = static_cast<const TextCnnBackbone&>(bb);
    ParamList params = cnn.Parameters();
    std::vector<int> widths;
    for (size_t i = 0; i < params.size(); i += 2) {
      widths.push_back(static_cast<int>(params[i]->value.rows()) /
                       bb.input_dim());
    }
    backbone_cfg["filter_widths"] = widths;
    backbone_cfg["filters_per_width"] = params[0]->value.cols();
  }
  metadata["backbone"] = backbone_cfg;
  return NetworkCheckpoint(net_, std::move(metadata));
}

Sanet Sanet::FromCheckpoint(const Checkpoint& checkpoint) {
  CheckKind(checkpoint, "sanet");
  SanetConfig config = SanetConfig::FromJson(checkpoint.metadata.at("sanet"));
  const auto& bj = checkpoint.metadata.at("backbone");
  ModelConfig host_cfg;
  host_cfg.arch = ParseArch(bj.at("arch").get<std::string>());
  host_cfg.vocab_size = 2;
  host_cfg.embed_dim = bj.at("input_dim").get<int>();
  host_cfg.hidden_dim = host_cfg.arch == Arch::kBiLstm
                            ? bj.at("feature_dim").get<int>() / 2
                            : bj.at("feature_dim").get<int>();
  if (host_cfg.arch == Arch::kTextCnn) {
    host_cfg.filter_widths = bj.at("filter_widths").get<std::vector<int>>();
    host_cfg.filters_per_width = bj.at("filters_per_width").get<int>();
  }
  host_cfg.max_len = config.max_len;
  HostModel shell = BuildModel(host_cfg);
  Sanet sanet = BuildSanet(shell, config.vocab_size, config.embed_dim,
                           {config.carrier_rows, config.carrier_cols},
                           config.seed);
  RestoreNetwork(sanet.net_, checkpoint);
  return sanet;
}

void LoadBackbone(Sanet& sanet, const Checkpoint& checkpoint) {
  std::shared_ptr<Backbone> fresh = sanet.net().backbone()->Clone();
  for (const ParamPtr& p : fresh->Parameters()) {
    std::string name = "backbone." + p->name;
    const Matrix* m = checkpoint.Find(name);
    if (!m) throw ShapeError("checkpoint has no tensor '" + name + "'");
    if (m->rows() != p->value.rows() || m->cols() != p->value.cols()) {
      throw ShapeError("backbone tensor '" + name + "' has shape " +
                       std::to_string(m->rows()) + "x" +
                       std::to_string(m->cols()) + ", SANet expects " +
                       std::to_string(p->value.rows()) + "x" +
                       std::to_string(p->value.cols()));
    }
    p->value = *m;
  }
  sanet.net().set_backbone(std::move(fresh));
}

}  // namespace textmark
