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

#include "textmark/run.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "textmark/concealment.h"
#include "textmark/synthetic.h"

namespace textmark {

namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigFile = "config.json";
constexpr const char* kManifestFile = "manifest.json";

void Log(const std::string& message) {
  std::cerr << "[textmark] " << message << std::endl;
}

std::string Resolve(const std::string& path, const std::string& base) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_relative()) p = fs::path(base) / p;
  return fs::absolute(p).lexically_normal().string();
}

nlohmann::json ParseJson(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

std::string Dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

Corpus LoadAny(const std::string& path, int num_classes,
               const std::string& name) {
  if (path.empty()) throw Error("corpus path for '" + name + "' is not set");
  CorpusFormat format = path.size() >= 4 &&
                                path.compare(path.size() - 4, 4, ".tsv") == 0
                            ? CorpusFormat::kTsv
                            : CorpusFormat::kJsonl;
  return LoadCorpus(path, format, num_classes, name);
}

Corpus LoadTrain(const RunConfig& c) {
  return LoadAny(c.train_path, c.num_classes, "train");
}

Corpus LoadTest(const RunConfig& c, int num_classes) {
  return LoadAny(c.test_path, num_classes, "test");
}

// The vocabulary covers the cross-task training corpus as well, when one is
// configured, so head replacement fine-tunes on known words.
Vocabulary BuildRunVocab(const RunConfig& c, const Corpus& train) {
  if (c.cross_task_train_path.empty()) {
    return Vocabulary::Build(train, c.vocab_min_freq, c.vocab_max_size);
  }
  Corpus cross = LoadAny(c.cross_task_train_path, 0, "cross-task-train");
  std::vector<TextSample> all = train.samples();
  all.insert(all.end(), cross.samples().begin(), cross.samples().end());
  Corpus joint("vocab", std::max(train.num_classes(), cross.num_classes()),
               std::move(all), false);
  return Vocabulary::Build(joint, c.vocab_min_freq, c.vocab_max_size);
}

TrainConfig TrainFromJson(const nlohmann::json& j, TrainConfig defaults) {
  nlohmann::json merged = defaults.ToJson();
  if (j.is_object()) merged.update(j);
  return TrainConfig::FromJson(merged);
}

HostModel LoadHost(const RunDirectory& run, const std::string& name) {
  return HostModel::FromCheckpoint(DeserializeCheckpoint(run.Read(name)));
}

Sanet LoadSanet(const RunDirectory& run) {
  return Sanet::FromCheckpoint(
      DeserializeCheckpoint(run.Read("sanet_checkpoint")));
}

Vocabulary LoadVocab(const RunDirectory& run) {
  return Vocabulary::FromJson(run.Read("vocab"));
}

struct Material {
  TriggerSet triggers;
  AuthSet auth;
  WatermarkKeys keys;
};

Material LoadMaterial(const RunDirectory& run) {
  return {TriggerSet::FromJsonl(run.Read("triggers")),
          AuthSet::FromJsonl(run.Read("auth")),
          WatermarkKeys::FromJson(run.Read("keys"))};
}

std::vector<std::string> TextsOf(const Corpus& corpus) {
  std::vector<std::string> out;
  for (const TextSample& s : corpus.samples()) out.push_back(s.text);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::FromJson(const nlohmann::json& j,
                              const std::string& base_dir) {
  RunConfig c;
  try {
    const nlohmann::json corpus = j.value("corpus", nlohmann::json::object());
    c.train_path = Resolve(corpus.value("train", ""), base_dir);
    c.test_path = Resolve(corpus.value("test", ""), base_dir);
    c.adversary_path = Resolve(corpus.value("adversary", ""), base_dir);
    c.cross_task_train_path =
        Resolve(corpus.value("cross_task_train", ""), base_dir);
    c.cross_task_test_path =
        Resolve(corpus.value("cross_task_test", ""), base_dir);
    c.num_classes = corpus.value("num_classes", 0);

    const nlohmann::json vocab = j.value("vocab", nlohmann::json::object());
    c.vocab_min_freq = vocab.value("min_freq", c.vocab_min_freq);
    c.vocab_max_size = vocab.value("max_size", c.vocab_max_size);

    nlohmann::json model = c.model.ToJson();
    model["vocab_size"] = 0;
    model.update(j.value("model", nlohmann::json::object()));
    c.model = ModelConfig::FromJson(model);

    c.train = TrainFromJson(j.value("train", nlohmann::json::object()),
                            TrainConfig{});

    const nlohmann::json m = j.value("material", nlohmann::json::object());
    c.m_per_class = m.value("m_per_class", c.m_per_class);
    c.auth_pairs = m.value("auth_pairs", c.auth_pairs);
    std::vector<int> shape = m.value("wm_shape", std::vector<int>{16, 2});
    if (shape.size() != 2) throw ParseError("wm_shape must have two entries");
    c.wm_rows = shape[0];
    c.wm_cols = shape[1];
    c.density = m.value("density", c.density);
    c.owner_seed = m.value("owner_seed", c.owner_seed);
    c.trigger_seed = m.value("trigger_seed", c.trigger_seed);
    c.auth_seed = m.value("auth_seed", c.auth_seed);
    c.sanet_seed = m.value("sanet_seed", c.sanet_seed);
    c.key_file = Resolve(m.value("key_file", ""), base_dir);
    c.owner_info = m.value("owner_info", "");

    const nlohmann::json a = j.value("attack", nlohmann::json::object());
    TrainConfig attack_defaults;
    attack_defaults.optimizer = OptimizerKind::kSgd;
    attack_defaults.seed = 17;
    c.attack_train = TrainFromJson(a.value("train", nlohmann::json::object()),
                                   attack_defaults);
    c.finetune_epochs = a.value("finetune_epochs", c.finetune_epochs);
    c.finetune_fraction = a.value("finetune_fraction", c.finetune_fraction);
    c.head_epochs = a.value("head_epochs", c.head_epochs);
    c.sample_every = a.value("sample_every", c.sample_every);
    c.split_seed = a.value("split_seed", c.split_seed);
    c.prune_rates = a.value("prune_rates", c.prune_rates);
    c.prune_seed = a.value("prune_seed", c.prune_seed);
    c.forge_epochs = a.value("forge_epochs", c.forge_epochs);
    const nlohmann::json f = a.value("forge", nlohmann::json::object());
    c.forge.m_per_class = f.value("m_per_class", c.m_per_class);
    c.forge.auth_pairs = f.value("auth_pairs", c.auth_pairs);
    c.forge.wm_rows = c.wm_rows;
    c.forge.wm_cols = c.wm_cols;
    c.forge.density = f.value("density", c.density);
    c.forge.seed = f.value("seed", uint64_t{1234});
    c.forge.adversary_info = f.value("adversary_info", c.forge.adversary_info);

    const nlohmann::json k = j.value("conceal", nlohmann::json::object());
    c.trigger_words = k.value("trigger_words", c.trigger_words);
    c.baseline_m = k.value("baseline_m", c.baseline_m);
    c.baseline_target = k.value("baseline_target", c.baseline_target);
    c.max_removed_fraction =
        k.value("max_removed_fraction", c.max_removed_fraction);
    c.calibration_fraction =
        k.value("calibration_fraction", c.calibration_fraction);
    c.conceal_seed = k.value("seed", c.conceal_seed);

    c.output_dir = Resolve(j.value("output_dir", ""), base_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid run config: ") + e.what());
  }
  if (c.output_dir.empty()) throw ParseError("run config needs output_dir");
  if (c.train_path.empty() || c.test_path.empty()) {
    throw ParseError("run config needs corpus.train and corpus.test");
  }
  c.train.Validate();
  c.attack_train.Validate();
  return c;
}

RunConfig RunConfig::Load(const std::string& path) {
  nlohmann::json j = ParseJson(ReadFile(path), "config " + path);
  return FromJson(j, fs::absolute(path).parent_path().string());
}

nlohmann::json RunConfig::ToJson() const {
  nlohmann::json model_json = model.ToJson();
  model_json.erase("vocab_size");
  model_json.erase("num_classes");
  return {
      {"corpus",
       {{"train", train_path},
        {"test", test_path},
        {"adversary", adversary_path},
        {"cross_task_train", cross_task_train_path},
        {"cross_task_test", cross_task_test_path},
        {"num_classes", num_classes}}},
      {"vocab", {{"min_freq", vocab_min_freq}, {"max_size", vocab_max_size}}},
      {"model", model_json},
      {"train", train.ToJson()},
      {"material",
       {{"m_per_class", m_per_class},
        {"auth_pairs", auth_pairs},
        {"wm_shape", {wm_rows, wm_cols}},
        {"density", density},
        {"owner_seed", owner_seed},
        {"trigger_seed", trigger_seed},
        {"auth_seed", auth_seed},
        {"sanet_seed", sanet_seed},
        {"key_file", key_file},
        {"owner_info", owner_info}}},
      {"attack",
       {{"train", attack_train.ToJson()},
        {"finetune_epochs", finetune_epochs},
        {"finetune_fraction", finetune_fraction},
        {"head_epochs", head_epochs},
        {"sample_every", sample_every},
        {"split_seed", split_seed},
        {"prune_rates", prune_rates},
        {"prune_seed", prune_seed},
        {"forge_epochs", forge_epochs},
        {"forge",
         {{"m_per_class", forge.m_per_class},
          {"auth_pairs", forge.auth_pairs},
          {"density", forge.density},
          {"seed", forge.seed},
          {"adversary_info", forge.adversary_info}}}}},
      {"conceal",
       {{"trigger_words", trigger_words},
        {"baseline_m", baseline_m},
        {"baseline_target", baseline_target},
        {"max_removed_fraction", max_removed_fraction},
        {"calibration_fraction", calibration_fraction},
        {"seed", conceal_seed}}},
      {"output_dir", output_dir}};
}

// ---------------------------------------------------------------------------
// RunDirectory

RunDirectory::RunDirectory(const RunConfig& config) {
  root_ = config.output_dir;
  for (const char* sub : {"checkpoints", "material", "reports", "curves"}) {
    fs::create_directories(fs::path(root_) / sub);
  }
  const std::string config_text = Dump(config.ToJson());
  const std::string config_path = Path(kConfigFile);
  if (fs::exists(config_path)) {
    if (ReadFile(config_path) != config_text) {
      throw Error("run directory " + root_ +
                  " was created with a different config");
    }
  } else {
    WriteFileAtomic(config_path, config_text);
  }
  manifest_ = {{"artifacts", nlohmann::json::object()}};
  if (fs::exists(Path(kManifestFile))) {
    manifest_ = ParseJson(ReadFile(Path(kManifestFile)), "manifest");
  }
  manifest_["artifacts"]["config"] = {{"path", kConfigFile},
                                      {"sha256", Sha256Hex(config_text)}};
  SaveManifest();
}

RunDirectory RunDirectory::Open(const std::string& dir) {
  RunDirectory run;
  run.root_ = dir;
  if (!fs::exists(run.Path(kManifestFile))) {
    throw Error(dir + " is not a run directory (no manifest.json)");
  }
  run.manifest_ = ParseJson(ReadFile(run.Path(kManifestFile)), "manifest");
  return run;
}

std::string RunDirectory::Path(const std::string& relative) const {
  return (fs::path(root_) / relative).string();
}

void RunDirectory::SaveManifest() const {
  WriteFileAtomic(Path(kManifestFile), Dump(manifest_));
}

void RunDirectory::Write(const std::string& name, const std::string& relative,
                         const std::string& contents) {
  WriteFileAtomic(Path(relative), contents);
  manifest_["artifacts"][name] = {{"path", relative},
                                  {"sha256", Sha256Hex(contents)}};
  SaveManifest();
}

bool RunDirectory::Has(const std::string& name) const {
  return manifest_["artifacts"].contains(name);
}

std::string RunDirectory::Verified(const std::string& name) const {
  if (!Has(name)) {
    throw Error("artifact '" + name + "' is missing from " + root_ +
                "; run the command that produces it first");
  }
  const nlohmann::json& entry = manifest_["artifacts"][name];
  std::string path = Path(entry.at("path").get<std::string>());
  if (!fs::exists(path)) throw Error("artifact file " + path + " is missing");
  if (Sha256File(path) != entry.at("sha256").get<std::string>()) {
    throw IntegrityError("artifact '" + name + "' (" + path +
                         ") changed since it was recorded; refusing to use a "
                         "stale artifact");
  }
  return path;
}

std::string RunDirectory::Read(const std::string& name) const {
  std::string path = Verified(name);
  return ReadFile(path);
}

// ---------------------------------------------------------------------------
// Commands

int CmdTrainClean(const RunConfig& config) {
  RunDirectory run(config);
  Corpus train = LoadTrain(config);
  Corpus test = LoadTest(config, train.num_classes());
  Vocabulary vocab = BuildRunVocab(config, train);
  ModelConfig mc = config.model;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.num_classes = train.num_classes();
  Log("training clean " + ArchName(mc.arch) + " on " +
      std::to_string(train.size()) + " samples");
  HostModel clean = BuildModel(mc);
  LossReport loss = TrainClean(clean, train, vocab, config.train);
  const int max_len = mc.max_len;
  nlohmann::json report = {
      {"arch", ArchName(mc.arch)},
      {"vocab_size", vocab.size()},
      {"train_samples", train.size()},
      {"test_samples", test.size()},
      {"epochs_run", loss.epochs_run},
      {"parameters", CountScalars(clean.net().Parameters())},
      {"train_acc", Accuracy(clean, EncodeCorpus(train, vocab, max_len))},
      {"test_acc", Accuracy(clean, EncodeCorpus(test, vocab, max_len))}};
  run.Write("vocab", "material/vocab.json", vocab.ToJson());
  run.Write("clean_checkpoint", "checkpoints/clean.ckpt",
            SerializeCheckpoint(clean.ToCheckpoint({{"role", "clean"}})));
  run.Write("clean_loss", "curves/clean_loss.csv", loss.ToCsv());
  run.Write("report_train_clean", "reports/train_clean.json", Dump(report));
  Log("clean test accuracy " + report["test_acc"].dump());
  return kExitOk;
}

int CmdGenMaterial(const RunConfig& config) {
  RunDirectory run(config);
  Vocabulary vocab = LoadVocab(run);
  const std::string clean_bytes = run.Read("clean_checkpoint");
  HostModel clean = HostModel::FromCheckpoint(DeserializeCheckpoint(clean_bytes));
  Corpus train = LoadTrain(config);
  if (config.key_file.empty()) throw Error("material.key_file is not set");
  if (config.owner_info.empty()) throw Error("material.owner_info is not set");
  std::vector<uint8_t> kappa1 = ReadKeyFile(config.key_file);

  const std::string source = Sha256Hex(clean_bytes).substr(0, 16);
  TriggerSet triggers = GenerateTriggerSet(
      clean, vocab, train, config.m_per_class, config.trigger_seed, source);
  MessageDigest digest = ComputeDigest(kappa1, config.owner_info);
  AuthSet auth =
      GenerateAuthSet(train, config.auth_pairs, digest, config.auth_seed);
  WatermarkKeys keys = GenerateKeys({config.wm_rows, config.wm_cols},
                                    config.density, config.owner_seed);
  run.Write("triggers", "material/triggers.jsonl", triggers.ToJsonl());
  run.Write("auth", "material/auth.jsonl", auth.ToJsonl());
  run.Write("keys", "material/keys.json", keys.ToJson());
  nlohmann::json report = {{"triggers", triggers.items.size()},
                           {"trigger_resampled", triggers.resampled},
                           {"trigger_source_model", source},
                           {"auth_items", auth.items.size()},
                           {"keys_fingerprint", keys.Fingerprint()},
                           {"selected_positions", keys.selected()},
                           {"carrier_entries", keys.s.size()}};
  run.Write("report_material", "reports/material.json", Dump(report));
  Log("generated " + std::to_string(triggers.items.size()) + " triggers and " +
      std::to_string(auth.items.size()) + " auth items");
  return kExitOk;
}

int CmdEmbed(const RunConfig& config) {
  RunDirectory run(config);
  Vocabulary vocab = LoadVocab(run);
  HostModel clean = LoadHost(run, "clean_checkpoint");
  Material mat = LoadMaterial(run);
  Corpus train = LoadTrain(config);
  Corpus test = LoadTest(config, train.num_classes());

  HostModel wm = BuildModel(clean.config());
  Sanet sanet = BuildSanet(wm, static_cast<int>(vocab.size()),
                           wm.config().embed_dim,
                           {config.wm_rows, config.wm_cols}, config.sanet_seed);
  Log("embedding watermark into " + ArchName(wm.config().arch));
  LossReport loss = EmbedWatermark(wm, sanet, train, mat.triggers, mat.auth,
                                   mat.keys, vocab, config.train);
  const int max_len = wm.config().max_len;
  EncodedSet test_enc = EncodeCorpus(test, vocab, max_len);
  double clean_acc = Accuracy(clean, test_enc);
  double wm_acc = Accuracy(wm, test_enc);
  nlohmann::json report = {
      {"arch", ArchName(wm.config().arch)},
      {"epochs_run", loss.epochs_run},
      {"host_steps", loss.Count(Branch::kHost)},
      {"sanet_steps", loss.Count(Branch::kSanet)},
      {"settle_steps", loss.Count(Branch::kSettle)},
      {"clean_test_acc", clean_acc},
      {"watermarked_test_acc", wm_acc},
      {"fidelity_gap", std::abs(wm_acc - clean_acc)},
      {"trigger_acc",
       Accuracy(wm, EncodeTriggers(mat.triggers, vocab, max_len))},
      {"clean_trigger_acc",
       Accuracy(clean, EncodeTriggers(mat.triggers, vocab, max_len))},
      {"auth_acc", Accuracy(sanet, EncodeAuth(mat.auth, vocab, max_len))},
      {"delta_selected_only",
       ExtractDelta(sanet, mat.keys, DeltaMode::kSelectedOnly)},
      {"delta_literal", ExtractDelta(sanet, mat.keys, DeltaMode::kLiteral)},
      {"keys_fingerprint", mat.keys.Fingerprint()}};
  run.Write("watermarked_checkpoint", "checkpoints/watermarked.ckpt",
            SerializeCheckpoint(wm.ToCheckpoint({{"role", "watermarked"}})));
  run.Write("sanet_checkpoint", "checkpoints/sanet.ckpt",
            SerializeCheckpoint(sanet.ToCheckpoint({{"role", "sanet"}})));
  run.Write("embed_loss", "curves/embed_loss.csv", loss.ToCsv());
  run.Write("report_embed", "reports/embed.json", Dump(report));
  Log("watermarked test accuracy " + report["watermarked_test_acc"].dump() +
      ", trigger accuracy " + report["trigger_acc"].dump());
  return kExitOk;
}

int CmdVerify(const RunConfig& config, const VerifyOptions& options,
              VerificationReport* out) {
  RunDirectory run(config);
  Vocabulary vocab = LoadVocab(run);
  Material mat = LoadMaterial(run);
  VerificationReport report;
  std::string suspect = options.suspect;
  if (options.channel == "blackbox") {
    if (!options.remote.empty()) {
      LineProtocolClient client(options.remote);
      report = VerifyBlackbox(client, mat.triggers);
      report.details["suspect"] = "remote";
    } else {
      if (suspect.empty()) suspect = run.Verified("watermarked_checkpoint");
      LocalModelClient client(HostModel::FromCheckpoint(LoadCheckpoint(suspect)),
                              vocab);
      report = VerifyBlackbox(client, mat.triggers);
      report.details["suspect"] = suspect;
    }
    report.keys_fingerprint = mat.keys.Fingerprint();
  } else if (options.channel == "whitebox") {
    if (!options.remote.empty()) {
      throw Error("white-box verification needs a suspect checkpoint");
    }
    if (suspect.empty()) suspect = run.Verified("watermarked_checkpoint");
    report = VerifyWhitebox(LoadCheckpoint(suspect), LoadSanet(run), mat.auth,
                            vocab);
    report.details["suspect"] = suspect;
    report.keys_fingerprint = mat.keys.Fingerprint();
  } else if (options.channel == "extract") {
    Sanet sanet = suspect.empty()
                      ? LoadSanet(run)
                      : Sanet::FromCheckpoint(LoadCheckpoint(suspect));
    report = VerifyExtraction(sanet, mat.keys);
    report.details["suspect"] = suspect.empty()
                                    ? run.Verified("sanet_checkpoint")
                                    : suspect;
  } else {
    throw Error("unknown channel '" + options.channel +
                "' (expected blackbox, whitebox or extract)");
  }
  std::string name = "verify_" + options.channel;
  if (!options.label.empty()) name += "_" + options.label;
  report.details["label"] = options.label;
  run.Write("report_" + name, "reports/" + name + ".json",
            Dump(report.ToJson()));
  std::cout << report.channel << ": " << report.metric_name << "="
            << report.metric << " threshold=" << report.threshold
            << (report.advisory ? " (advisory)" : "") << " -> "
            << (report.owned() ? "owned" : "not owned") << std::endl;
  if (out) *out = report;
  return report.owned() ? kExitOk : kExitNotOwned;
}

int CmdAttack(const RunConfig& config, const std::string& attack) {
  static const std::vector<std::string> kAll = {
      "finetune", "replace-head", "prune", "forge-trigger", "forge-sanet"};
  if (attack == "all") {
    for (const std::string& a : kAll) CmdAttack(config, a);
    return kExitOk;
  }
  if (std::find(kAll.begin(), kAll.end(), attack) == kAll.end()) {
    throw Error("unknown attack '" + attack + "'");
  }
  RunDirectory run(config);
  Vocabulary vocab = LoadVocab(run);
  HostModel wm = LoadHost(run, "watermarked_checkpoint");
  Material mat = LoadMaterial(run);
  Corpus train = LoadTrain(config);
  Corpus test = LoadTest(config, train.num_classes());
  const int max_len = wm.config().max_len;
  auto [adversary_split, held_out] =
      Split(test, config.finetune_fraction, config.split_seed);
  OwnerProbe probe{EncodeCorpus(held_out, vocab, max_len),
                   EncodeTriggers(mat.triggers, vocab, max_len),
                   EncodeAuth(mat.auth, vocab, max_len), LoadSanet(run),
                   mat.keys};
  Log("running attack " + attack);
  AttackResult result;
  if (attack == "finetune") {
    result = FinetuneGlobal(wm, EncodeCorpus(adversary_split, vocab, max_len),
                            config.finetune_epochs, config.attack_train, probe,
                            config.sample_every);
  } else if (attack == "replace-head") {
    Corpus cross_train = LoadAny(config.cross_task_train_path, 0,
                                 "cross-task-train");
    Corpus cross_test = LoadAny(config.cross_task_test_path,
                                cross_train.num_classes(), "cross-task-test");
    Corpus data =
        Split(cross_train, config.finetune_fraction, config.split_seed).first;
    result = ReplaceHeadFinetune(
        wm, cross_train.num_classes(), EncodeCorpus(data, vocab, max_len),
        EncodeCorpus(cross_test, vocab, max_len), config.head_epochs,
        config.attack_train, probe, config.sample_every);
  } else if (attack == "prune") {
    result = PruneSweep(wm, config.prune_rates, config.prune_seed, probe);
  } else if (attack == "forge-trigger") {
    Corpus adversary =
        LoadAny(config.adversary_path, train.num_classes(), "adversary");
    TrainConfig cfg = config.attack_train;
    cfg.epochs = config.forge_epochs;
    result = ForgeTriggerAttack(wm, adversary, vocab, cfg, config.forge, probe);
  } else {
    Corpus adversary =
        LoadAny(config.adversary_path, train.num_classes(), "adversary");
    TrainConfig cfg = config.train;
    cfg.epochs = config.forge_epochs;
    result = ForgeSanetAttack(wm, adversary, vocab, cfg, config.forge, probe);
  }
  std::string name = attack;
  std::replace(name.begin(), name.end(), '-', '_');
  run.Write("report_attack_" + name, "reports/attack_" + name + ".json",
            Dump(result.ToJson()));
  run.Write("curve_attack_" + name, "curves/attack_" + name + ".csv",
            result.curve.ToCsv());
  Log(attack + ": post test " + std::to_string(result.post.test_acc) +
      ", trigger " + std::to_string(result.post.trigger_acc) + ", auth " +
      std::to_string(result.post.auth_acc));
  return kExitOk;
}

int CmdConceal(const RunConfig& config) {
  RunDirectory run(config);
  Vocabulary vocab = LoadVocab(run);
  HostModel clean = LoadHost(run, "clean_checkpoint");
  HostModel wm = LoadHost(run, "watermarked_checkpoint");
  Material mat = LoadMaterial(run);
  Corpus train = LoadTrain(config);
  Corpus test = LoadTest(config, train.num_classes());

  TriggerSet baseline = RarewordTriggerBaseline(
      train, config.trigger_words, config.baseline_target, config.baseline_m,
      config.conceal_seed);

  // The scorer never sees the calibration texts or any trigger source.
  auto [scorer_part, calibration] =
      Split(train, 1.0 - config.calibration_fraction, config.conceal_seed);
  std::unordered_set<std::string> sources;
  for (const TriggerItem& item : mat.triggers.items) {
    sources.insert(item.sample.text);
  }
  std::unordered_set<std::string> baseline_ids;
  for (const TriggerItem& item : baseline.items) {
    baseline_ids.insert(item.sample.id);
  }
  std::vector<TextSample> scorer_samples;
  for (const TextSample& s : scorer_part.samples()) {
    if (!sources.count(s.text) && !baseline_ids.count(s.id)) {
      scorer_samples.push_back(s);
    }
  }
  NgramScorer scorer(Corpus("scorer", train.num_classes(),
                            std::move(scorer_samples), false));
  double tau = CalibrateTau(TextsOf(calibration), scorer,
                            config.max_removed_fraction);
  Log("calibrated tau " + std::to_string(tau));

  Log("training the rare-word baseline model");
  HostModel backdoored = BuildModel(clean.config());
  const int max_len = clean.config().max_len;
  TrainHost(backdoored, EncodeCorpus(train, vocab, max_len),
            EncodeTriggers(baseline, vocab, max_len), config.train);

  std::vector<SuspicionRow> audit_ours, audit_base;
  ConcealmentResult ours = EvaluateConcealment(
      wm, vocab, mat.triggers, test, scorer, tau, "ours", &audit_ours);
  ConcealmentResult base = EvaluateConcealment(
      backdoored, vocab, baseline, test, scorer, tau, "rareword", &audit_base);
  for (SuspicionRow& row : audit_base) row.set = "baseline_" + row.set;
  audit_ours.insert(audit_ours.end(), audit_base.begin(), audit_base.end());

  nlohmann::json report = {
      {"tau", tau},
      {"max_removed_fraction", config.max_removed_fraction},
      {"calibration_texts", calibration.size()},
      {"scorer_fingerprint", scorer.Fingerprint()},
      {"ours", ours.ToJson()},
      {"baseline", base.ToJson()}};
  run.Write("baseline_triggers", "material/baseline_triggers.jsonl",
            baseline.ToJsonl());
  run.Write("baseline_checkpoint", "checkpoints/baseline.ckpt",
            SerializeCheckpoint(backdoored.ToCheckpoint({{"role", "baseline"}})));
  run.Write("suspicion", "curves/suspicion.csv", SuspicionCsv(audit_ours));
  run.Write("report_conceal", "reports/conceal.json", Dump(report));
  Log("ASR' ours " + std::to_string(ours.asr_defended) + ", baseline " +
      std::to_string(base.asr_defended));
  return kExitOk;
}

namespace {

std::string Fmt(const nlohmann::json& v) {
  if (v.is_null()) return "-";
  if (v.is_number_float()) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << v.get<double>();
    return out.str();
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string Row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const std::string& c : cells) out += " " + c + " |";
  return out + "\n";
}

std::string Header(const std::vector<std::string>& cells) {
  std::string out = Row(cells) + "|";
  for (size_t i = 0; i < cells.size(); ++i) out += "---|";
  return out + "\n";
}

}  // namespace

int CmdReport(const std::string& run_dir) {
  RunDirectory run = RunDirectory::Open(run_dir);
  nlohmann::json reports = nlohmann::json::object();
  for (auto& [name, entry] : run.manifest()["artifacts"].items()) {
    if (name.rfind("report_", 0) != 0) continue;
    reports[name.substr(7)] = ParseJson(run.Read(name), name);
  }
  auto get = [&](const std::string& report, const std::string& key) {
    if (!reports.contains(report) || !reports[report].contains(key)) {
      return nlohmann::json();
    }
    return reports[report][key];
  };
  std::string md = "# Run summary\n\n";
  md += "## Clean model\n\n";
  md += Header({"arch", "train acc", "test acc"});
  md += Row({Fmt(get("train_clean", "arch")), Fmt(get("train_clean", "train_acc")),
             Fmt(get("train_clean", "test_acc"))});
  md += "\n## Fidelity\n\n";
  md += Header({"clean test acc", "watermarked test acc", "gap"});
  md += Row({Fmt(get("embed", "clean_test_acc")),
             Fmt(get("embed", "watermarked_test_acc")),
             Fmt(get("embed", "fidelity_gap"))});
  md += "\n## Validity\n\n";
  md += Header({"trigger acc", "clean model trigger acc", "auth acc"});
  md += Row({Fmt(get("embed", "trigger_acc")),
             Fmt(get("embed", "clean_trigger_acc")),
             Fmt(get("embed", "auth_acc"))});
  md += "\n## Extraction\n\n";
  md += Header({"delta (selected only)", "delta (literal)", "keys"});
  md += Row({Fmt(get("embed", "delta_selected_only")),
             Fmt(get("embed", "delta_literal")),
             Fmt(get("embed", "keys_fingerprint"))});

  md += "\n## Verification\n\n";
  md += Header({"report", "channel", "metric", "threshold", "owned"});
  for (auto& [name, r] : reports.items()) {
    if (name.rfind("verify_", 0) != 0) continue;
    md += Row({name, Fmt(r["channel"]), Fmt(r["metric"]), Fmt(r["threshold"]),
               Fmt(r["owned"])});
  }

  md += "\n## Attacks\n\n";
  md += Header({"attack", "pre test acc", "post test acc", "trigger acc",
                "auth acc", "delta"});
  for (auto& [name, r] : reports.items()) {
    if (name.rfind("attack_", 0) != 0) continue;
    md += Row({Fmt(r["attack"]), Fmt(r["pre_test_acc"]),
               Fmt(r["post"]["test_acc"]), Fmt(r["post"]["trigger_acc"]),
               Fmt(r["post"]["auth_acc"]), Fmt(r["post"]["delta"])});
  }
  if (reports.contains("attack_prune")) {
    md += "\n### Pruning sweep\n\n";
    md += Header({"rate", "test acc", "trigger acc", "useful"});
    for (const auto& row : reports["attack_prune"]["extra"]["sweep"]) {
      md += Row({Fmt(row["rate"]), Fmt(row["test_acc"]),
                 Fmt(row["trigger_acc"]), Fmt(row["useful"])});
    }
  }
  for (const char* forge : {"attack_forge_trigger", "attack_forge_sanet"}) {
    if (!reports.contains(forge)) continue;
    md += std::string("\n### ") + forge + "\n\n";
    md += Header({"measure", "value"});
    for (auto& [k, v] : reports[forge]["extra"].items()) {
      md += Row({k, Fmt(v)});
    }
  }

  if (reports.contains("conceal")) {
    md += "\n## Concealment\n\n";
    md += "tau = " + Fmt(reports["conceal"]["tau"]) + "\n\n";
    md += Header({"scheme", "ASR", "ASR'", "CACC", "CACC'", "word retention"});
    for (const char* s : {"ours", "baseline"}) {
      const auto& r = reports["conceal"][s];
      md += Row({Fmt(r["scheme"]), Fmt(r["asr"]), Fmt(r["asr_defended"]),
                 Fmt(r["cacc"]), Fmt(r["cacc_defended"]),
                 Fmt(r["trigger_retention"])});
    }
  }
  run.Write("summary_json", "reports/summary.json", Dump(reports));
  run.Write("summary_md", "reports/summary.md", md);
  std::cout << md;
  return kExitOk;
}

void MakeCorpusFiles(const std::string& kind, uint64_t seed, int n_train,
                     int n_test, int n_extra, const std::string& out_dir) {
  CorpusBundle b = MakeSyntheticCorpora(ParseSyntheticKind(kind), seed,
                                        n_train, n_test, n_extra);
  fs::create_directories(out_dir);
  SaveCorpusJsonl(b.train, (fs::path(out_dir) / (kind + "-train.jsonl")).string());
  SaveCorpusJsonl(b.test, (fs::path(out_dir) / (kind + "-test.jsonl")).string());
  SaveCorpusJsonl(b.extra, (fs::path(out_dir) / (kind + "-extra.jsonl")).string());
}

}  // namespace textmark
