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

// End-to-end runs: configuration, the run directory with its hash manifest,
// and one function per CLI subcommand.
//
// Run directory layout:
//   config.json  manifest.json  checkpoints/  material/  reports/  curves/

#ifndef TEXTMARK_RUN_H_
#define TEXTMARK_RUN_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "textmark/attacks.h"
#include "textmark/training.h"
#include "textmark/verification.h"

namespace textmark {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotOwned = 2;

struct RunConfig {
  // Corpus files (JSONL, or TSV when the name ends in .tsv).
  std::string train_path;
  std::string test_path;
  std::string adversary_path;         // forge attacks; optional
  std::string cross_task_train_path;  // head replacement; optional
  std::string cross_task_test_path;
  int num_classes = 0;  // 0: inferred from the training labels

  int vocab_min_freq = 1;
  int vocab_max_size = 20000;

  ModelConfig model;  // vocab_size and num_classes are filled in at run time
  TrainConfig train;

  int m_per_class = 10;
  int auth_pairs = 200;
  int wm_rows = 16;
  int wm_cols = 2;
  double density = 0.5;
  uint64_t owner_seed = 42;
  uint64_t trigger_seed = 1;
  uint64_t auth_seed = 2;
  uint64_t sanet_seed = 3;
  std::string key_file;
  std::string owner_info;

  TrainConfig attack_train;  // optimizer for every adversary fine-tune
  int finetune_epochs = 30;
  double finetune_fraction = 0.2;
  int head_epochs = 30;
  int sample_every = 5;
  uint64_t split_seed = 7;
  std::vector<double> prune_rates = {0.0, 0.1, 0.2, 0.3, 0.4,
                                     0.5, 0.6, 0.7, 0.8, 0.9};
  uint64_t prune_seed = 8;
  ForgeConfig forge;
  int forge_epochs = 20;

  std::vector<std::string> trigger_words = {"cf", "mn", "bb", "tq", "mb"};
  int baseline_m = 100;
  int baseline_target = 0;
  double max_removed_fraction = 0.10;
  double calibration_fraction = 0.10;
  uint64_t conceal_seed = 9;

  std::string output_dir;

  // Relative paths are resolved against `base_dir`.
  static RunConfig FromJson(const nlohmann::json& j,
                            const std::string& base_dir);
  static RunConfig Load(const std::string& path);
  nlohmann::json ToJson() const;
};

// A run directory plus its manifest. Every file a command produces is
// recorded with its SHA-256; reading an artifact re-checks that hash.
class RunDirectory {
 public:
  // Creates the directory tree. When config.json already exists it must
  // match `config`.
  explicit RunDirectory(const RunConfig& config);
  // Opens an existing run directory without a config.
  static RunDirectory Open(const std::string& dir);

  const std::string& root() const { return root_; }
  std::string Path(const std::string& relative) const;

  // Writes `contents` to `relative` atomically and records it as `name`.
  void Write(const std::string& name, const std::string& relative,
             const std::string& contents);
  bool Has(const std::string& name) const;
  // Path of a recorded artifact after checking its hash; throws when the
  // artifact is missing or stale.
  std::string Verified(const std::string& name) const;
  std::string Read(const std::string& name) const;
  const nlohmann::json& manifest() const { return manifest_; }

 private:
  RunDirectory() = default;
  void SaveManifest() const;

  std::string root_;
  nlohmann::json manifest_;
};

int CmdTrainClean(const RunConfig& config);
int CmdGenMaterial(const RunConfig& config);
int CmdEmbed(const RunConfig& config);

struct VerifyOptions {
  std::string channel = "blackbox";  // blackbox, whitebox or extract
  std::string suspect;  // checkpoint path; defaults to the run's own model
  std::string remote;   // shell command speaking the line protocol
  std::string label;    // suffix for the report file name
};
// Returns kExitOk when owned and kExitNotOwned otherwise.
int CmdVerify(const RunConfig& config, const VerifyOptions& options,
              VerificationReport* report = nullptr);

// finetune, replace-head, prune, forge-trigger, forge-sanet or all.
int CmdAttack(const RunConfig& config, const std::string& attack);
int CmdConceal(const RunConfig& config);
// Summarises every report of the run directory into Markdown and JSON.
int CmdReport(const std::string& run_dir);

// Writes <kind>-train/test/extra.jsonl into `out_dir`.
void MakeCorpusFiles(const std::string& kind, uint64_t seed, int n_train,
                     int n_test, int n_extra, const std::string& out_dir);

}  // namespace textmark

#endif  // TEXTMARK_RUN_H_
