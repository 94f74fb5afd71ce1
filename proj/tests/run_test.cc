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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "textmark/common.h"
#include "textmark/material.h"

namespace textmark {
namespace {

namespace fs = std::filesystem;

fs::path FreshDir(const std::string& tag) {
  const int seed = ::testing::UnitTest::GetInstance()->random_seed();
  fs::path dir = fs::temp_directory_path() /
                 ("textmark_run_" + tag + "_" + std::to_string(seed));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Corpora, key file and a small run config under `work`. The run directory
// is work/run.
nlohmann::json SmallConfig(const fs::path& work, int n_train) {
  const fs::path corpora = work / "corpora";
  MakeCorpusFiles("sentiment", 3, n_train, 100, n_train, corpora.string());
  MakeCorpusFiles("topic", 4, 200, 60, 4, corpora.string());
  WriteKeyFile((work / "owner.key").string(), GenerateKappa1(5));
  return {
      {"corpus",
       {{"train", "corpora/sentiment-train.jsonl"},
        {"test", "corpora/sentiment-test.jsonl"},
        {"adversary", "corpora/sentiment-extra.jsonl"},
        {"cross_task_train", "corpora/topic-train.jsonl"},
        {"cross_task_test", "corpora/topic-test.jsonl"}}},
      {"model",
       {{"arch", "textcnn"},
        {"embed_dim", 8},
        {"hidden_dim", 8},
        {"filters_per_width", 4},
        {"max_len", 48},
        {"seed", 3}}},
      {"train", {{"epochs", 1}, {"seed", 4}, {"settle_epochs", 1}}},
      {"material",
       {{"m_per_class", n_train / 200},
        {"auth_pairs", 20},
        {"key_file", "owner.key"},
        {"owner_info", "run test owner"}}},
      {"attack",
       {{"finetune_epochs", 1},
        {"head_epochs", 1},
        {"forge_epochs", 1},
        {"prune_rates", {0.0, 0.5}},
        {"forge", {{"m_per_class", 1}, {"auth_pairs", 10}}}}},
      {"conceal", {{"baseline_m", 10}}},
      {"output_dir", "run"}};
}

RunConfig WriteConfig(const fs::path& work, const nlohmann::json& j) {
  WriteFileAtomic((work / "config.json").string(), j.dump(2));
  return RunConfig::Load((work / "config.json").string());
}

// Exit status of a shell command run inside `cwd`; output goes to `log`.
int Shell(const fs::path& cwd, const std::string& command,
          const fs::path& log) {
  std::string full = "cd '" + cwd.string() + "' && " + command + " >>'" +
                     log.string() + "' 2>&1";
  int status = std::system(full.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Cli() { return std::string("'") + TEXTMARK_CLI + "'"; }

// Path -> sha256 of every regular file below `root`, skipping `skip`.
std::map<std::string, std::string> Tree(const fs::path& root,
                                        const fs::path& skip) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), root);
    if (!skip.empty() && rel.begin()->string() == skip.string()) continue;
    out[rel.string()] = Sha256File(entry.path().string());
  }
  return out;
}

TEST(RunConfig, JsonRoundTripResolvesPaths) {
  fs::path work = FreshDir("config");
  RunConfig c = WriteConfig(work, SmallConfig(work, 400));
  EXPECT_EQ(c.output_dir, (work / "run").string());
  EXPECT_EQ(c.key_file, (work / "owner.key").string());
  EXPECT_EQ(c.attack_train.optimizer, OptimizerKind::kSgd);
  RunConfig back = RunConfig::FromJson(c.ToJson(), "/elsewhere");
  EXPECT_EQ(back.ToJson(), c.ToJson());
  nlohmann::json missing = SmallConfig(work, 400);
  missing.erase("output_dir");
  EXPECT_THROW(RunConfig::FromJson(missing, work.string()), ParseError);
  fs::remove_all(work);
}

TEST(RunDirectory, StaleArtifactsAreRefused) {
  fs::path work = FreshDir("stale");
  RunConfig c = WriteConfig(work, SmallConfig(work, 400));
  RunDirectory run(c);
  run.Write("note", "reports/note.txt", "first");
  EXPECT_EQ(run.Read("note"), "first");
  RunDirectory reopened = RunDirectory::Open(c.output_dir);
  EXPECT_EQ(reopened.Read("note"), "first");
  std::ofstream(run.Path("reports/note.txt")) << "tampered";
  EXPECT_THROW(run.Verified("note"), IntegrityError);
  EXPECT_THROW(run.Verified("absent"), Error);
  fs::remove(run.Path("reports/note.txt"));
  EXPECT_THROW(run.Verified("note"), Error);
  fs::remove_all(work);
}

TEST(RunDirectory, RejectsADifferentConfig) {
  fs::path work = FreshDir("mismatch");
  RunConfig c = WriteConfig(work, SmallConfig(work, 400));
  RunDirectory first(c);
  RunDirectory same(c);  // identical config is fine
  RunConfig other = c;
  other.train.epochs += 1;
  EXPECT_THROW(RunDirectory{other}, Error);
  fs::remove_all(work);
}

TEST(Commands, GenMaterialIsDeterministic) {
  fs::path work = FreshDir("material");
  nlohmann::json j = SmallConfig(work, 400);
  RunConfig a = RunConfig::FromJson(j, work.string());
  j["output_dir"] = "run2";
  RunConfig b = RunConfig::FromJson(j, work.string());
  for (const RunConfig* c : {&a, &b}) {
    ASSERT_EQ(CmdTrainClean(*c), kExitOk);
    ASSERT_EQ(CmdGenMaterial(*c), kExitOk);
  }
  RunDirectory ra = RunDirectory::Open(a.output_dir);
  RunDirectory rb = RunDirectory::Open(b.output_dir);
  for (const char* name :
       {"vocab", "clean_checkpoint", "triggers", "auth", "keys"}) {
    EXPECT_EQ(ra.manifest()["artifacts"][name]["sha256"],
              rb.manifest()["artifacts"][name]["sha256"])
        << name;
  }
  // Regenerating in place reproduces the same files.
  std::string triggers = ra.Read("triggers");
  ASSERT_EQ(CmdGenMaterial(a), kExitOk);
  EXPECT_EQ(RunDirectory::Open(a.output_dir).Read("triggers"), triggers);
  // Embedding refuses material edited after it was recorded.
  std::ofstream(ra.Path("material/auth.jsonl"), std::ios::app) << "\n";
  EXPECT_THROW(CmdEmbed(a), IntegrityError);
  fs::remove_all(work);
}

TEST(Commands, MissingKeyFileIsAnError) {
  fs::path work = FreshDir("nokey");
  nlohmann::json j = SmallConfig(work, 400);
  j["material"]["key_file"] = "absent.key";
  RunConfig c = RunConfig::FromJson(j, work.string());
  ASSERT_EQ(CmdTrainClean(c), kExitOk);
  EXPECT_THROW(CmdGenMaterial(c), Error);
  fs::remove_all(work);
}

// Runs every subcommand through the CLI binary.
TEST(Cli, EndToEnd) {
  fs::path work = FreshDir("cli");
  // 2000 training samples allow 20 triggers, enough for a decision.
  RunConfig config = WriteConfig(work, SmallConfig(work, 2000));
  const fs::path log = FreshDir("cli_log") / "log.txt";
  const auto before = Tree(work, "run");
  const std::string cfg = " --config config.json";

  EXPECT_EQ(Shell(work, Cli() + " verify" + cfg, log), kExitError)
      << "verify before any training must fail";
  for (const char* cmd : {"train-clean", "gen-material", "embed", "attack",
                          "conceal"}) {
    ASSERT_EQ(Shell(work, Cli() + " " + cmd + cfg, log), kExitOk) << cmd;
  }
  ASSERT_EQ(Shell(work, Cli() + " report --run run", log), kExitOk);

  RunDirectory run = RunDirectory::Open(config.output_dir);
  TriggerSet triggers = TriggerSet::FromJsonl(run.Read("triggers"));
  ASSERT_EQ(triggers.items.size(), 20u);

  // A remote that knows every trigger label is owned; one that always
  // answers 0 gets half of them right and is not.
  std::string oracle_script = "while IFS= read -r l; do case \"$l\" in\n";
  for (const TriggerItem& item : triggers.items) {
    std::string quoted;
    for (char c : item.sample.text) {
      quoted += c == '\'' ? std::string("'\\''") : std::string(1, c);
    }
    oracle_script += "'" + quoted + "') echo " + std::to_string(item.target) +
                     " ;;\n";
  }
  oracle_script += "*) echo 0 ;;\nesac; done\n";
  const fs::path oracle = log.parent_path() / "oracle.sh";
  WriteFileAtomic(oracle.string(), oracle_script);
  EXPECT_EQ(Shell(work,
                  Cli() + " verify" + cfg + " --label oracle --remote 'sh " +
                      oracle.string() + "'",
                  log),
            kExitOk);
  EXPECT_EQ(Shell(work,
                  Cli() + " verify" + cfg +
                      " --label constant --remote 'while read l; do echo 0; "
                      "done'",
                  log),
            kExitNotOwned);

  // The serve subcommand answers exactly like the in-process client.
  const std::string serve = Cli() + " serve --checkpoint " +
                            run.Path("checkpoints/watermarked.ckpt") +
                            " --vocab " + run.Path("material/vocab.json");
  int local_code = Shell(work, Cli() + " verify" + cfg + " --label local", log);
  int served_code = Shell(work,
                          Cli() + " verify" + cfg +
                              " --label served --remote \"" + serve + "\"",
                          log);
  EXPECT_EQ(local_code, served_code);
  RunDirectory after = RunDirectory::Open(config.output_dir);
  nlohmann::json local =
      nlohmann::json::parse(after.Read("report_verify_blackbox_local"));
  nlohmann::json served =
      nlohmann::json::parse(after.Read("report_verify_blackbox_served"));
  EXPECT_EQ(local["metric"], served["metric"]);

  EXPECT_NE(Shell(work, Cli() + " verify" + cfg + " --channel extract", log),
            kExitError);
  EXPECT_EQ(Shell(work,
                  Cli() + " verify" + cfg + " --label clean --suspect " +
                      run.Path("checkpoints/clean.ckpt"),
                  log),
            kExitNotOwned);
  EXPECT_EQ(Shell(work, Cli() + " verify --config absent.json", log),
            kExitError);
  EXPECT_EQ(Shell(work, Cli() + " verify" + cfg + " --channel bogus", log),
            kExitError);

  // Nothing outside the run directory changed.
  EXPECT_EQ(Tree(work, "run"), before);

  // Reports, curves and logs carry key fingerprints only.
  const std::string kappa1_hex = HexEncode(GenerateKappa1(5));
  WatermarkKeys keys = WatermarkKeys::FromJson(after.Read("keys"));
  std::vector<fs::path> public_files = {log};
  for (const char* sub : {"reports", "curves"}) {
    fs::path dir = fs::path(config.output_dir) / sub;
    for (const auto& e : fs::directory_iterator(dir)) {
      public_files.push_back(e.path());
    }
  }
  for (const fs::path& p : public_files) {
    std::string text = ReadFile(p.string());
    EXPECT_EQ(text.find(kappa1_hex), std::string::npos) << p;
    EXPECT_EQ(text.find("kappa2\""), std::string::npos) << p;
    EXPECT_EQ(text.find(keys.ToJson()), std::string::npos) << p;
  }
  std::string extraction =
      RunDirectory::Open(config.output_dir).Read("report_verify_extract");
  EXPECT_NE(extraction.find(keys.Fingerprint()), std::string::npos);

  // Tampering with an artifact makes dependent commands exit with an error.
  std::ofstream(run.Path("material/triggers.jsonl"), std::ios::app) << "\n";
  EXPECT_EQ(Shell(work, Cli() + " verify" + cfg, log), kExitError);
  fs::remove_all(work);
  fs::remove_all(log.parent_path());
}

}  // namespace
}  // namespace textmark
