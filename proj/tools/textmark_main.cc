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

// textmark: command-line entry point for the watermarking pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <openssl/rand.h>

#include "CLI11.hpp"
#include "textmark/material.h"
#include "textmark/run.h"
#include "textmark/verification.h"

namespace {

using textmark::RunConfig;

RunConfig LoadConfig(const std::string& path, const std::string& output_dir) {
  RunConfig config = RunConfig::Load(path);
  if (!output_dir.empty()) {
    config.output_dir = std::filesystem::absolute(output_dir).string();
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-channel watermarking for text classifiers"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--output-dir", output_dir,
                    "Override the config's output_dir");
  };

  auto* train_clean = app.add_subcommand("train-clean", "Train the clean model");
  add_config(train_clean);
  auto* gen_material =
      app.add_subcommand("gen-material", "Generate trigger set, auth set, keys");
  add_config(gen_material);
  auto* embed = app.add_subcommand("embed", "Embed the watermark");
  add_config(embed);

  textmark::VerifyOptions verify_options;
  auto* verify = app.add_subcommand("verify", "Verify ownership of a suspect");
  add_config(verify);
  verify->add_option("--channel", verify_options.channel)
      ->check(CLI::IsMember({"blackbox", "whitebox", "extract"}));
  verify->add_option("--suspect", verify_options.suspect,
                     "Suspect checkpoint (default: the run's own model)");
  verify->add_option("--remote", verify_options.remote,
                     "Shell command answering queries on stdin/stdout");
  verify->add_option("--label", verify_options.label,
                     "Suffix for the report file");

  std::string attack_name = "all";
  auto* attack = app.add_subcommand("attack", "Run adversary simulations");
  add_config(attack);
  attack->add_option("--attack", attack_name)
      ->check(CLI::IsMember({"finetune", "replace-head", "prune",
                             "forge-trigger", "forge-sanet", "all"}));

  auto* conceal = app.add_subcommand("conceal", "Concealment evaluation");
  add_config(conceal);

  std::string run_dir;
  auto* report = app.add_subcommand("report", "Summarise a run directory");
  report->add_option("--run", run_dir, "Run directory")->required();

  auto* pipeline = app.add_subcommand(
      "pipeline", "train-clean, gen-material, embed and black-box verify");
  add_config(pipeline);

  std::string kind = "sentiment", corpus_out = "data";
  uint64_t corpus_seed = 1;
  int n_train = 2000, n_test = 500, n_extra = 2000;
  auto* make_corpus =
      app.add_subcommand("make-corpus", "Write synthetic corpora as JSONL");
  make_corpus->add_option("--kind", kind)
      ->check(CLI::IsMember({"sentiment", "topic"}));
  make_corpus->add_option("--seed", corpus_seed);
  make_corpus->add_option("--train", n_train);
  make_corpus->add_option("--test", n_test);
  make_corpus->add_option("--extra", n_extra);
  make_corpus->add_option("--out", corpus_out, "Output directory");

  std::string key_out;
  std::optional<uint64_t> key_seed;
  auto* keygen = app.add_subcommand("keygen", "Write a fresh HMAC key file");
  keygen->add_option("--out", key_out)->required();
  keygen->add_option("--seed", key_seed,
                     "Derive the key from a seed (reproducible demos only)");

  std::string serve_checkpoint, serve_vocab;
  auto* serve = app.add_subcommand(
      "serve", "Answer line-protocol queries on stdin/stdout");
  serve->add_option("--checkpoint", serve_checkpoint)
      ->required()
      ->check(CLI::ExistingFile);
  serve->add_option("--vocab", serve_vocab)
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share the generic error code; --help still exits 0.
    return app.exit(e) == 0 ? textmark::kExitOk : textmark::kExitError;
  }

  try {
    if (*make_corpus) {
      textmark::MakeCorpusFiles(kind, corpus_seed, n_train, n_test, n_extra,
                                corpus_out);
      return textmark::kExitOk;
    }
    if (*keygen) {
      std::vector<uint8_t> key;
      if (key_seed) {
        key = textmark::GenerateKappa1(*key_seed);
      } else {
        key.resize(32);
        if (RAND_bytes(key.data(), static_cast<int>(key.size())) != 1) {
          throw textmark::Error("system random generator failed");
        }
      }
      textmark::WriteKeyFile(key_out, key);
      return textmark::kExitOk;
    }
    if (*serve) {
      textmark::HostModel model = textmark::HostModel::FromCheckpoint(
          textmark::LoadCheckpoint(serve_checkpoint));
      textmark::Vocabulary vocab =
          textmark::Vocabulary::FromJson(textmark::ReadFile(serve_vocab));
      textmark::ServeLineProtocol(model, vocab, stdin, stdout);
      return textmark::kExitOk;
    }
    if (*report) return textmark::CmdReport(run_dir);

    RunConfig config = LoadConfig(config_path, output_dir);
    if (*train_clean) return textmark::CmdTrainClean(config);
    if (*gen_material) return textmark::CmdGenMaterial(config);
    if (*embed) return textmark::CmdEmbed(config);
    if (*verify) return textmark::CmdVerify(config, verify_options);
    if (*attack) return textmark::CmdAttack(config, attack_name);
    if (*conceal) return textmark::CmdConceal(config);
    if (*pipeline) {
      textmark::CmdTrainClean(config);
      textmark::CmdGenMaterial(config);
      textmark::CmdEmbed(config);
      return textmark::CmdVerify(config, textmark::VerifyOptions{});
    }
  } catch (const std::exception& e) {
    std::cerr << "textmark: error: " << e.what() << std::endl;
    return textmark::kExitError;
  }
  return textmark::kExitError;
}
