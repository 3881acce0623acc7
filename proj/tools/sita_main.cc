// tools/sita_main.cc

// Copyright 2026  The sita-desk authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sita/pipeline.h"

namespace {

// SITA_LOG=quiet silences the per-command summary.
std::ostream &LogStream() {
  static std::ostringstream sink;
  const char *level = std::getenv("SITA_LOG");
  if (level != nullptr && std::string(level) == "quiet") return sink;
  return std::cout;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"sita: speaker-invariant, tone-aware representation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, stage, kind, checkpoint;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--config", config_path, "run configuration (JSON)");
    cmd->add_option("--out", out_dir, "run directory, overrides output_dir");
    cmd->add_option("--seed", seed, "global seed, overrides the config");
  };

  auto *gen = app.add_subcommand("gen", "generate the synthetic corpus");
  add_common(gen);
  auto *train = app.add_subcommand("train", "train one stage");
  add_common(train);
  train->add_option("--stage", stage, "1, teacher or 2")
      ->required()
      ->check(CLI::IsMember({"1", "2", "teacher"}));
  auto *eval = app.add_subcommand("eval", "evaluate the latest checkpoint");
  add_common(eval);
  eval->add_option("--kind", kind, "evaluation kind")
      ->required()
      ->check(CLI::IsMember(sita::EvalKinds()));
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate");
  auto *report = app.add_subcommand("report", "merge eval outputs");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    sita::RunConfig config =
        config_path.empty() ? sita::RunConfig() : sita::RunConfig::Load(config_path);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (seed) config.seed = *seed;
    std::ostream &log = LogStream();
    if (gen->parsed()) {
      sita::CmdGen(config, log);
    } else if (train->parsed()) {
      sita::CmdTrain(config, stage, log);
    } else if (eval->parsed()) {
      sita::CmdEval(config, kind, log, checkpoint);
    } else {
      sita::CmdReport(config, log);
    }
  } catch (const sita::PreconditionError &e) {
    std::cerr << "sita: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "sita: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
