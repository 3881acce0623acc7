// include/sita/pipeline.h

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

#ifndef SITA_PIPELINE_H_
#define SITA_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sita/corpus.h"
#include "sita/distill.h"
#include "sita/encoder.h"
#include "sita/eval.h"
#include "sita/losses.h"

namespace sita {

// A missing prerequisite or a malformed request; the CLI exits with code 2.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

struct EvalSettings {
  PoolingMode retrieval_pooling = PoolingMode::Max();
  PoolingMode geometry_pooling = PoolingMode::Mean();
  int beam_width = 16;
  std::vector<double> semitone_shifts = {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};
  int max_e3_pairs = 2000;

  bool operator==(const EvalSettings &) const = default;
};

struct RunConfig {
  std::string run_id = "sita-desk";
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "run";

  CorpusSpec corpus;
  SplitPolicy::Kind split = SplitPolicy::Kind::kCoverage;
  std::string held_out_speaker;
  AugmentConfig augment;

  StackConfig stack;  // hidden_dim, n_tones and n_outputs are derived
  Stage1TrainConfig stage1;
  OptimizerConfig teacher_optimizer;
  KdConfig kd;
  OptimizerConfig stage2_optimizer;
  EvalSettings eval;

  RunConfig();

  void Validate() const;
  nlohmann::ordered_json ToJson() const;
  // Keys missing from `j` keep their defaults; unknown keys are rejected.
  static RunConfig FromJson(const nlohmann::json &j);
  static RunConfig Load(const std::filesystem::path &path);

  std::uint64_t Seed(std::string_view stream) const;
  CorpusSpec ResolvedCorpus() const;
  StackConfig ResolvedStack(int n_outputs) const;

  bool operator==(const RunConfig &) const = default;
};

// Artifact locations inside a run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path lexicon() const { return root / "corpus" / "lexicon.txt"; }
  std::filesystem::path init_checkpoint() const { return root / "init.ckpt"; }
  std::filesystem::path stage1_checkpoint() const { return root / "stage1.ckpt"; }
  std::filesystem::path stage1_trace() const { return root / "stage1_trace.csv"; }
  std::filesystem::path teacher_checkpoint() const { return root / "teacher.ckpt"; }
  std::filesystem::path teacher_trace() const { return root / "teacher_trace.csv"; }
  std::filesystem::path teacher_cache() const { return root / "teacher_cache"; }
  std::filesystem::path stage2_checkpoint() const { return root / "stage2.ckpt"; }
  std::filesystem::path stage2_trace() const { return root / "stage2_trace.csv"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path report_dir() const { return root / "report"; }
};

std::vector<Token> SplitTokens(const std::vector<Token> &tokens, Split split);
Vocabulary CorpusVocabulary(const std::vector<Token> &tokens);
std::vector<std::string> CorpusLexicon(const std::vector<Token> &tokens);

// Mean per-utterance CTC loss (negative log-likelihood) over the tokens whose
// target fits their frame count.
double MeanCtcLoss(const std::vector<Token> &tokens, const EncoderStack &stack,
                   const Vocabulary &vocab);

TeacherCache BuildTeacherCache(const std::vector<Token> &tokens, const EncoderStack &teacher);
void WriteTeacherCache(const std::filesystem::path &dir, const TeacherCache &cache);
TeacherCache ReadTeacherCache(const std::filesystem::path &dir,
                              const std::vector<Token> &tokens);

std::vector<std::string> EvalKinds();

// The commands write under config.output_dir and print a short summary to
// `log`.
void CmdGen(const RunConfig &config, std::ostream &log);
// stage: "1", "teacher" or "2".
void CmdTrain(const RunConfig &config, const std::string &stage, std::ostream &log);
void CmdEval(const RunConfig &config, const std::string &kind, std::ostream &log,
             const std::filesystem::path &checkpoint = {});
void CmdReport(const RunConfig &config, std::ostream &log);

}  // namespace sita

#endif  // SITA_PIPELINE_H_
