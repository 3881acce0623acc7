// include/sita/encoder.h

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

#ifndef SITA_ENCODER_H_
#define SITA_ENCODER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sita/corpus.h"
#include "sita/ctc.h"
#include "sita/distill.h"
#include "sita/losses.h"
#include "sita/math.h"

namespace sita {

enum class InitKind { kUniform, kIdentity };

// Blocks are indexed 1..n_blocks from the bottom; h^(l) is the output of block
// l and h^(0) the input features.
struct StackConfig {
  int n_blocks = 8;
  int hidden_dim = 16;
  int feature_layer = 7;
  int frozen_blocks = 4;  // bottom blocks never updated
  int n_tones = 7;
  int n_outputs = 2;  // CTC outputs including the blank
  std::uint64_t seed = 0;
  InitKind init = InitKind::kUniform;
  // Block weights are drawn from U(-s, s) / sqrt(hidden_dim).
  double init_scale = 0.3;

  void Validate() const;
  bool operator==(const StackConfig &) const = default;
};

// h_out = h + tanh(h W^T + b), applied frame by frame.
struct Block {
  Matrix weight;  // D x D
  Vector bias;    // D
};

struct Affine {
  Matrix weight;  // out x D
  Vector bias;    // out
  Matrix Apply(const Matrix &h) const {
    return (h * weight.transpose()).rowwise() + bias.transpose();
  }
};

// Non-owning view of one parameter group.
struct ParamRef {
  std::string name;
  double *data;
  Eigen::Index size;
};

using GradMap = std::map<std::string, Vector>;

class EncoderStack {
 public:
  EncoderStack() = default;
  static EncoderStack Init(const StackConfig &config);

  const StackConfig &config() const { return config_; }
  const std::vector<Block> &blocks() const { return blocks_; }
  const Affine &ctc_head() const { return ctc_head_; }
  const ToneHead &tone_head() const { return tone_head_; }
  ToneHead &mutable_tone_head() { return tone_head_; }

  // h^(1) .. h^(upto).
  std::vector<Matrix> Forward(const Matrix &features, int upto) const;
  // Runs blocks first..last (1-based, inclusive) on h^(first - 1).
  Matrix Run(const Matrix &h, int first, int last) const;
  // pool(h^(layer)) normalized to unit length.
  Embedding ExtractEmbedding(const Matrix &features, int layer,
                             const PoolingMode &mode) const;
  // CTC logits from the top block.
  Matrix CtcLogits(const Matrix &features) const;

  // Parameter groups in canonical order: block{k}.W, block{k}.b,
  // ctc_head.W, ctc_head.b, tone_head.W, tone_head.b.
  std::vector<ParamRef> Params();
  std::vector<std::string> GroupNames() const;
  // FNV-1a over the bytes of the named groups (all groups when empty).
  std::uint64_t Checksum(const std::vector<std::string> &groups = {}) const;

  // Names of the groups belonging to blocks first..last.
  static std::vector<std::string> BlockGroups(int first, int last);

  void Save(const std::filesystem::path &path) const;
  static EncoderStack Load(const std::filesystem::path &path);

 private:
  friend class BlockTape;
  StackConfig config_;
  std::vector<Block> blocks_;
  Affine ctc_head_;
  ToneHead tone_head_;
};

// Activations recorded by a forward pass over a contiguous block range, for
// backpropagation.
class BlockTape {
 public:
  BlockTape(const EncoderStack &stack, const Matrix &input, int first, int last);
  const Matrix &output() const { return output_; }
  // Accumulates parameter gradients into `grads` and returns dL/d input.
  Matrix Backward(const Matrix &grad_output, GradMap &grads) const;

 private:
  const EncoderStack &stack_;
  int first_, last_;
  std::vector<Matrix> inputs_;       // input of each block
  std::vector<Matrix> activations_;  // tanh output of each block
  Matrix output_;
};

struct OptimizerConfig {
  double learning_rate = 5e-4;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  int warmup_steps = 200;
  int total_steps = 2000;
  int batch_size = 4;
  int accumulation_steps = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void Validate() const;
  bool operator==(const OptimizerConfig &) const = default;
};

// Adam with decoupled weight decay, linear warmup then a constant rate, and
// global-norm clipping. Only the groups it was built with are touched.
class AdamW {
 public:
  AdamW(const OptimizerConfig &config, std::vector<std::string> groups);
  // Clips `grads` in place and updates the stack. Returns the norm before and
  // after clipping.
  std::pair<double, double> Step(EncoderStack &stack, GradMap &grads);
  double CurrentRate() const;
  int steps_taken() const { return step_; }

 private:
  OptimizerConfig config_;
  std::vector<std::string> groups_;
  std::map<std::string, Vector> m_, v_;
  int step_ = 0;
};

struct TraceRow {
  int step = 0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> components;
  double grad_norm = 0.0;
  double clipped_norm = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  void WriteCsv(const std::filesystem::path &path) const;
};

struct Stage1TrainConfig {
  Stage1Config loss;
  ToneLossVariant variant = ToneLossVariant::kInfoNce;
  MarginConfig margin;
  MiningConfig mining;
  PoolingMode speaker_pooling = PoolingMode::Max();
  PoolingMode tone_pooling = PoolingMode::Mean();
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  bool operator==(const Stage1TrainConfig &) const = default;
};

// Stage 1: updates blocks frozen_blocks+1 .. feature_layer and the tone head.
// `tokens` is the training pool (original tokens plus views).
TrainTrace TrainStage1(const std::vector<Token> &tokens, EncoderStack &stack,
                       const Stage1TrainConfig &config);

using TeacherCache = std::map<std::string, Matrix>;

struct CtcTrainConfig {
  KdConfig kd;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

// CTC (+ KD) training of blocks first_trainable..n_blocks and the CTC head.
// Stage 2 uses first_trainable = feature_layer + 1; the teacher uses
// frozen_blocks + 1. A teacher cache is required when kd.delta < 1.
TrainTrace TrainCtc(const std::vector<Token> &tokens, const Vocabulary &vocab,
                    EncoderStack &stack, int first_trainable,
                    const CtcTrainConfig &config,
                    const TeacherCache *teacher = nullptr);

TrainTrace TrainStage2(const std::vector<Token> &tokens, const Vocabulary &vocab,
                       EncoderStack &stack, const CtcTrainConfig &config,
                       const TeacherCache *teacher = nullptr);

}  // namespace sita

#endif  // SITA_ENCODER_H_
