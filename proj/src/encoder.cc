// src/encoder.cc

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

#include "sita/encoder.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "sita/random.h"

namespace sita {

void StackConfig::Validate() const {
  if (n_blocks < 1) throw Error("stack needs at least one block");
  if (hidden_dim < 1) throw Error("hidden_dim must be positive");
  if (feature_layer < 1 || feature_layer > n_blocks)
    throw Error("feature_layer must lie in 1..n_blocks");
  if (frozen_blocks < 0 || frozen_blocks >= feature_layer)
    throw Error("frozen_blocks must be smaller than feature_layer");
  if (n_tones < 2) throw Error("tone head needs at least two tones");
  if (n_outputs < 2) throw Error("CTC head needs blank plus one symbol");
  if (!(init_scale >= 0.0)) throw Error("init_scale must be non-negative");
}

EncoderStack EncoderStack::Init(const StackConfig &config) {
  config.Validate();
  EncoderStack s;
  s.config_ = config;
  const int dim = config.hidden_dim;
  Rng rng(config.seed);
  const double bound = config.init_scale / std::sqrt(static_cast<double>(dim));
  auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m = Matrix::Zero(rows, cols);
    if (config.init == InitKind::kUniform)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Uniform(-bound, bound);
    return m;
  };
  for (int k = 0; k < config.n_blocks; ++k)
    s.blocks_.push_back({draw(dim, dim), Vector::Zero(dim)});
  s.ctc_head_ = {draw(config.n_outputs, dim), Vector::Zero(config.n_outputs)};
  s.tone_head_ = ToneHead::Zeros(config.n_tones, dim);
  return s;
}

namespace {

void CheckInput(const Matrix &h, int dim) {
  if (h.cols() != dim)
    throw Error("dimension mismatch: frames have " + std::to_string(h.cols()) +
                " channels, stack expects " + std::to_string(dim));
  if (h.rows() == 0) throw Error("empty frame sequence");
}

Matrix BlockActivation(const Block &b, const Matrix &h) {
  return ((h * b.weight.transpose()).rowwise() + b.bias.transpose())
      .array()
      .tanh()
      .matrix();
}

}  // namespace

std::vector<Matrix> EncoderStack::Forward(const Matrix &features, int upto) const {
  CheckInput(features, config_.hidden_dim);
  if (upto < 0 || upto > config_.n_blocks) throw Error("block index out of range");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(upto));
  Matrix h = features;
  for (int k = 1; k <= upto; ++k) {
    h = h + BlockActivation(blocks_[static_cast<std::size_t>(k - 1)], h);
    out.push_back(h);
  }
  return out;
}

Matrix EncoderStack::Run(const Matrix &h_in, int first, int last) const {
  CheckInput(h_in, config_.hidden_dim);
  if (first < 1 || last > config_.n_blocks) {
    if (first <= last) throw Error("block index out of range");
  }
  Matrix h = h_in;
  for (int k = first; k <= last; ++k)
    h = h + BlockActivation(blocks_[static_cast<std::size_t>(k - 1)], h);
  return h;
}

Embedding EncoderStack::ExtractEmbedding(const Matrix &features, int layer,
                                         const PoolingMode &mode) const {
  if (layer < 1 || layer > config_.n_blocks) throw Error("layer out of range");
  return Embedding::Normalized(Pool(Run(features, 1, layer), mode));
}

Matrix EncoderStack::CtcLogits(const Matrix &features) const {
  return ctc_head_.Apply(Run(features, 1, config_.n_blocks));
}

std::vector<ParamRef> EncoderStack::Params() {
  std::vector<ParamRef> out;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const std::string prefix = "block" + std::to_string(k + 1);
    out.push_back({prefix + ".W", blocks_[k].weight.data(), blocks_[k].weight.size()});
    out.push_back({prefix + ".b", blocks_[k].bias.data(), blocks_[k].bias.size()});
  }
  out.push_back({"ctc_head.W", ctc_head_.weight.data(), ctc_head_.weight.size()});
  out.push_back({"ctc_head.b", ctc_head_.bias.data(), ctc_head_.bias.size()});
  out.push_back({"tone_head.W", tone_head_.weight.data(), tone_head_.weight.size()});
  out.push_back({"tone_head.b", tone_head_.bias.data(), tone_head_.bias.size()});
  return out;
}

std::vector<std::string> EncoderStack::GroupNames() const {
  std::vector<std::string> out;
  for (const auto &p : const_cast<EncoderStack *>(this)->Params()) out.push_back(p.name);
  return out;
}

std::vector<std::string> EncoderStack::BlockGroups(int first, int last) {
  std::vector<std::string> out;
  for (int k = first; k <= last; ++k) {
    out.push_back("block" + std::to_string(k) + ".W");
    out.push_back("block" + std::to_string(k) + ".b");
  }
  return out;
}

std::uint64_t EncoderStack::Checksum(const std::vector<std::string> &groups) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto &p : const_cast<EncoderStack *>(this)->Params()) {
    if (!groups.empty() && std::find(groups.begin(), groups.end(), p.name) == groups.end())
      continue;
    const auto *bytes = reinterpret_cast<const unsigned char *>(p.data);
    for (std::size_t i = 0; i < static_cast<std::size_t>(p.size) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// --- checkpoint ----------------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void Put(std::ostream &os, T v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T Get(std::istream &is, const std::string &what) {
  T v{};
  is.read(reinterpret_cast<char *>(&v), sizeof(T));
  if (!is) throw Error("truncated checkpoint while reading " + what);
  return v;
}

}  // namespace

void EncoderStack::Save(const std::filesystem::path &path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os.write("SITC", 4);
  Put<std::uint32_t>(os, kCheckpointVersion);
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(config_.n_blocks));
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(config_.hidden_dim));
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(config_.feature_layer));
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(config_.frozen_blocks));
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(config_.n_tones));
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(config_.n_outputs));
  Put<std::uint32_t>(os, config_.init == InitKind::kIdentity ? 1u : 0u);
  Put<std::uint64_t>(os, config_.seed);
  Put<double>(os, config_.init_scale);
  auto params = const_cast<EncoderStack *>(this)->Params();
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto &p : params) {
    Put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    Put<std::uint64_t>(os, static_cast<std::uint64_t>(p.size));
    os.write(reinterpret_cast<const char *>(p.data),
             static_cast<std::streamsize>(static_cast<std::size_t>(p.size) * sizeof(double)));
  }
  if (!os) throw Error("failed writing " + path.string());
}

EncoderStack EncoderStack::Load(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SITC", 4) != 0)
    throw Error(path.string() + ": not a checkpoint (bad magic)");
  const auto version = Get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  StackConfig cfg;
  cfg.n_blocks = static_cast<int>(Get<std::uint32_t>(is, "n_blocks"));
  cfg.hidden_dim = static_cast<int>(Get<std::uint32_t>(is, "hidden_dim"));
  cfg.feature_layer = static_cast<int>(Get<std::uint32_t>(is, "feature_layer"));
  cfg.frozen_blocks = static_cast<int>(Get<std::uint32_t>(is, "frozen_blocks"));
  cfg.n_tones = static_cast<int>(Get<std::uint32_t>(is, "n_tones"));
  cfg.n_outputs = static_cast<int>(Get<std::uint32_t>(is, "n_outputs"));
  cfg.init = Get<std::uint32_t>(is, "init") == 1u ? InitKind::kIdentity : InitKind::kUniform;
  cfg.seed = Get<std::uint64_t>(is, "seed");
  cfg.init_scale = Get<double>(is, "init_scale");
  EncoderStack s = Init(cfg);
  auto params = s.Params();
  const auto n_groups = Get<std::uint32_t>(is, "group count");
  if (n_groups != params.size()) throw Error(path.string() + ": group count mismatch");
  for (auto &p : params) {
    const auto len = Get<std::uint32_t>(is, "name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is || name != p.name)
      throw Error(path.string() + ": expected group " + p.name + ", found " + name);
    const auto count = Get<std::uint64_t>(is, "element count");
    if (count != static_cast<std::uint64_t>(p.size))
      throw Error(path.string() + ": size mismatch for " + p.name);
    is.read(reinterpret_cast<char *>(p.data),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw Error(path.string() + ": truncated group " + p.name);
  }
  return s;
}

// --- backprop --------------------------------------------------------------------

namespace {

void AddGrad(GradMap &grads, const std::string &name, const double *data,
             Eigen::Index size) {
  auto it = grads.find(name);
  Eigen::Map<const Vector> g(data, size);
  if (it == grads.end()) {
    grads.emplace(name, g);
  } else {
    it->second += g;
  }
}

}  // namespace

BlockTape::BlockTape(const EncoderStack &stack, const Matrix &input, int first,
                     int last)
    : stack_(stack), first_(first), last_(last) {
  CheckInput(input, stack.config().hidden_dim);
  if (first < 1 || last > stack.config().n_blocks)
    if (first <= last) throw Error("block index out of range");
  Matrix h = input;
  for (int k = first; k <= last; ++k) {
    inputs_.push_back(h);
    activations_.push_back(BlockActivation(stack.blocks()[static_cast<std::size_t>(k - 1)], h));
    h = h + activations_.back();
  }
  output_ = std::move(h);
}

Matrix BlockTape::Backward(const Matrix &grad_output, GradMap &grads) const {
  Matrix g = grad_output;
  for (int k = last_; k >= first_; --k) {
    const auto i = static_cast<std::size_t>(k - first_);
    const Block &b = stack_.blocks()[static_cast<std::size_t>(k - 1)];
    const Matrix d_pre =
        (g.array() * (1.0 - activations_[i].array().square())).matrix();
    const Matrix d_w = d_pre.transpose() * inputs_[i];
    const Vector d_b = d_pre.colwise().sum().transpose();
    const std::string prefix = "block" + std::to_string(k);
    AddGrad(grads, prefix + ".W", d_w.data(), d_w.size());
    AddGrad(grads, prefix + ".b", d_b.data(), d_b.size());
    g += d_pre * b.weight;
  }
  return g;
}

// --- optimizer ---------------------------------------------------------------------

void OptimizerConfig::Validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw Error("weight decay must be non-negative");
  if (!(grad_clip > 0.0)) throw Error("grad_clip must be positive");
  if (total_steps < 0 || warmup_steps < 0) throw Error("step counts must be non-negative");
  if (warmup_steps > total_steps) throw Error("warmup_steps exceeds total_steps");
  if (batch_size < 1 || accumulation_steps < 1)
    throw Error("batch size and accumulation steps must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
    throw Error("bad moment-estimator constants");
}

AdamW::AdamW(const OptimizerConfig &config, std::vector<std::string> groups)
    : config_(config), groups_(std::move(groups)) {
  config_.Validate();
}

double AdamW::CurrentRate() const {
  if (config_.warmup_steps == 0) return config_.learning_rate;
  const double frac = std::min(1.0, static_cast<double>(step_) / config_.warmup_steps);
  return config_.learning_rate * frac;
}

std::pair<double, double> AdamW::Step(EncoderStack &stack, GradMap &grads) {
  ++step_;
  double sq = 0.0;
  for (const auto &name : groups_) {
    auto it = grads.find(name);
    if (it != grads.end()) sq += it->second.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double scale = norm > config_.grad_clip ? config_.grad_clip / norm : 1.0;
  double clipped_sq = 0.0;
  for (const auto &name : groups_) {
    auto it = grads.find(name);
    if (it != grads.end()) {
      it->second *= scale;
      clipped_sq += it->second.squaredNorm();
    }
  }

  const double rate = CurrentRate();
  const double bc1 = 1.0 - std::pow(config_.beta1, step_);
  const double bc2 = 1.0 - std::pow(config_.beta2, step_);
  for (auto &p : stack.Params()) {
    if (std::find(groups_.begin(), groups_.end(), p.name) == groups_.end()) continue;
    Eigen::Map<Vector> param(p.data, p.size);
    Vector g = Vector::Zero(p.size);
    if (auto it = grads.find(p.name); it != grads.end()) g = it->second;
    auto &m = m_[p.name];
    auto &v = v_[p.name];
    if (m.size() == 0) {
      m = Vector::Zero(p.size);
      v = Vector::Zero(p.size);
    }
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const Vector update =
        ((m / bc1).array() / ((v / bc2).array().sqrt() + config_.eps)).matrix();
    param -= rate * (update + config_.weight_decay * param);
  }
  return {norm, std::sqrt(clipped_sq)};
}

void TrainTrace::WriteCsv(const std::filesystem::path &path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << "step,loss";
  if (!rows.empty())
    for (const auto &[name, v] : rows.front().components) os << ',' << name;
  os << ",grad_norm,clipped_norm\n";
  os << std::fixed << std::setprecision(6);
  for (const auto &r : rows) {
    os << r.step << ',' << r.loss;
    for (const auto &[name, v] : r.components) os << ',' << v;
    os << ',' << r.grad_norm << ',' << r.clipped_norm << '\n';
  }
}

// --- Stage 1 -----------------------------------------------------------------------

namespace {

void ScaleGrads(GradMap &grads, double s) {
  for (auto &[name, g] : grads) g *= s;
}

// Forward state of one token inside a Stage-1 micro-batch.
struct TokenPass {
  std::unique_ptr<BlockTape> tape;
  Vector speaker_raw, tone_raw;
  Matrix grad_h;
};

}  // namespace

TrainTrace TrainStage1(const std::vector<Token> &tokens, EncoderStack &stack,
                       const Stage1TrainConfig &config) {
  config.loss.Validate();
  config.optimizer.Validate();
  if (config.variant == ToneLossVariant::kMargin) config.margin.Validate();
  const StackConfig &sc = stack.config();
  const int first = sc.frozen_blocks + 1, last = sc.feature_layer;

  TrainTrace trace;
  if (config.optimizer.total_steps == 0) return trace;

  std::vector<std::size_t> pool(tokens.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  MiningConfig mining = config.mining;
  mining.n_negatives = config.loss.n_negatives;
  PairMiner miner(tokens, pool, mining);

  std::set<std::string> words_seen_twice;
  {
    std::map<std::string, int> count;
    for (const auto &t : tokens) ++count[t.word];
    for (const auto &[w, c] : count)
      if (c >= 2) words_seen_twice.insert(w);
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (miner.HasCrossGenderPositive(i) || words_seen_twice.count(tokens[i].word))
      usable.push_back(i);
  if (usable.empty()) throw Error("no usable anchors for Stage 1");

  // Frozen bottom blocks never change, so their output is computed once.
  std::vector<Matrix> frozen_out;
  frozen_out.reserve(tokens.size());
  for (const auto &t : tokens) frozen_out.push_back(stack.Run(t.features, 1, sc.frozen_blocks));

  std::vector<std::string> groups = EncoderStack::BlockGroups(first, last);
  groups.push_back("tone_head.W");
  groups.push_back("tone_head.b");
  AdamW opt(config.optimizer, groups);
  Rng rng(config.seed);

  const int accum = config.optimizer.accumulation_steps;
  for (int step = 1; step <= config.optimizer.total_steps; ++step) {
    GradMap grads;
    double loss = 0.0;
    Stage1Breakdown parts_sum;
    for (int micro = 0; micro < accum; ++micro) {
      std::vector<PairSet> pairs;
      for (int b = 0; b < config.optimizer.batch_size; ++b)
        pairs.push_back(miner.Mine(usable[rng.Index(usable.size())], rng));

      std::map<std::size_t, TokenPass> passes;
      auto touch = [&](std::size_t idx, bool speaker) -> std::string {
        TokenPass &p = passes[idx];
        if (!p.tape)
          p.tape = std::make_unique<BlockTape>(stack, frozen_out[idx], first, last);
        Vector &raw = speaker ? p.speaker_raw : p.tone_raw;
        if (raw.size() == 0)
          raw = Pool(p.tape->output(), speaker ? config.speaker_pooling : config.tone_pooling);
        return (speaker ? "s:" : "t:") + std::to_string(idx);
      };
      auto keyed = [&](std::size_t idx, bool speaker) {
        const std::string key = touch(idx, speaker);
        const TokenPass &p = passes[idx];
        return KeyedEmbedding{key, Embedding::Normalized(speaker ? p.speaker_raw : p.tone_raw)};
      };

      std::vector<Stage1Example> batch;
      for (const PairSet &ps : pairs) {
        Stage1Example ex;
        ex.tone = tokens[ps.anchor].tone;
        if (ps.cross_gender_positive) {
          SpeakerTerm s{keyed(ps.anchor, true), keyed(*ps.cross_gender_positive, true), {}};
          for (std::size_t n : ps.contrastive_negatives) s.negatives.push_back(keyed(n, true));
          ex.speaker = std::move(s);
        }
        if (!ps.tone_positives.empty()) {
          ToneTerm t{keyed(ps.anchor, false), {}, {}, {}};
          for (std::size_t j : ps.tone_positives) t.positives.push_back(keyed(j, false));
          for (std::size_t j : ps.hard_negatives) t.hard_negatives.push_back(keyed(j, false));
          for (std::size_t j : ps.soft_negatives) t.soft_negatives.push_back(keyed(j, false));
          ex.tone_term = std::move(t);
        }
        if (ex.speaker || ex.tone_term) batch.push_back(std::move(ex));
      }
      if (batch.empty()) continue;

      Stage1Breakdown parts;
      const LossReport report = Stage1Loss(batch, stack.tone_head(), config.loss,
                                           config.variant, config.margin, &parts);
      loss += report.value;
      parts_sum.speaker += parts.speaker;
      parts_sum.tone += parts.tone;
      parts_sum.contrastive_tone += parts.contrastive_tone;
      parts_sum.classifier += parts.classifier;

      for (const auto &[key, g] : report.grads) {
        if (key == "tone_head.W") {
          const Matrix rm = g;  // row-major like the parameter
          AddGrad(grads, key, rm.data(), rm.size());
          continue;
        }
        if (key == "tone_head.b") {
          AddGrad(grads, key, g.data(), g.size());
          continue;
        }
        const bool speaker = key[0] == 's';
        const std::size_t idx = std::stoul(key.substr(2));
        TokenPass &p = passes.at(idx);
        const Vector &raw = speaker ? p.speaker_raw : p.tone_raw;
        const Vector d_raw = NormalizeBackward(raw, g.col(0));
        const Matrix d_h = PoolBackward(p.tape->output(),
                                        speaker ? config.speaker_pooling : config.tone_pooling,
                                        d_raw);
        if (p.grad_h.size() == 0) {
          p.grad_h = d_h;
        } else {
          p.grad_h += d_h;
        }
      }
      for (auto &[idx, p] : passes)
        if (p.grad_h.size() != 0) p.tape->Backward(p.grad_h, grads);
    }
    ScaleGrads(grads, 1.0 / accum);
    const auto [pre, post] = opt.Step(stack, grads);
    TraceRow row;
    row.step = step;
    row.loss = loss / accum;
    row.components = {{"speaker", parts_sum.speaker / accum},
                      {"tone", parts_sum.tone / accum},
                      {"tone_contrastive", parts_sum.contrastive_tone / accum},
                      {"tone_classifier", parts_sum.classifier / accum}};
    row.grad_norm = pre;
    row.clipped_norm = post;
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

// --- CTC training -------------------------------------------------------------------

TrainTrace TrainCtc(const std::vector<Token> &tokens, const Vocabulary &vocab,
                    EncoderStack &stack, int first_trainable,
                    const CtcTrainConfig &config, const TeacherCache *teacher) {
  config.kd.Validate();
  config.optimizer.Validate();
  const StackConfig &sc = stack.config();
  if (first_trainable < 1 || first_trainable > sc.n_blocks + 1)
    throw Error("first trainable block out of range");
  if (vocab.size() != sc.n_outputs)
    throw Error("vocabulary size does not match the CTC head");
  if (config.kd.enabled() && teacher == nullptr)
    throw Error("distillation enabled (delta < 1) but no teacher cache given");

  TrainTrace trace;
  if (config.optimizer.total_steps == 0) return trace;

  std::vector<std::size_t> usable;
  std::vector<Labels> targets(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    targets[i] = vocab.Encode(tokens[i].word);
    if (CtcMinFrames(targets[i]) > tokens[i].frames()) continue;
    if (config.kd.enabled()) {
      auto it = teacher->find(tokens[i].id);
      if (it == teacher->end())
        throw Error("teacher cache has no logits for token " + tokens[i].id);
      if (it->second.rows() != tokens[i].frames() || it->second.cols() != sc.n_outputs)
        throw Error("teacher logits for " + tokens[i].id + " have the wrong shape");
    }
    usable.push_back(i);
  }
  if (usable.empty()) throw Error("no token has a feasible CTC target");

  std::vector<Matrix> frozen_out;
  frozen_out.reserve(tokens.size());
  for (const auto &t : tokens) frozen_out.push_back(stack.Run(t.features, 1, first_trainable - 1));

  std::vector<std::string> groups = EncoderStack::BlockGroups(first_trainable, sc.n_blocks);
  groups.push_back("ctc_head.W");
  groups.push_back("ctc_head.b");
  AdamW opt(config.optimizer, groups);
  Rng rng(config.seed);
  const int accum = config.optimizer.accumulation_steps;
  const int batch_size = config.optimizer.batch_size;

  for (int step = 1; step <= config.optimizer.total_steps; ++step) {
    GradMap grads;
    double loss = 0.0, ctc_sum = 0.0, kd_sum = 0.0;
    for (int micro = 0; micro < accum; ++micro) {
      for (int b = 0; b < batch_size; ++b) {
        const std::size_t idx = usable[rng.Index(usable.size())];
        const BlockTape tape(stack, frozen_out[idx], first_trainable, sc.n_blocks);
        const Matrix &h = tape.output();
        const Matrix logits = stack.ctc_head().Apply(h);
        const Matrix log_post = LogSoftmaxRows(logits);
        LossReport ctc;
        ctc.value = -CtcLogLikelihood(log_post, targets[idx]);
        ctc.AddGrad("student_logits", CtcGradient(log_post, targets[idx]));
        LossReport kd;
        if (config.kd.enabled()) kd = KdLoss(teacher->at(tokens[idx].id), logits, config.kd);
        const LossReport total = Stage2Loss(ctc, kd, config.kd);
        const double w = 1.0 / (batch_size * accum);
        loss += w * total.value * accum;
        ctc_sum += ctc.value / batch_size;
        kd_sum += kd.value / batch_size;

        const Matrix g = w * Matrix(total.Grad("student_logits"));
        const Matrix d_w = g.transpose() * h;
        const Vector d_b = g.colwise().sum().transpose();
        AddGrad(grads, "ctc_head.W", d_w.data(), d_w.size());
        AddGrad(grads, "ctc_head.b", d_b.data(), d_b.size());
        if (first_trainable <= sc.n_blocks) tape.Backward(g * stack.ctc_head().weight, grads);
      }
    }
    const auto [pre, post] = opt.Step(stack, grads);
    TraceRow row;
    row.step = step;
    row.loss = loss / accum;
    row.components = {{"ctc", ctc_sum / accum}, {"kd", kd_sum / accum}};
    row.grad_norm = pre;
    row.clipped_norm = post;
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

TrainTrace TrainStage2(const std::vector<Token> &tokens, const Vocabulary &vocab,
                       EncoderStack &stack, const CtcTrainConfig &config,
                       const TeacherCache *teacher) {
  return TrainCtc(tokens, vocab, stack, stack.config().feature_layer + 1, config, teacher);
}

}  // namespace sita
