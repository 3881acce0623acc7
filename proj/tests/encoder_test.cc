// tests/encoder_test.cc

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

#include <cmath>

#include <gtest/gtest.h>

#include "sita/encoder.h"
#include "test_util.h"

namespace sita {
namespace {

using testing::RandomMatrix;

StackConfig SmallStack(InitKind init = InitKind::kUniform) {
  StackConfig c;
  c.n_blocks = 4;
  c.hidden_dim = 8;
  c.feature_layer = 3;
  c.frozen_blocks = 1;
  c.n_tones = 4;
  c.n_outputs = 5;
  c.seed = 11;
  c.init = init;
  c.init_scale = 1.0;
  return c;
}

CorpusSpec SmallCorpus() {
  CorpusSpec s;
  s.n_base_words = 4;
  s.n_tones = 4;
  s.min_frames = 6;
  s.max_frames = 8;
  s.feature_dim = 8;
  s.seed = 3;
  return s;
}

TEST(StackConfig, Validation) {
  EXPECT_NO_THROW(SmallStack().Validate());
  StackConfig c = SmallStack();
  c.feature_layer = 5;
  EXPECT_THROW(c.Validate(), Error);
  c = SmallStack();
  c.frozen_blocks = 3;
  EXPECT_THROW(c.Validate(), Error);
  c = SmallStack();
  c.feature_layer = 0;
  EXPECT_THROW(c.Validate(), Error);
}

TEST(Forward, IdentityInitPassesInputThrough) {
  const EncoderStack s = EncoderStack::Init(SmallStack(InitKind::kIdentity));
  Rng rng(1);
  const Matrix x = RandomMatrix(rng, 5, 8);
  const auto hs = s.Forward(x, 4);
  ASSERT_EQ(hs.size(), 4u);
  for (const auto &h : hs) EXPECT_EQ(h, x);
}

TEST(Forward, PrefixConsistent) {
  const EncoderStack s = EncoderStack::Init(SmallStack());
  Rng rng(2);
  const Matrix x = RandomMatrix(rng, 6, 8);
  const auto all = s.Forward(x, 4);
  const auto part = s.Forward(x, 3);
  for (std::size_t k = 0; k < part.size(); ++k) EXPECT_EQ(all[k], part[k]);
  EXPECT_EQ(s.Run(all[1], 3, 4), all[3]);
}

TEST(Forward, DeterministicAcrossInits) {
  Rng rng(3);
  const Matrix x = RandomMatrix(rng, 6, 8);
  const auto a = EncoderStack::Init(SmallStack()).Forward(x, 4);
  const auto b = EncoderStack::Init(SmallStack()).Forward(x, 4);
  EXPECT_EQ(a.back(), b.back());
  EXPECT_EQ(EncoderStack::Init(SmallStack()).Checksum(),
            EncoderStack::Init(SmallStack()).Checksum());
}

TEST(Forward, Errors) {
  const EncoderStack s = EncoderStack::Init(SmallStack());
  try {
    s.Forward(Matrix::Ones(3, 7), 2);
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
  }
  EXPECT_THROW(s.Forward(Matrix(0, 8), 2), Error);
  EXPECT_THROW(s.Forward(Matrix::Ones(3, 8), 5), Error);
  EXPECT_THROW(s.ExtractEmbedding(Matrix::Ones(3, 8), 0, PoolingMode::Mean()), Error);
}

TEST(Embedding, ConstantStatesNormalize) {
  const EncoderStack s = EncoderStack::Init(SmallStack(InitKind::kIdentity));
  Vector c(8);
  c << 1, -2, 3, 0.5, 0, 0, 1, 1;
  const Matrix x = Matrix::Ones(4, 1) * c.transpose();
  for (const auto &mode : {PoolingMode::Mean(), PoolingMode::Max(), PoolingMode::Weighted()}) {
    const Embedding e = s.ExtractEmbedding(x, 2, mode);
    EXPECT_LT((e.values() - c.normalized()).norm(), 1e-12);
  }
  EXPECT_THROW(s.ExtractEmbedding(Matrix::Zero(4, 8), 2, PoolingMode::Mean()), Error);
}

TEST(Embedding, UnitNormAndCompositionOracle) {
  const EncoderStack s = EncoderStack::Init(SmallStack());
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Matrix x = RandomMatrix(rng, 3 + static_cast<int>(rng.Index(6)), 8);
    const int layer = 1 + static_cast<int>(rng.Index(4));
    const Embedding e = s.ExtractEmbedding(x, layer, PoolingMode::Max());
    ASSERT_TRUE(e.normalized());
    ASSERT_NEAR(e.values().norm(), 1.0, 1e-6);
    const Vector manual = Pool(s.Forward(x, layer).back(), PoolingMode::Max()).normalized();
    ASSERT_LT((e.values() - manual).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Checkpoint, RoundTrip) {
  testing::TempDir dir("ckpt");
  EncoderStack s = EncoderStack::Init(SmallStack());
  Rng rng(5);
  s.mutable_tone_head().weight = RandomMatrix(rng, 4, 8);
  s.Save(dir.path() / "a.ckpt");
  const EncoderStack back = EncoderStack::Load(dir.path() / "a.ckpt");
  EXPECT_EQ(back.config(), s.config());
  EXPECT_EQ(back.Checksum(), s.Checksum());
  EXPECT_EQ(back.GroupNames(), s.GroupNames());
  back.Save(dir.path() / "b.ckpt");
  EXPECT_EQ(testing::ReadFile(dir.path() / "a.ckpt"), testing::ReadFile(dir.path() / "b.ckpt"));
}

TEST(Checkpoint, BadMagicAndTruncation) {
  testing::TempDir dir("ckpt_bad");
  {
    std::ofstream os(dir.path() / "x.ckpt", std::ios::binary);
    os << "NOPE and more bytes";
  }
  try {
    EncoderStack::Load(dir.path() / "x.ckpt");
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
  EncoderStack::Init(SmallStack()).Save(dir.path() / "y.ckpt");
  const std::string bytes = testing::ReadFile(dir.path() / "y.ckpt");
  {
    std::ofstream os(dir.path() / "y.ckpt", std::ios::binary);
    os << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(EncoderStack::Load(dir.path() / "y.ckpt"), Error);
  EXPECT_THROW(EncoderStack::Load(dir.path() / "missing.ckpt"), Error);
}

TEST(Params, CanonicalGroupOrder) {
  const EncoderStack s = EncoderStack::Init(SmallStack());
  const auto names = s.GroupNames();
  ASSERT_EQ(names.size(), 12u);
  EXPECT_EQ(names.front(), "block1.W");
  EXPECT_EQ(names[1], "block1.b");
  EXPECT_EQ(names[8], "ctc_head.W");
  EXPECT_EQ(names.back(), "tone_head.b");
  EXPECT_EQ(EncoderStack::BlockGroups(2, 3),
            (std::vector<std::string>{"block2.W", "block2.b", "block3.W", "block3.b"}));
}

TEST(BlockTape, GradientsMatchFiniteDifferences) {
  EncoderStack s = EncoderStack::Init(SmallStack());
  Rng rng(6);
  const Matrix x = RandomMatrix(rng, 4, 8);
  const Matrix w = RandomMatrix(rng, 4, 8);
  const BlockTape tape(s, x, 2, 4);
  GradMap grads;
  const Matrix gx = tape.Backward(w, grads);

  auto loss_of_input = [&](const Vector &flat) {
    return (s.Run(testing::Unflatten(flat, 4, 8), 2, 4).array() * w.array()).sum();
  };
  const Vector nx = testing::NumericGradient(loss_of_input, testing::Flatten(x));
  EXPECT_LT(testing::RelativeError(testing::Flatten(gx), nx), 1e-6);

  for (auto &p : s.Params()) {
    if (!grads.count(p.name)) continue;
    Eigen::Map<Vector> param(p.data, p.size);
    const Vector keep = param;
    auto loss = [&](const Vector &v) {
      param = v;
      const double out = (s.Run(x, 2, 4).array() * w.array()).sum();
      param = keep;
      return out;
    };
    const Vector numeric = testing::NumericGradient(loss, keep);
    EXPECT_LT(testing::RelativeError(grads.at(p.name), numeric), 1e-6) << p.name;
  }
  EXPECT_FALSE(grads.count("block1.W"));
  EXPECT_TRUE(grads.count("block4.b"));
}

TEST(AdamW, ClipsToGlobalNorm) {
  EncoderStack s = EncoderStack::Init(SmallStack());
  OptimizerConfig cfg;
  cfg.warmup_steps = 0;
  AdamW opt(cfg, EncoderStack::BlockGroups(2, 3));
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    GradMap g;
    for (const auto &name : EncoderStack::BlockGroups(2, 3))
      g[name] = testing::RandomVector(rng, name.back() == 'W' ? 64 : 8, 5.0);
    const auto [before, after] = opt.Step(s, g);
    ASSERT_GT(before, cfg.grad_clip);
    ASSERT_LE(after, cfg.grad_clip + 1e-9);
  }
}

TEST(AdamW, WarmupThenConstant) {
  OptimizerConfig cfg;
  cfg.warmup_steps = 4;
  cfg.total_steps = 10;
  EncoderStack s = EncoderStack::Init(SmallStack());
  AdamW opt(cfg, {"block2.b"});
  std::vector<double> rates;
  for (int i = 0; i < 6; ++i) {
    GradMap g;
    opt.Step(s, g);
    rates.push_back(opt.CurrentRate());
  }
  EXPECT_DOUBLE_EQ(rates[0], cfg.learning_rate * 0.25);
  EXPECT_DOUBLE_EQ(rates[3], cfg.learning_rate);
  EXPECT_DOUBLE_EQ(rates[5], cfg.learning_rate);
}

std::vector<Token> TrainPool() {
  auto tokens = Generate(SmallCorpus());
  for (auto &t : tokens) t.split = Split::kTrain;
  return tokens;
}

Stage1TrainConfig Stage1Steps(int steps) {
  Stage1TrainConfig c;
  c.optimizer.total_steps = steps;
  c.optimizer.warmup_steps = 0;
  c.optimizer.batch_size = 2;
  c.optimizer.accumulation_steps = 1;
  c.seed = 9;
  return c;
}

std::vector<std::string> Minus(std::vector<std::string> all, const std::vector<std::string> &drop) {
  std::erase_if(all, [&](const std::string &n) {
    return std::find(drop.begin(), drop.end(), n) != drop.end();
  });
  return all;
}

TEST(TrainStage1, ZeroStepsLeavesParameters) {
  EncoderStack s = EncoderStack::Init(SmallStack());
  const auto before = s.Checksum();
  const TrainTrace trace = TrainStage1(TrainPool(), s, Stage1Steps(0));
  EXPECT_TRUE(trace.rows.empty());
  EXPECT_EQ(s.Checksum(), before);
}

TEST(TrainStage1, OnlyUpdateableGroupsChange) {
  EncoderStack s = EncoderStack::Init(SmallStack());
  const std::vector<std::string> trainable = [] {
    auto g = EncoderStack::BlockGroups(2, 3);
    g.push_back("tone_head.W");
    g.push_back("tone_head.b");
    return g;
  }();
  const auto frozen = Minus(s.GroupNames(), trainable);
  const auto frozen_before = s.Checksum(frozen);
  const auto trainable_before = s.Checksum(trainable);
  const TrainTrace trace = TrainStage1(TrainPool(), s, Stage1Steps(1));
  ASSERT_EQ(trace.rows.size(), 1u);
  EXPECT_EQ(s.Checksum(frozen), frozen_before);
  EXPECT_NE(s.Checksum(trainable), trainable_before);
  for (const auto &name : trainable)
    EXPECT_NE(s.Checksum({name}), EncoderStack::Init(SmallStack()).Checksum({name})) << name;
}

TEST(TrainStage1, FrozenChecksumStableAndDeterministic) {
  EncoderStack a = EncoderStack::Init(SmallStack());
  EncoderStack b = EncoderStack::Init(SmallStack());
  const auto frozen = Minus(a.GroupNames(), [] {
    auto g = EncoderStack::BlockGroups(2, 3);
    g.push_back("tone_head.W");
    g.push_back("tone_head.b");
    return g;
  }());
  const auto before = a.Checksum(frozen);
  const TrainTrace ta = TrainStage1(TrainPool(), a, Stage1Steps(15));
  TrainStage1(TrainPool(), b, Stage1Steps(15));
  EXPECT_EQ(a.Checksum(frozen), before);
  EXPECT_EQ(a.Checksum(), b.Checksum());
  ASSERT_EQ(ta.rows.size(), 15u);
  for (const auto &row : ta.rows) {
    EXPECT_TRUE(std::isfinite(row.loss));
    EXPECT_LE(row.clipped_norm, 1.0 + 1e-9);
  }
}

TEST(TrainStage1, NoUsableAnchors) {
  auto pool = TrainPool();
  pool.resize(1);
  EncoderStack s = EncoderStack::Init(SmallStack());
  EXPECT_THROW(TrainStage1(pool, s, Stage1Steps(1)), Error);
}

CtcTrainConfig CtcSteps(int steps, double delta) {
  CtcTrainConfig c;
  c.kd.delta = delta;
  c.optimizer.total_steps = steps;
  c.optimizer.warmup_steps = 0;
  c.optimizer.batch_size = 2;
  c.optimizer.accumulation_steps = 1;
  c.seed = 5;
  return c;
}

Vocabulary SmallVocab(const std::vector<Token> &tokens) {
  std::vector<std::string> words;
  for (const auto &t : tokens) words.push_back(t.word);
  return Vocabulary::FromWords(words);
}

StackConfig CtcStack(const Vocabulary &v) {
  StackConfig c = SmallStack();
  c.n_outputs = v.size();
  return c;
}

TEST(TrainStage2, FreezesLayerEllEmbeddings) {
  const auto pool = TrainPool();
  const Vocabulary vocab = SmallVocab(pool);
  EncoderStack teacher = EncoderStack::Init(CtcStack(vocab));
  TrainCtc(pool, vocab, teacher, 2, CtcSteps(5, 1.0));
  TeacherCache cache;
  for (const auto &t : pool) cache[t.id] = teacher.CtcLogits(t.features);

  EncoderStack s = EncoderStack::Init(CtcStack(vocab));
  const auto lower = Minus(s.GroupNames(), [] {
    auto g = EncoderStack::BlockGroups(4, 4);
    g.push_back("ctc_head.W");
    g.push_back("ctc_head.b");
    return g;
  }());
  const auto before = s.Checksum(lower);
  std::vector<Vector> emb_before;
  for (const auto &t : pool)
    emb_before.push_back(s.ExtractEmbedding(t.features, 3, PoolingMode::Max()).values());
  const TrainTrace trace = TrainStage2(pool, vocab, s, CtcSteps(10, 0.7), &cache);
  EXPECT_EQ(trace.rows.size(), 10u);
  EXPECT_EQ(s.Checksum(lower), before);
  EXPECT_NE(s.Checksum({"block4.W", "ctc_head.W"}),
            EncoderStack::Init(CtcStack(vocab)).Checksum({"block4.W", "ctc_head.W"}));
  for (std::size_t i = 0; i < pool.size(); ++i)
    ASSERT_EQ(s.ExtractEmbedding(pool[i].features, 3, PoolingMode::Max()).values(),
              emb_before[i]);
}

TEST(TrainStage2, KdWithoutTeacherIsError) {
  const auto pool = TrainPool();
  const Vocabulary vocab = SmallVocab(pool);
  EncoderStack s = EncoderStack::Init(CtcStack(vocab));
  try {
    TrainStage2(pool, vocab, s, CtcSteps(1, 0.7));
    FAIL();
  } catch (const Error &e) {
    EXPECT_STREQ(e.what(), "distillation enabled (delta < 1) but no teacher cache given");
  }
  EXPECT_NO_THROW(TrainStage2(pool, vocab, s, CtcSteps(1, 1.0)));
}

TEST(TrainStage2, VocabularyMustMatchHead) {
  const auto pool = TrainPool();
  EncoderStack s = EncoderStack::Init(SmallStack());
  EXPECT_THROW(TrainStage2(pool, SmallVocab(pool), s, CtcSteps(1, 1.0)), Error);
}

}  // namespace
}  // namespace sita
