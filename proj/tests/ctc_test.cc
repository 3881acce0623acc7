// tests/ctc_test.cc

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
#include <limits>

#include <gtest/gtest.h>

#include "ctc_oracle.h"
#include "gradcheck.h"
#include "sita/ctc.h"

namespace sita {
namespace {

using testing::BruteForceLogLikelihood;
using testing::RandomLogPosteriors;

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix Rows(std::initializer_list<std::initializer_list<double>> probs) {
  const auto cols = static_cast<Eigen::Index>(probs.begin()->size());
  Matrix m(static_cast<Eigen::Index>(probs.size()), cols);
  Eigen::Index r = 0;
  for (const auto &row : probs) {
    Eigen::Index c = 0;
    for (double p : row) m(r, c++) = std::log(p);
    ++r;
  }
  return m;
}

TEST(Collapse, Examples) {
  EXPECT_EQ(Collapse({1, 1, 0, 2}), (Labels{1, 2}));
  EXPECT_EQ(Collapse({1, 0, 1}), (Labels{1, 1}));
  EXPECT_EQ(Collapse({0, 0}), Labels{});
}

TEST(Vocabulary, EncodeDecode) {
  const Vocabulary v = Vocabulary::FromWords({"lia1", "ma2"});
  EXPECT_EQ(v.size(), 7);
  EXPECT_EQ(v.Decode(v.Encode("ma2")), "ma2");
  EXPECT_THROW(v.Encode("z"), Error);
  EXPECT_THROW(Vocabulary({"a", "a"}), Error);
}

TEST(CtcLikelihood, SingleFrame) {
  EXPECT_NEAR(CtcLogLikelihood(Rows({{0.3, 0.5, 0.2}}), {1}), std::log(0.5), 1e-12);
}

TEST(CtcLikelihood, TwoFramesUniform) {
  const double u = 1.0 / 3.0;
  EXPECT_NEAR(CtcLogLikelihood(Rows({{u, u, u}, {u, u, u}}), {1}), std::log(u), 1e-12);
}

TEST(CtcLikelihood, RepeatNeedsBlank) {
  const Matrix lp = Rows({{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}, {0.1, 0.7, 0.2}});
  EXPECT_NEAR(CtcLogLikelihood(lp, {1, 1}), std::log(0.5 * 0.6 * 0.7), 1e-12);
}

TEST(CtcLikelihood, EmptyTargetIsAllBlank) {
  const Matrix lp = Rows({{0.2, 0.8}, {0.5, 0.5}});
  EXPECT_NEAR(CtcLogLikelihood(lp, {}), std::log(0.1), 1e-12);
}

TEST(CtcLikelihood, InfeasibleTarget) {
  const Matrix lp = Rows({{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_EQ(CtcLogLikelihood(lp, {1, 1}), -kInf);
  EXPECT_THROW(CtcGradient(lp, {1, 1}), Error);
  EXPECT_EQ(CtcMinFrames({1, 1}), 3);
  EXPECT_EQ(CtcMinFrames({1, 2}), 2);
}

TEST(CtcLikelihood, MalformedRows) {
  Matrix bad = Rows({{0.5, 0.6}});
  EXPECT_THROW(CtcLogLikelihood(bad, {1}), Error);
  EXPECT_THROW(CtcLogLikelihood(Rows({{0.5, 0.5}}), {3}), Error);
}

TEST(CtcLikelihood, MatchesBruteForce) {
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const int t_len = 1 + static_cast<int>(rng.Index(5));
    const int n_out = 2 + static_cast<int>(rng.Index(3));
    const int y_len = static_cast<int>(rng.Index(4));
    Labels y;
    for (int j = 0; j < y_len; ++j) y.push_back(1 + static_cast<int>(rng.Index(n_out - 1)));
    const Matrix lp = RandomLogPosteriors(rng, t_len, n_out);
    const double dp = CtcLogLikelihood(lp, y);
    const double bf = BruteForceLogLikelihood(lp, y);
    if (bf == -kInf) {
      ASSERT_EQ(dp, -kInf);
    } else {
      ASSERT_NEAR(dp, bf, 1e-9);
      ASSERT_LE(dp, 0.0);
    }
  }
}

TEST(CtcLikelihood, ForwardBackwardConsistency) {
  Rng rng(32);
  for (int i = 0; i < 100; ++i) {
    const int t_len = 4 + static_cast<int>(rng.Index(8));
    const Labels y{1, 2, 2};
    const Matrix lp = RandomLogPosteriors(rng, t_len, 3);
    const CtcLattice lat = ComputeCtcLattice(lp, y);
    ASSERT_LE(lat.log_alpha.maxCoeff(), 1e-12);
    for (int t = 0; t < t_len; ++t) {
      double total = 0.0;
      for (Eigen::Index s = 0; s < lat.log_alpha.rows(); ++s)
        total += std::exp(lat.log_alpha(s, t) + lat.log_beta(s, t) -
                          lp(t, lat.expanded_target[static_cast<std::size_t>(s)]));
      ASSERT_NEAR(std::log(total), lat.log_likelihood, 1e-8);
    }
  }
}

TEST(CtcGradient, MatchesFiniteDifferences) {
  Rng rng(33);
  for (int i = 0; i < 500; ++i) ASSERT_LT(testing::CtcGradError(rng), 1e-4);
}

TEST(CtcGradient, RowsSumToZero) {
  Rng rng(34);
  const Matrix lp = RandomLogPosteriors(rng, 7, 4);
  const Matrix g = CtcGradient(lp, {1, 3, 1});
  for (Eigen::Index t = 0; t < g.rows(); ++t) EXPECT_NEAR(g.row(t).sum(), 0.0, 1e-10);
}

TEST(CtcGradient, ZeroAtCertainPath) {
  // Near-deterministic posteriors realizing (1, 2) via path 1 1 0 2.
  Matrix logits = Matrix::Constant(4, 3, -40.0);
  logits(0, 1) = logits(1, 1) = logits(2, 0) = logits(3, 2) = 40.0;
  const Matrix lp = LogSoftmaxRows(logits);
  EXPECT_NEAR(CtcLogLikelihood(lp, {1, 2}), 0.0, 1e-12);
  EXPECT_LT(CtcGradient(lp, {1, 2}).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decode, PeakedPosteriorsMatchGreedy) {
  Rng rng(35);
  for (int i = 0; i < 50; ++i) {
    const int t_len = 1 + static_cast<int>(rng.Index(8));
    Matrix logits = Matrix::Constant(t_len, 4, 0.0);
    for (int t = 0; t < t_len; ++t) logits(t, static_cast<Eigen::Index>(rng.Index(4))) = 50.0;
    const Matrix lp = LogSoftmaxRows(logits);
    const Hypothesis greedy = GreedyDecode(lp);
    for (int beam : {1, 2, 8}) ASSERT_EQ(BeamSearchDecode(lp, beam).labels, greedy.labels);
  }
}

TEST(Decode, BeamOneOnBlankFreePeakedEqualsGreedy) {
  Rng rng(36);
  for (int i = 0; i < 50; ++i) {
    Matrix logits = Matrix::Constant(5, 4, 0.0);
    for (int t = 0; t < 5; ++t) logits(t, 1 + static_cast<Eigen::Index>(rng.Index(3))) = 30.0;
    const Matrix lp = LogSoftmaxRows(logits);
    ASSERT_EQ(BeamSearchDecode(lp, 1).labels, GreedyDecode(lp).labels);
  }
}

TEST(Decode, FullBeamMatchesExhaustiveArgmax) {
  Rng rng(37);
  for (int i = 0; i < 50; ++i) {
    const int t_len = 1 + static_cast<int>(rng.Index(4));
    const int n_out = 2 + static_cast<int>(rng.Index(2));
    const Matrix lp = RandomLogPosteriors(rng, t_len, n_out);
    const auto all = testing::AllLabelSequences(n_out, t_len);
    const Hypothesis oracle = testing::ExhaustiveBest(lp, all);
    const Hypothesis beam = BeamSearchDecode(lp, static_cast<int>(all.size()));
    ASSERT_EQ(beam.labels, oracle.labels);
    ASSERT_NEAR(beam.score, oracle.score, 1e-9);
  }
}

TEST(Decode, LexiconSelectsFavouredEntry) {
  const Vocabulary v = Vocabulary::FromWords({"liab", "lias"});
  const Labels liab = v.Encode("liab"), lias = v.Encode("lias");
  // Path l i a b with blanks between frames, softened around the target.
  const Labels path{liab[0], kBlank, liab[1], kBlank, liab[2], kBlank, liab[3]};
  Matrix logits = Matrix::Zero(static_cast<Eigen::Index>(path.size()), v.size());
  for (std::size_t t = 0; t < path.size(); ++t)
    logits(static_cast<Eigen::Index>(t), path[t]) = 3.0;
  const Matrix lp = LogSoftmaxRows(logits);
  const std::vector<Labels> lexicon{liab, lias};
  const Hypothesis h = BeamSearchDecode(lp, 16, &lexicon);
  EXPECT_EQ(v.Decode(h.labels), "liab");
  EXPECT_GT(CtcLogLikelihood(lp, liab), CtcLogLikelihood(lp, lias));
  EXPECT_NEAR(h.score, CtcLogLikelihood(lp, liab), 1e-9);
}

TEST(Decode, NoFeasibleLexiconEntry) {
  const Matrix lp = Rows({{0.5, 0.25, 0.25}});
  const std::vector<Labels> lexicon{{1, 2, 1}};
  const Hypothesis h = BeamSearchDecode(lp, 4, &lexicon);
  EXPECT_TRUE(h.labels.empty());
  EXPECT_EQ(h.score, -kInf);
  EXPECT_THROW(BeamSearchDecode(lp, 0), Error);
}

}  // namespace
}  // namespace sita
