// include/sita/ctc.h

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

#ifndef SITA_CTC_H_
#define SITA_CTC_H_

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sita/math.h"

namespace sita {

using Labels = std::vector<int>;

inline constexpr int kBlank = 0;

// Output symbols; index 0 is the blank, lexical symbols start at 1.
class Vocabulary {
 public:
  Vocabulary() = default;
  // One symbol per distinct byte of the given words, sorted.
  static Vocabulary FromWords(const std::vector<std::string> &words);
  explicit Vocabulary(std::vector<std::string> symbols);

  // Number of outputs including the blank.
  int size() const { return static_cast<int>(symbols_.size()) + 1; }
  const std::vector<std::string> &symbols() const { return symbols_; }
  Labels Encode(const std::string &word) const;
  std::string Decode(const Labels &labels) const;

 private:
  std::vector<std::string> symbols_;
};

// Log-domain trellis over the blank-interleaved target. Both recursions
// include the emission of the current frame.
struct CtcLattice {
  Labels expanded_target;  // blank, y1, blank, y2, ..., blank
  Matrix log_alpha;        // (2|y| + 1) x T
  Matrix log_beta;         // (2|y| + 1) x T
  double log_likelihood = 0.0;
};

// Removes consecutive repeats, then blanks.
Labels Collapse(const Labels &path);

// Rejects rows whose log-sum-exp departs from 0 by more than 1e-6, and labels
// outside 1..K-1.
void CheckLogPosteriors(const Matrix &log_posteriors);

CtcLattice ComputeCtcLattice(const Matrix &log_posteriors, const Labels &target);

// log p(y | x); -inf when no alignment of length T exists.
double CtcLogLikelihood(const Matrix &log_posteriors, const Labels &target);

// Gradient of -log p(y | x) with respect to the logits whose log-softmax is
// `log_posteriors`. Throws on infeasible targets.
Matrix CtcGradient(const Matrix &log_posteriors, const Labels &target);

// Minimum frames needed to emit `target`: its length plus one blank between
// every pair of equal neighbours.
int CtcMinFrames(const Labels &target);

struct Hypothesis {
  Labels labels;
  double score = 0.0;  // log probability
};

Hypothesis GreedyDecode(const Matrix &log_posteriors);

// Prefix beam search with prefix merging. With a lexicon only prefixes of
// lexicon entries survive and the best complete entry is returned (empty with
// score -inf when none survives). Ties go to the lexicographically smaller
// label sequence.
Hypothesis BeamSearchDecode(const Matrix &log_posteriors, int beam_width,
                            const std::vector<Labels> *lexicon = nullptr);

}  // namespace sita

#endif  // SITA_CTC_H_
