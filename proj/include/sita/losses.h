// include/sita/losses.h

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

#ifndef SITA_LOSSES_H_
#define SITA_LOSSES_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sita/math.h"

namespace sita {

// A scalar loss plus gradients keyed by parameter group. Vector groups are
// stored as single-column matrices.
struct LossReport {
  double value = 0.0;
  std::map<std::string, Eigen::MatrixXd> grads;

  bool Has(const std::string &group) const { return grads.count(group) > 0; }
  const Eigen::MatrixXd &Grad(const std::string &group) const;
  // value += weight * other.value, and the same for every gradient group.
  void Accumulate(const LossReport &other, double weight);
  void AddGrad(const std::string &group, const Eigen::MatrixXd &g);
};

struct Stage1Config {
  double tau_g = 0.07;
  double tau_t = 0.07;
  int n_negatives = 20;
  double alpha = 0.5;
  double lambda_cls = 1.0;
  // When false the contrastive negatives are treated as constants.
  bool negatives_receive_gradient = true;

  void Validate() const;
  bool operator==(const Stage1Config &) const = default;
};

struct MarginConfig {
  double m_hard = -0.1;
  double m_soft = 0.1;
  double lambda_attr = 1.0;
  double lambda_hard = 0.5;
  double lambda_soft = 1.0;

  void Validate() const;
  bool operator==(const MarginConfig &) const = default;
};

enum class ToneLossVariant { kInfoNce, kMargin };

// Linear tone classifier p(t | z) = softmax(W z + b).
struct ToneHead {
  Matrix weight;  // n_tones x D
  Vector bias;    // n_tones

  static ToneHead Zeros(int n_tones, int dim);
  int n_tones() const { return static_cast<int>(bias.size()); }
  Vector Logits(const Vector &z) const { return weight * z + bias; }
};

// The losses take embedding values as given (sim(u, v) = u.v); callers pass
// unit vectors. Gradients are with respect to those values.

// -log(exp(s+) / (exp(s+) + sum_n exp(s_n-))), s = sim / tau_g.
// Groups: anchor, positive, negatives[k].
LossReport SpeakerInfoNce(const Embedding &anchor, const Embedding &positive,
                          const std::vector<Embedding> &negatives,
                          const Stage1Config &cfg);

// -(1/|P|) sum_{j in P} log(exp(s_j) / Z), Z over P, H and S; s = sim / tau_t.
// Groups: anchor, positives[j], hard_negatives[j], soft_negatives[j].
LossReport ToneInfoNce(const Embedding &anchor,
                       const std::vector<Embedding> &positives,
                       const std::vector<Embedding> &hard,
                       const std::vector<Embedding> &soft,
                       const Stage1Config &cfg);

// Cross-entropy of the tone head at 1-based label `tone`.
// Groups: anchor, tone_head.W, tone_head.b.
LossReport ToneClassifierCe(const Embedding &z, const ToneHead &head, int tone);

// lambda_attr * mean_P(-s) + lambda_hard * mean_H [s - m_hard]+ +
// lambda_soft * mean_S [s - m_soft]+; empty sets contribute nothing and the
// hinge subgradient at the kink is 0. Same groups as ToneInfoNce.
LossReport MarginToneLoss(const Embedding &anchor,
                          const std::vector<Embedding> &positives,
                          const std::vector<Embedding> &hard,
                          const std::vector<Embedding> &soft,
                          const MarginConfig &cfg);

// An embedding tagged with the key its gradient is reported under. Keys are
// chosen by the caller; equal keys accumulate.
struct KeyedEmbedding {
  std::string key;
  Embedding embedding;
};

struct SpeakerTerm {
  KeyedEmbedding anchor;
  KeyedEmbedding positive;
  std::vector<KeyedEmbedding> negatives;
};

struct ToneTerm {
  KeyedEmbedding anchor;
  std::vector<KeyedEmbedding> positives;
  std::vector<KeyedEmbedding> hard_negatives;
  std::vector<KeyedEmbedding> soft_negatives;
};

// One anchor of a Stage-1 batch. Either term may be missing (no cross-gender
// positive, or no tone positive); the classifier term rides with the tone term.
struct Stage1Example {
  int tone = 1;
  std::optional<SpeakerTerm> speaker;
  std::optional<ToneTerm> tone_term;
};

struct Stage1Breakdown {
  double speaker = 0.0;  // mean l1 over anchors with a speaker term
  double tone = 0.0;     // mean (l2 + lambda l3) over anchors with a tone term
  double contrastive_tone = 0.0;  // mean l2 (or margin loss)
  double classifier = 0.0;        // mean l3
  int speaker_anchors = 0;
  int tone_anchors = 0;
};

// alpha * mean(l1) + (1 - alpha) * mean(l2 + lambda l3). Gradients are keyed by
// the embedding keys plus tone_head.W and tone_head.b.
LossReport Stage1Loss(const std::vector<Stage1Example> &batch,
                      const ToneHead &head, const Stage1Config &cfg,
                      ToneLossVariant variant = ToneLossVariant::kInfoNce,
                      const MarginConfig &margin = {},
                      Stage1Breakdown *breakdown = nullptr);

}  // namespace sita

#endif  // SITA_LOSSES_H_
