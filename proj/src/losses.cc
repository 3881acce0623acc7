// src/losses.cc

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

#include "sita/losses.h"

#include <algorithm>
#include <cmath>

namespace sita {

const Eigen::MatrixXd &LossReport::Grad(const std::string &group) const {
  auto it = grads.find(group);
  if (it == grads.end()) throw Error("no gradient group '" + group + "'");
  return it->second;
}

void LossReport::AddGrad(const std::string &group, const Eigen::MatrixXd &g) {
  auto it = grads.find(group);
  if (it == grads.end()) {
    grads.emplace(group, g);
  } else {
    if (it->second.rows() != g.rows() || it->second.cols() != g.cols())
      throw Error("gradient shape mismatch for group '" + group + "'");
    it->second += g;
  }
}

void LossReport::Accumulate(const LossReport &other, double weight) {
  value += weight * other.value;
  for (const auto &[name, g] : other.grads) AddGrad(name, weight * g);
}

void Stage1Config::Validate() const {
  if (!(tau_g > 0.0) || !(tau_t > 0.0))
    throw Error("temperatures must be strictly positive");
  if (n_negatives < 1) throw Error("need at least one negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
  if (!(lambda_cls >= 0.0)) throw Error("lambda_cls must be non-negative");
}

void MarginConfig::Validate() const {
  if (!(m_hard < m_soft)) throw Error("margin config requires m_hard < m_soft");
}

ToneHead ToneHead::Zeros(int n_tones, int dim) {
  return {Matrix::Zero(n_tones, dim), Vector::Zero(n_tones)};
}

namespace {

void CheckDims(const Embedding &anchor, const std::vector<Embedding> &others) {
  if (anchor.dim() == 0) throw Error("empty embedding");
  for (const auto &e : others)
    if (e.dim() != anchor.dim()) throw Error("embedding dimension mismatch");
}

std::string Indexed(const char *group, std::size_t k) {
  return std::string(group) + "[" + std::to_string(k) + "]";
}

// log(1 + exp(r)) without overflow or loss of small values.
double Softplus(double r) {
  return r > 0.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r));
}

// -log softmax_j over `logits`, evaluated relative to logits(j) so that values
// near zero keep their precision. Competitors are summed in sorted order.
double NegLogSoftmaxAt(const Vector &logits, Eigen::Index j) {
  std::vector<double> rel;
  rel.reserve(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index k = 0; k < logits.size(); ++k)
    if (k != j) rel.push_back(logits(k) - logits(j));
  if (rel.empty()) return 0.0;
  std::sort(rel.begin(), rel.end());
  return Softplus(LogSumExp(rel));
}

}  // namespace

LossReport SpeakerInfoNce(const Embedding &anchor, const Embedding &positive,
                          const std::vector<Embedding> &negatives,
                          const Stage1Config &cfg) {
  if (negatives.empty()) throw Error("speaker InfoNCE needs at least one negative");
  if (!(cfg.tau_g > 0.0)) throw Error("temperatures must be strictly positive");
  CheckDims(anchor, negatives);
  CheckDims(anchor, {positive});

  const Vector &a = anchor.values();
  const std::size_t n = negatives.size();
  Vector logits(static_cast<Eigen::Index>(n + 1));
  logits(0) = a.dot(positive.values()) / cfg.tau_g;
  for (std::size_t k = 0; k < n; ++k)
    logits(static_cast<Eigen::Index>(k + 1)) = a.dot(negatives[k].values()) / cfg.tau_g;

  LossReport r;
  r.value = NegLogSoftmaxAt(logits, 0);
  // dL/ds_k = p_k - [k == positive]; p_k = exp(s_k - s+ - value).
  Vector p_neg(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    p_neg(i) = std::exp(logits(i + 1) - logits(0) - r.value);
  }
  const double d_pos = -p_neg.sum();
  Vector grad_anchor = d_pos / cfg.tau_g * positive.values();
  r.AddGrad("positive", d_pos / cfg.tau_g * a);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = p_neg(static_cast<Eigen::Index>(k)) / cfg.tau_g;
    grad_anchor += w * negatives[k].values();
    r.AddGrad(Indexed("negatives", k), w * a);
  }
  r.AddGrad("anchor", grad_anchor);
  return r;
}

LossReport ToneInfoNce(const Embedding &anchor,
                       const std::vector<Embedding> &positives,
                       const std::vector<Embedding> &hard,
                       const std::vector<Embedding> &soft,
                       const Stage1Config &cfg) {
  if (positives.empty()) throw Error("no tone positives");
  if (!(cfg.tau_t > 0.0)) throw Error("temperatures must be strictly positive");
  CheckDims(anchor, positives);
  CheckDims(anchor, hard);
  CheckDims(anchor, soft);

  struct Member {
    const Embedding *e;
    const char *group;
    std::size_t index;
  };
  std::vector<Member> members;
  for (std::size_t j = 0; j < positives.size(); ++j)
    members.push_back({&positives[j], "positives", j});
  for (std::size_t j = 0; j < hard.size(); ++j)
    members.push_back({&hard[j], "hard_negatives", j});
  for (std::size_t j = 0; j < soft.size(); ++j)
    members.push_back({&soft[j], "soft_negatives", j});

  const Vector &a = anchor.values();
  Vector logits(static_cast<Eigen::Index>(members.size()));
  for (std::size_t j = 0; j < members.size(); ++j)
    logits(static_cast<Eigen::Index>(j)) = a.dot(members[j].e->values()) / cfg.tau_t;
  const double log_z = LogSumExp(logits);
  const double n_pos = static_cast<double>(positives.size());

  LossReport r;
  for (std::size_t j = 0; j < positives.size(); ++j)
    r.value += NegLogSoftmaxAt(logits, static_cast<Eigen::Index>(j)) / n_pos;
  // With a single positive its weight is written as minus the competitors' mass.
  double competitors = 0.0;
  if (positives.size() == 1)
    for (std::size_t j = 1; j < members.size(); ++j)
      competitors += std::exp(logits(static_cast<Eigen::Index>(j)) - log_z);
  Vector grad_anchor = Vector::Zero(a.size());
  for (std::size_t j = 0; j < members.size(); ++j) {
    double ds = std::exp(logits(static_cast<Eigen::Index>(j)) - log_z);
    if (positives.size() == 1 && j == 0) ds = -competitors;
    else if (j < positives.size()) ds -= 1.0 / n_pos;
    const double w = ds / cfg.tau_t;
    grad_anchor += w * members[j].e->values();
    r.AddGrad(Indexed(members[j].group, members[j].index), w * a);
  }
  r.AddGrad("anchor", grad_anchor);
  return r;
}

LossReport ToneClassifierCe(const Embedding &z, const ToneHead &head, int tone) {
  if (tone < 1 || tone > head.n_tones())
    throw Error("tone label " + std::to_string(tone) + " out of range 1.." +
                std::to_string(head.n_tones()));
  if (head.weight.cols() != z.dim() || head.weight.rows() != head.bias.size())
    throw Error("tone head shape does not match the embedding");
  const Vector logits = head.Logits(z.values());
  const double lse = LogSumExp(logits);
  LossReport r;
  r.value = lse - logits(tone - 1);
  Vector g = (logits.array() - lse).exp();
  g(tone - 1) -= 1.0;
  r.AddGrad("tone_head.W", g * z.values().transpose());
  r.AddGrad("tone_head.b", g);
  r.AddGrad("anchor", head.weight.transpose() * g);
  return r;
}

LossReport MarginToneLoss(const Embedding &anchor,
                          const std::vector<Embedding> &positives,
                          const std::vector<Embedding> &hard,
                          const std::vector<Embedding> &soft,
                          const MarginConfig &cfg) {
  cfg.Validate();
  CheckDims(anchor, positives);
  CheckDims(anchor, hard);
  CheckDims(anchor, soft);
  const Vector &a = anchor.values();
  LossReport r;
  Vector grad_anchor = Vector::Zero(a.size());

  if (!positives.empty()) {
    const double w = cfg.lambda_attr / static_cast<double>(positives.size());
    for (std::size_t j = 0; j < positives.size(); ++j) {
      r.value -= w * a.dot(positives[j].values());
      grad_anchor -= w * positives[j].values();
      r.AddGrad(Indexed("positives", j), -w * a);
    }
  }
  auto hinge = [&](const std::vector<Embedding> &set, double margin,
                   double lambda, const char *group) {
    if (set.empty()) return;
    const double w = lambda / static_cast<double>(set.size());
    for (std::size_t j = 0; j < set.size(); ++j) {
      const double excess = a.dot(set[j].values()) - margin;
      if (excess > 0.0) {
        r.value += w * excess;
        grad_anchor += w * set[j].values();
        r.AddGrad(Indexed(group, j), w * a);
      } else {
        r.AddGrad(Indexed(group, j), Vector::Zero(a.size()));
      }
    }
  };
  hinge(hard, cfg.m_hard, cfg.lambda_hard, "hard_negatives");
  hinge(soft, cfg.m_soft, cfg.lambda_soft, "soft_negatives");
  r.AddGrad("anchor", grad_anchor);
  return r;
}

namespace {

std::vector<Embedding> Unkey(const std::vector<KeyedEmbedding> &xs) {
  std::vector<Embedding> out;
  out.reserve(xs.size());
  for (const auto &x : xs) out.push_back(x.embedding);
  return out;
}

// Re-keys the positional groups of a per-anchor report onto embedding keys.
void Scatter(const LossReport &r, const std::string &group,
             const std::vector<KeyedEmbedding> &xs, double weight,
             LossReport &out) {
  for (std::size_t j = 0; j < xs.size(); ++j) {
    auto it = r.grads.find(Indexed(group.c_str(), j));
    if (it != r.grads.end()) out.AddGrad(xs[j].key, weight * it->second);
  }
}

}  // namespace

LossReport Stage1Loss(const std::vector<Stage1Example> &batch,
                      const ToneHead &head, const Stage1Config &cfg,
                      ToneLossVariant variant, const MarginConfig &margin,
                      Stage1Breakdown *breakdown) {
  if (batch.empty()) throw Error("empty Stage-1 batch");
  cfg.Validate();
  int n_speaker = 0, n_tone = 0;
  for (const auto &ex : batch) {
    if (ex.speaker) ++n_speaker;
    if (ex.tone_term) ++n_tone;
    if (!ex.speaker && !ex.tone_term)
      throw Error("Stage-1 example has neither a speaker nor a tone term");
  }

  LossReport out;
  Stage1Breakdown parts;
  parts.speaker_anchors = n_speaker;
  parts.tone_anchors = n_tone;
  // Zero-sized groups are still reported so callers can rely on their presence.
  out.grads["tone_head.W"] = Eigen::MatrixXd::Zero(head.weight.rows(), head.weight.cols());
  out.grads["tone_head.b"] = Eigen::MatrixXd::Zero(head.bias.size(), 1);

  double speaker_sum = 0.0, tone_sum = 0.0, contrastive_sum = 0.0,
         classifier_sum = 0.0;
  // Fixed order: anchors in batch order, speaker term before tone term.
  for (const auto &ex : batch) {
    if (ex.speaker) {
      const SpeakerTerm &s = *ex.speaker;
      const LossReport l1 = SpeakerInfoNce(s.anchor.embedding, s.positive.embedding,
                                           Unkey(s.negatives), cfg);
      const double w = cfg.alpha / n_speaker;
      speaker_sum += l1.value;
      out.AddGrad(s.anchor.key, w * l1.Grad("anchor"));
      out.AddGrad(s.positive.key, w * l1.Grad("positive"));
      if (cfg.negatives_receive_gradient) Scatter(l1, "negatives", s.negatives, w, out);
    }
    if (ex.tone_term) {
      const ToneTerm &t = *ex.tone_term;
      const auto pos = Unkey(t.positives), hard = Unkey(t.hard_negatives),
                 soft = Unkey(t.soft_negatives);
      const LossReport l2 =
          variant == ToneLossVariant::kInfoNce
              ? ToneInfoNce(t.anchor.embedding, pos, hard, soft, cfg)
              : MarginToneLoss(t.anchor.embedding, pos, hard, soft, margin);
      const LossReport l3 = ToneClassifierCe(t.anchor.embedding, head, ex.tone);
      const double w = (1.0 - cfg.alpha) / n_tone;
      tone_sum += l2.value + cfg.lambda_cls * l3.value;
      contrastive_sum += l2.value;
      classifier_sum += l3.value;
      out.AddGrad(t.anchor.key, w * (l2.Grad("anchor") +
                                     cfg.lambda_cls * l3.Grad("anchor")));
      Scatter(l2, "positives", t.positives, w, out);
      Scatter(l2, "hard_negatives", t.hard_negatives, w, out);
      Scatter(l2, "soft_negatives", t.soft_negatives, w, out);
      out.AddGrad("tone_head.W", w * cfg.lambda_cls * l3.Grad("tone_head.W"));
      out.AddGrad("tone_head.b", w * cfg.lambda_cls * l3.Grad("tone_head.b"));
    }
  }
  if (n_speaker > 0) parts.speaker = speaker_sum / n_speaker;
  if (n_tone > 0) {
    parts.tone = tone_sum / n_tone;
    parts.contrastive_tone = contrastive_sum / n_tone;
    parts.classifier = classifier_sum / n_tone;
  }
  out.value = cfg.alpha * parts.speaker + (1.0 - cfg.alpha) * parts.tone;
  if (breakdown) *breakdown = parts;
  return out;
}

}  // namespace sita
