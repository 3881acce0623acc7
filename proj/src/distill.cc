// src/distill.cc

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

#include "sita/distill.h"

#include <cmath>

namespace sita {

void KdConfig::Validate() const {
  if (!(tau_kd > 0.0)) throw Error("KD temperature must be positive");
  if (!(delta >= 0.0 && delta <= 1.0)) throw Error("delta must lie in [0, 1]");
}

Matrix Soften(const Matrix &logits, double tau_kd) {
  if (!(tau_kd > 0.0)) throw Error("KD temperature must be positive");
  return LogSoftmaxRows(logits / tau_kd);
}

LossReport KdLoss(const Matrix &teacher_logits, const Matrix &student_logits,
                  const KdConfig &cfg) {
  if (teacher_logits.rows() != student_logits.rows() ||
      teacher_logits.cols() != student_logits.cols())
    throw Error("teacher and student logits differ in shape");
  if (student_logits.rows() == 0) throw Error("KD loss over zero frames");
  const Matrix log_t = Soften(teacher_logits, cfg.tau_kd);
  const Matrix log_s = Soften(student_logits, cfg.tau_kd);
  const Matrix p_t = log_t.array().exp().matrix();
  const Matrix p_s = log_s.array().exp().matrix();
  const double n_frames = static_cast<double>(student_logits.rows());

  LossReport r;
  double total = 0.0;
  for (Eigen::Index t = 0; t < p_t.rows(); ++t) {
    double kl = 0.0;
    for (Eigen::Index k = 0; k < p_t.cols(); ++k)
      if (p_t(t, k) > 0.0) kl += p_t(t, k) * (log_t(t, k) - log_s(t, k));
    total += kl;
  }
  r.value = total / n_frames;
  // d KL / d student_logits = (p_s - p_t) / tau, averaged over frames.
  r.AddGrad("student_logits",
            ((p_s - p_t) / (cfg.tau_kd * n_frames)).cast<double>());
  return r;
}

LossReport Stage2Loss(const LossReport &ctc, const LossReport &kd,
                      const KdConfig &cfg) {
  cfg.Validate();
  LossReport out;
  out.Accumulate(ctc, cfg.delta);
  out.Accumulate(kd, 1.0 - cfg.delta);
  return out;
}

}  // namespace sita
