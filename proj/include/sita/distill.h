// include/sita/distill.h

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

#ifndef SITA_DISTILL_H_
#define SITA_DISTILL_H_

#include "sita/losses.h"
#include "sita/math.h"

namespace sita {

struct KdConfig {
  double tau_kd = 3.0;
  // Weight on the CTC term; 1.0 disables distillation.
  double delta = 0.7;

  void Validate() const;
  bool enabled() const { return delta < 1.0; }
  bool operator==(const KdConfig &) const = default;
};

// Row-wise log-softmax of logits / tau_kd.
Matrix Soften(const Matrix &logits, double tau_kd);

// Mean over frames of KL(teacher || student), both softened at tau_kd. The
// only gradient group is "student_logits"; the teacher is a constant.
LossReport KdLoss(const Matrix &teacher_logits, const Matrix &student_logits,
                  const KdConfig &cfg);

// delta * ctc + (1 - delta) * kd, applied to the value and to every gradient
// group present in either component.
LossReport Stage2Loss(const LossReport &ctc, const LossReport &kd,
                      const KdConfig &cfg);

}  // namespace sita

#endif  // SITA_DISTILL_H_
