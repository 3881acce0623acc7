// src/math.cc

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

#include "sita/math.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace sita {

Embedding Embedding::Normalized(const Vector &values) {
  if (values.size() == 0) throw Error("empty embedding");
  const double norm = values.norm();
  if (!(norm >= kMinNorm)) throw Error("degenerate embedding");
  return Embedding(values / norm, true);
}

PoolingMode PoolingMode::Weighted(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error("weighted pooling alpha must lie in [0, 1]");
  return {PoolingKind::kWeighted, alpha};
}

PoolingMode PoolingMode::Parse(std::string_view name) {
  if (name == "mean") return Mean();
  if (name == "max") return Max();
  if (name == "max_mean") return MaxMean();
  if (name == "weighted") return Weighted();
  constexpr std::string_view kPrefix = "weighted:";
  if (name.substr(0, kPrefix.size()) == kPrefix) {
    const std::string rest(name.substr(kPrefix.size()));
    std::size_t used = 0;
    double alpha = 0.0;
    try {
      alpha = std::stod(rest, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != rest.size() || rest.empty())
      throw Error("bad pooling alpha in '" + std::string(name) + "'");
    return Weighted(alpha);
  }
  throw Error("unknown pooling mode '" + std::string(name) + "'");
}

std::string PoolingMode::Name() const {
  switch (kind) {
    case PoolingKind::kMean:
      return "mean";
    case PoolingKind::kMax:
      return "max";
    case PoolingKind::kMaxMean:
      return "max_mean";
    case PoolingKind::kWeighted: {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof(buf), alpha);
      return "weighted:" + std::string(buf, res.ptr);
    }
  }
  return "mean";
}

namespace {

Vector UnitCopy(const Embedding &e) {
  if (e.normalized()) return e.values();
  return Embedding::Normalized(e.values()).values();
}

}  // namespace

double CosineSimilarity(const Embedding &u, const Embedding &v) {
  if (u.dim() != v.dim()) throw Error("embedding dimension mismatch");
  if (u.dim() == 0) throw Error("empty embedding");
  if (u.values() == v.values() && u.values().squaredNorm() > 0.0) return 1.0;
  const double s = UnitCopy(u).dot(UnitCopy(v));
  return std::clamp(s, -1.0, 1.0);
}

double CosineDistance(const Embedding &u, const Embedding &v) {
  return 1.0 - CosineSimilarity(u, v);
}

double LogSumExp(std::span<const double> values) {
  if (values.empty()) throw Error("log_sum_exp of an empty vector");
  const double mx = *std::max_element(values.begin(), values.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

double LogSumExp(const Vector &values) {
  return LogSumExp(std::span<const double>(values.data(), values.size()));
}

Vector LogSoftmax(const Vector &logits) {
  return logits.array() - LogSumExp(logits);
}

Matrix LogSoftmaxRows(const Matrix &logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double lse = LogSumExp(
        std::span<const double>(logits.row(t).data(), logits.cols()));
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

namespace {

Vector MaxPool(const Matrix &frames) {
  return frames.colwise().maxCoeff().transpose();
}

Vector MeanPool(const Matrix &frames) {
  return frames.colwise().mean().transpose();
}

double MaxWeight(const PoolingMode &mode) {
  switch (mode.kind) {
    case PoolingKind::kMean:
      return 0.0;
    case PoolingKind::kMax:
      return 1.0;
    case PoolingKind::kMaxMean:
      return 0.5;
    case PoolingKind::kWeighted:
      return mode.alpha;
  }
  return 0.0;
}

}  // namespace

Vector Pool(const Matrix &frames, const PoolingMode &mode) {
  if (frames.rows() == 0) throw Error("cannot pool an empty frame sequence");
  switch (mode.kind) {
    case PoolingKind::kMean:
      return MeanPool(frames);
    case PoolingKind::kMax:
      return MaxPool(frames);
    case PoolingKind::kMaxMean:
      return (MaxPool(frames) + MeanPool(frames)) / 2.0;
    case PoolingKind::kWeighted:
      return mode.alpha * MaxPool(frames) +
             (1.0 - mode.alpha) * MeanPool(frames);
  }
  throw Error("unknown pooling mode");
}

Matrix PoolBackward(const Matrix &frames, const PoolingMode &mode,
                    const Vector &grad_pooled) {
  const Eigen::Index rows = frames.rows(), cols = frames.cols();
  if (rows == 0) throw Error("cannot pool an empty frame sequence");
  if (grad_pooled.size() != cols) throw Error("pool gradient size mismatch");
  const double w_max = MaxWeight(mode);
  const double w_mean = 1.0 - w_max;
  Matrix grad = Matrix::Zero(rows, cols);
  if (w_mean != 0.0) {
    grad.rowwise() += (w_mean / static_cast<double>(rows)) * grad_pooled.transpose();
  }
  if (w_max != 0.0) {
    for (Eigen::Index d = 0; d < cols; ++d) {
      Eigen::Index best = 0;
      for (Eigen::Index t = 1; t < rows; ++t)
        if (frames(t, d) > frames(best, d)) best = t;
      grad(best, d) += w_max * grad_pooled(d);
    }
  }
  return grad;
}

Vector NormalizeBackward(const Vector &raw, const Vector &grad_normalized) {
  const double norm = raw.norm();
  if (!(norm >= kMinNorm)) throw Error("degenerate embedding");
  const Vector z = raw / norm;
  return (grad_normalized - z * z.dot(grad_normalized)) / norm;
}

}  // namespace sita
