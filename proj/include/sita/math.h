// include/sita/math.h

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

#ifndef SITA_MATH_H_
#define SITA_MATH_H_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace sita {

// All library failures surface as this exception; the message is meant for
// the user and is printed verbatim by the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vector = Eigen::VectorXd;
// Time-major frame matrix: one row per frame.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Vectors with norm below this are treated as degenerate and rejected.
inline constexpr double kMinNorm = 1e-9;

/// A token embedding. When `normalized` is set the values have unit norm.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(Vector values, bool normalized = false)
      : values_(std::move(values)), normalized_(normalized) {}

  // Copies and scales `values` to unit norm. Throws on degenerate input.
  static Embedding Normalized(const Vector &values);

  const Vector &values() const { return values_; }
  bool normalized() const { return normalized_; }
  Eigen::Index dim() const { return values_.size(); }

 private:
  Vector values_;
  bool normalized_ = false;
};

enum class PoolingKind { kMean, kMax, kMaxMean, kWeighted };

struct PoolingMode {
  PoolingKind kind = PoolingKind::kMean;
  // Weight on the max branch; only meaningful for kWeighted.
  double alpha = 0.7;

  static PoolingMode Mean() { return {PoolingKind::kMean, 0.7}; }
  static PoolingMode Max() { return {PoolingKind::kMax, 0.7}; }
  static PoolingMode MaxMean() { return {PoolingKind::kMaxMean, 0.7}; }
  static PoolingMode Weighted(double alpha = 0.7);

  // "mean", "max", "max_mean", "weighted" (alpha defaults to 0.7) or
  // "weighted:<alpha>".
  static PoolingMode Parse(std::string_view name);
  std::string Name() const;

  bool operator==(const PoolingMode &) const = default;
};

double CosineSimilarity(const Embedding &u, const Embedding &v);
double CosineDistance(const Embedding &u, const Embedding &v);

// ln(sum(exp(values))) with a max shift. Entries may be -inf.
double LogSumExp(std::span<const double> values);
double LogSumExp(const Vector &values);

// Row-wise log-softmax of a logit matrix.
Matrix LogSoftmaxRows(const Matrix &logits);
Vector LogSoftmax(const Vector &logits);

// Pools a T x D frame matrix into a D vector. The result is not normalized.
Vector Pool(const Matrix &frames, const PoolingMode &mode);

// Gradient of a scalar with respect to the frames, given its gradient with
// respect to Pool(frames, mode). Max takes the first arg-max frame per
// coordinate.
Matrix PoolBackward(const Matrix &frames, const PoolingMode &mode,
                    const Vector &grad_pooled);

// Gradient with respect to the raw vector v for z = v / |v|.
Vector NormalizeBackward(const Vector &raw, const Vector &grad_normalized);

}  // namespace sita

#endif  // SITA_MATH_H_
