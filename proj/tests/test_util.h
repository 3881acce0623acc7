// tests/test_util.h

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

#ifndef SITA_TESTS_TEST_UTIL_H_
#define SITA_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "sita/corpus.h"
#include "sita/math.h"
#include "sita/random.h"

namespace sita::testing {

inline Vector RandomVector(Rng &rng, Eigen::Index d, double scale = 1.0) {
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = scale * rng.Normal();
  return v;
}

inline Vector RandomUnit(Rng &rng, Eigen::Index d) {
  return RandomVector(rng, d).normalized();
}

inline Matrix RandomMatrix(Rng &rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.Normal();
  return m;
}

// Central differences of f at x.
inline Vector NumericGradient(const std::function<double(const Vector &)> &f, Vector x,
                              double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = f(x);
    x(i) = keep - h;
    const double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, 1e-8), norm-wise.
inline double RelativeError(const Vector &a, const Vector &b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / denom;
}

inline Vector Concat(const std::vector<Vector> &parts) {
  Eigen::Index n = 0;
  for (const auto &p : parts) n += p.size();
  Vector out(n);
  Eigen::Index at = 0;
  for (const auto &p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

inline std::vector<Vector> SplitFlat(const Vector &flat, const std::vector<Eigen::Index> &sizes) {
  std::vector<Vector> out;
  Eigen::Index at = 0;
  for (Eigen::Index s : sizes) {
    out.push_back(flat.segment(at, s));
    at += s;
  }
  return out;
}

inline Vector Flatten(const Matrix &m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

inline Matrix Unflatten(const Vector &v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

// A token with a constant-free feature matrix, for hand-built corpora.
inline Token MakeToken(const std::string &id, const std::string &base, int tone,
                       const std::string &speaker, Gender g,
                       Split split = Split::kTest, Matrix features = Matrix()) {
  Token t;
  t.id = id;
  t.base_word = base;
  t.tone = tone;
  t.word = base + std::to_string(tone);
  t.speaker_id = speaker;
  t.gender = g;
  t.split = split;
  t.features = features.size() ? std::move(features) : Matrix::Ones(2, 4);
  return t;
}

inline std::string ReadFile(const std::filesystem::path &p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string &name)
      : path_(std::filesystem::temp_directory_path() / ("sita_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path &path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace sita::testing

#endif  // SITA_TESTS_TEST_UTIL_H_
