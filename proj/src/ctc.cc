// src/ctc.cc

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

#include "sita/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace sita {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> symbols)
    : symbols_(std::move(symbols)) {
  std::set<std::string> seen;
  for (const auto &s : symbols_) {
    if (s.empty()) throw Error("empty vocabulary symbol");
    if (!seen.insert(s).second) throw Error("duplicate vocabulary symbol '" + s + "'");
  }
}

Vocabulary Vocabulary::FromWords(const std::vector<std::string> &words) {
  std::set<char> chars;
  for (const auto &w : words) chars.insert(w.begin(), w.end());
  std::vector<std::string> symbols;
  for (char c : chars) symbols.emplace_back(1, c);
  return Vocabulary(std::move(symbols));
}

Labels Vocabulary::Encode(const std::string &word) const {
  Labels out;
  for (char c : word) {
    auto it = std::find(symbols_.begin(), symbols_.end(), std::string(1, c));
    if (it == symbols_.end())
      throw Error("symbol '" + std::string(1, c) + "' not in vocabulary");
    out.push_back(static_cast<int>(it - symbols_.begin()) + 1);
  }
  return out;
}

std::string Vocabulary::Decode(const Labels &labels) const {
  std::string out;
  for (int l : labels) {
    if (l < 1 || l > static_cast<int>(symbols_.size()))
      throw Error("label " + std::to_string(l) + " outside vocabulary");
    out += symbols_[static_cast<std::size_t>(l - 1)];
  }
  return out;
}

Labels Collapse(const Labels &path) {
  Labels out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != kBlank) out.push_back(s);
    prev = s;
  }
  return out;
}

void CheckLogPosteriors(const Matrix &log_posteriors) {
  if (log_posteriors.rows() == 0) throw Error("log posteriors have no frames");
  if (log_posteriors.cols() < 2) throw Error("log posteriors need blank plus symbols");
  for (Eigen::Index t = 0; t < log_posteriors.rows(); ++t) {
    for (Eigen::Index k = 0; k < log_posteriors.cols(); ++k)
      if (std::isnan(log_posteriors(t, k)) || log_posteriors(t, k) > 0.0 + 1e-12)
        throw Error("malformed log-posterior row " + std::to_string(t));
    const double lse = LogSumExp(std::span<const double>(
        log_posteriors.row(t).data(), log_posteriors.cols()));
    if (!(std::abs(lse) <= 1e-6))
      throw Error("malformed log-posterior row " + std::to_string(t) +
                  " (does not normalize)");
  }
}

int CtcMinFrames(const Labels &target) {
  int n = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

namespace {

void CheckTarget(const Labels &target, Eigen::Index n_outputs) {
  for (int l : target)
    if (l < 1 || l >= n_outputs)
      throw Error("target label " + std::to_string(l) + " out of range");
}

}  // namespace

CtcLattice ComputeCtcLattice(const Matrix &log_posteriors, const Labels &target) {
  CheckLogPosteriors(log_posteriors);
  CheckTarget(target, log_posteriors.cols());
  const Eigen::Index n_frames = log_posteriors.rows();
  CtcLattice lat;
  lat.expanded_target.push_back(kBlank);
  for (int l : target) {
    lat.expanded_target.push_back(l);
    lat.expanded_target.push_back(kBlank);
  }
  const auto n_states = static_cast<Eigen::Index>(lat.expanded_target.size());
  const Labels &ext = lat.expanded_target;
  auto emit = [&](Eigen::Index s, Eigen::Index t) {
    return log_posteriors(t, ext[static_cast<std::size_t>(s)]);
  };
  // s may skip from s-2 when ext[s] is a label differing from ext[s-2].
  auto can_skip = [&](Eigen::Index s) {
    return s >= 2 && ext[static_cast<std::size_t>(s)] != kBlank &&
           ext[static_cast<std::size_t>(s)] != ext[static_cast<std::size_t>(s - 2)];
  };

  lat.log_alpha = Matrix::Constant(n_states, n_frames, kNegInf);
  lat.log_alpha(0, 0) = emit(0, 0);
  if (n_states > 1) lat.log_alpha(1, 0) = emit(1, 0);
  for (Eigen::Index t = 1; t < n_frames; ++t) {
    for (Eigen::Index s = 0; s < n_states; ++s) {
      double acc = lat.log_alpha(s, t - 1);
      if (s >= 1) acc = LogAdd(acc, lat.log_alpha(s - 1, t - 1));
      if (can_skip(s)) acc = LogAdd(acc, lat.log_alpha(s - 2, t - 1));
      lat.log_alpha(s, t) = acc == kNegInf ? kNegInf : acc + emit(s, t);
    }
  }

  lat.log_beta = Matrix::Constant(n_states, n_frames, kNegInf);
  lat.log_beta(n_states - 1, n_frames - 1) = emit(n_states - 1, n_frames - 1);
  if (n_states > 1)
    lat.log_beta(n_states - 2, n_frames - 1) = emit(n_states - 2, n_frames - 1);
  for (Eigen::Index t = n_frames - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < n_states; ++s) {
      double acc = lat.log_beta(s, t + 1);
      if (s + 1 < n_states) acc = LogAdd(acc, lat.log_beta(s + 1, t + 1));
      if (s + 2 < n_states && can_skip(s + 2))
        acc = LogAdd(acc, lat.log_beta(s + 2, t + 1));
      lat.log_beta(s, t) = acc == kNegInf ? kNegInf : acc + emit(s, t);
    }
  }

  double ll = lat.log_alpha(n_states - 1, n_frames - 1);
  if (n_states > 1) ll = LogAdd(ll, lat.log_alpha(n_states - 2, n_frames - 1));
  lat.log_likelihood = ll;
  return lat;
}

double CtcLogLikelihood(const Matrix &log_posteriors, const Labels &target) {
  return ComputeCtcLattice(log_posteriors, target).log_likelihood;
}

Matrix CtcGradient(const Matrix &log_posteriors, const Labels &target) {
  const CtcLattice lat = ComputeCtcLattice(log_posteriors, target);
  if (lat.log_likelihood == kNegInf)
    throw Error("infeasible CTC target: loss would be infinite");
  const Eigen::Index n_frames = log_posteriors.rows();
  const Eigen::Index n_out = log_posteriors.cols();
  // Occupancy per (frame, output) in the log domain.
  Matrix log_occ = Matrix::Constant(n_frames, n_out, kNegInf);
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    for (Eigen::Index s = 0; s < lat.log_alpha.rows(); ++s) {
      const double ab = lat.log_alpha(s, t) + lat.log_beta(s, t);
      if (ab == kNegInf) continue;
      const int k = lat.expanded_target[static_cast<std::size_t>(s)];
      log_occ(t, k) = LogAdd(log_occ(t, k), ab - log_posteriors(t, k));
    }
  }
  Matrix grad(n_frames, n_out);
  for (Eigen::Index t = 0; t < n_frames; ++t)
    for (Eigen::Index k = 0; k < n_out; ++k)
      grad(t, k) = std::exp(log_posteriors(t, k)) -
                   std::exp(log_occ(t, k) - lat.log_likelihood);
  return grad;
}

Hypothesis GreedyDecode(const Matrix &log_posteriors) {
  Labels path;
  double score = 0.0;
  for (Eigen::Index t = 0; t < log_posteriors.rows(); ++t) {
    Eigen::Index best = 0;
    log_posteriors.row(t).maxCoeff(&best);
    path.push_back(static_cast<int>(best));
    score += log_posteriors(t, best);
  }
  return {Collapse(path), score};
}

namespace {

struct PrefixScore {
  double blank = kNegInf;      // ends in blank
  double non_blank = kNegInf;  // ends in the last label
  double Total() const { return LogAdd(blank, non_blank); }
};

// Higher score first; equal scores resolved by lexicographic label order.
bool Better(const std::pair<Labels, double> &a, const std::pair<Labels, double> &b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

}  // namespace

Hypothesis BeamSearchDecode(const Matrix &log_posteriors, int beam_width,
                            const std::vector<Labels> *lexicon) {
  if (beam_width < 1) throw Error("beam width must be at least 1");
  CheckLogPosteriors(log_posteriors);
  const Eigen::Index n_out = log_posteriors.cols();

  std::set<Labels> prefixes;
  std::set<Labels> entries;
  if (lexicon) {
    for (const Labels &entry : *lexicon) {
      entries.insert(entry);
      for (std::size_t n = 0; n <= entry.size(); ++n)
        prefixes.emplace(entry.begin(), entry.begin() + static_cast<long>(n));
    }
  }
  auto allowed = [&](const Labels &prefix) {
    return lexicon == nullptr || prefixes.count(prefix) > 0;
  };

  std::map<Labels, PrefixScore> beams;
  beams[{}].blank = 0.0;
  for (Eigen::Index t = 0; t < log_posteriors.rows(); ++t) {
    std::map<Labels, PrefixScore> next;
    for (const auto &[prefix, sc] : beams) {
      const double p_blank = log_posteriors(t, kBlank);
      next[prefix].blank = LogAdd(next[prefix].blank, sc.Total() + p_blank);
      for (Eigen::Index k = 1; k < n_out; ++k) {
        const double p = log_posteriors(t, k);
        const int label = static_cast<int>(k);
        Labels extended = prefix;
        extended.push_back(label);
        if (!prefix.empty() && prefix.back() == label) {
          // A repeat only extends after a blank; otherwise it merges.
          next[prefix].non_blank = LogAdd(next[prefix].non_blank, sc.non_blank + p);
          if (allowed(extended)) {
            auto &dst = next[extended];
            dst.non_blank = LogAdd(dst.non_blank, sc.blank + p);
          }
        } else if (allowed(extended)) {
          auto &dst = next[extended];
          dst.non_blank = LogAdd(dst.non_blank, sc.Total() + p);
        }
      }
    }
    std::vector<std::pair<Labels, double>> ranked;
    ranked.reserve(next.size());
    for (const auto &[prefix, sc] : next)
      if (sc.Total() != kNegInf) ranked.emplace_back(prefix, sc.Total());
    std::sort(ranked.begin(), ranked.end(), Better);
    if (ranked.size() > static_cast<std::size_t>(beam_width))
      ranked.resize(static_cast<std::size_t>(beam_width));
    beams.clear();
    for (const auto &[prefix, score] : ranked) beams.emplace(prefix, next[prefix]);
  }

  std::optional<std::pair<Labels, double>> best;
  for (const auto &[prefix, sc] : beams) {
    if (lexicon && !entries.count(prefix)) continue;
    std::pair<Labels, double> cand{prefix, sc.Total()};
    if (cand.second == kNegInf) continue;
    if (!best || Better(cand, *best)) best = cand;
  }
  if (!best) return {{}, kNegInf};
  return {best->first, best->second};
}

}  // namespace sita
