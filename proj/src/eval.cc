// src/eval.cc

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

#include "sita/eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "sita/random.h"

namespace sita {

LabeledEmbedding Label(const Token &token, Embedding embedding) {
  return {token.id,         token.word,   token.base_word, token.tone,
          token.speaker_id, token.gender, std::move(embedding)};
}

std::vector<LabeledEmbedding> EmbedTokens(const std::vector<Token> &tokens,
                                          const EncoderStack &stack, int layer,
                                          const PoolingMode &mode) {
  std::vector<LabeledEmbedding> out;
  out.reserve(tokens.size());
  for (const auto &t : tokens)
    out.push_back(Label(t, stack.ExtractEmbedding(t.features, layer, mode)));
  return out;
}

// --- retrieval -------------------------------------------------------------------

double RetrievalResult::TopK(int k) const {
  if (ranks.empty()) return 0.0;
  long hits = 0;
  for (int r : ranks)
    if (r >= 1 && r <= k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

RetrievalResult RetrievalTopK(const std::vector<LabeledEmbedding> &queries,
                              const std::vector<LabeledEmbedding> &gallery,
                              const std::string &direction) {
  if (gallery.empty()) throw Error("empty gallery");
  RetrievalResult r;
  r.direction = direction;
  std::vector<double> sims(gallery.size());
  for (const auto &q : queries) {
    for (std::size_t j = 0; j < gallery.size(); ++j)
      sims[j] = CosineSimilarity(q.embedding, gallery[j].embedding);
    // Best matching item: highest similarity, earliest on ties.
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < gallery.size(); ++j)
      if (gallery[j].word == q.word && (!best || sims[j] > sims[*best])) best = j;
    if (!best) {
      r.ranks.push_back(0);
      continue;
    }
    int rank = 1;
    for (std::size_t j = 0; j < gallery.size(); ++j)
      if (sims[j] > sims[*best] || (sims[j] == sims[*best] && j < *best)) ++rank;
    r.ranks.push_back(rank);
  }
  r.top1 = r.TopK(1);
  r.top5 = r.TopK(5);
  return r;
}

CrossGenderRetrieval CrossGenderTopK(const std::vector<LabeledEmbedding> &tokens) {
  std::vector<LabeledEmbedding> female, male;
  for (const auto &t : tokens) (t.gender == Gender::kFemale ? female : male).push_back(t);
  CrossGenderRetrieval out;
  out.f2m = RetrievalTopK(female, male, "F->M");
  out.m2f = RetrievalTopK(male, female, "M->F");
  out.avg_top1 = 0.5 * (out.f2m.top1 + out.m2f.top1);
  out.avg_top5 = 0.5 * (out.f2m.top5 + out.m2f.top5);
  return out;
}

// --- tone geometry ---------------------------------------------------------------

namespace {

struct Moments {
  double sum = 0.0, sum_sq = 0.0;
  long n = 0;

  void Add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  std::optional<Stat> Finish() const {
    if (n == 0) return std::nullopt;
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
    return Stat{mean, std::sqrt(var), n};
  }
};

struct GeometryMoments {
  Moments pos, hard, soft;
  GeometryStats Finish() const { return {pos.Finish(), hard.Finish(), soft.Finish()}; }
};

}  // namespace

ToneGeometry ComputeToneGeometry(const std::vector<LabeledEmbedding> &tokens) {
  GeometryMoments all;
  std::map<int, GeometryMoments> by_tone;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    GeometryMoments &mine = by_tone[tokens[i].tone];
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      if (i == j) continue;
      const double sim = CosineSimilarity(tokens[i].embedding, tokens[j].embedding);
      if (tokens[i].word == tokens[j].word) {
        all.pos.Add(sim);
        mine.pos.Add(sim);
      } else if (tokens[i].base_word == tokens[j].base_word) {
        all.hard.Add(1.0 - sim);
        mine.hard.Add(1.0 - sim);
      } else {
        all.soft.Add(1.0 - sim);
        mine.soft.Add(1.0 - sim);
      }
    }
  }
  ToneGeometry g;
  g.overall = all.Finish();
  for (const auto &[tone, m] : by_tone) g.per_tone[tone] = m.Finish();
  return g;
}

// --- ASR ---------------------------------------------------------------------------

EditCounts EditDistance(const std::vector<std::string> &hyp,
                        const std::vector<std::string> &ref) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<long>> d(n + 1, std::vector<long>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});
  EditCounts c;
  c.reference_length = static_cast<long>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

namespace {

std::vector<std::string> SplitWords(const std::string &s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::vector<std::string> Chars(const std::vector<std::string> &words) {
  std::vector<std::string> out;
  for (const auto &w : words)
    for (char c : w) out.emplace_back(1, c);
  return out;
}

void Add(EditCounts &acc, const EditCounts &c) {
  acc.substitutions += c.substitutions;
  acc.deletions += c.deletions;
  acc.insertions += c.insertions;
  acc.reference_length += c.reference_length;
}

}  // namespace

AsrScore EditRates(const std::vector<std::string> &hypotheses,
                   const std::vector<std::string> &references) {
  if (hypotheses.size() != references.size())
    throw Error("hypothesis and reference counts differ");
  AsrScore s;
  for (std::size_t u = 0; u < references.size(); ++u) {
    const auto hw = SplitWords(hypotheses[u]), rw = SplitWords(references[u]);
    Add(s.words, EditDistance(hw, rw));
    Add(s.chars, EditDistance(Chars(hw), Chars(rw)));
  }
  if (s.words.reference_length == 0 || s.chars.reference_length == 0)
    throw Error("empty reference set");
  s.wer = static_cast<double>(s.words.errors()) / static_cast<double>(s.words.reference_length);
  s.cer = static_cast<double>(s.chars.errors()) / static_cast<double>(s.chars.reference_length);
  return s;
}

AsrDecode DecodeAndScore(const std::vector<Token> &tokens, const EncoderStack &stack,
                         const Vocabulary &vocab, const std::vector<std::string> &lexicon,
                         int beam_width) {
  std::vector<Labels> entries;
  for (const auto &w : lexicon) entries.push_back(vocab.Encode(w));
  AsrDecode out;
  for (const auto &t : tokens) {
    const Matrix log_post = LogSoftmaxRows(stack.CtcLogits(t.features));
    const Hypothesis h = BeamSearchDecode(log_post, beam_width, &entries);
    out.ids.push_back(t.id);
    out.references.push_back(t.word);
    out.hypotheses.push_back(vocab.Decode(h.labels));
  }
  out.score = EditRates(out.hypotheses, out.references);
  return out;
}

// --- similarity --------------------------------------------------------------------

SimilarityResult PairSimilarities(const std::vector<LabeledEmbedding> &tokens,
                                  const SimilarityConfig &cfg) {
  Moments e1, e3, e4;
  std::vector<std::pair<std::size_t, std::size_t>> different_base;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = i + 1; j < tokens.size(); ++j) {
      const auto &a = tokens[i], &b = tokens[j];
      if (a.word == b.word) {
        if (a.speaker_id != b.speaker_id) e1.Add(CosineSimilarity(a.embedding, b.embedding));
      } else if (a.base_word == b.base_word) {
        e4.Add(CosineSimilarity(a.embedding, b.embedding));
      } else {
        different_base.emplace_back(i, j);
      }
    }
  }
  if (cfg.max_e3_pairs < 1) throw Error("max_e3_pairs must be positive");
  if (different_base.size() > static_cast<std::size_t>(cfg.max_e3_pairs)) {
    Rng rng(cfg.seed);
    rng.Shuffle(different_base);
    different_base.resize(static_cast<std::size_t>(cfg.max_e3_pairs));
  }
  for (const auto &[i, j] : different_base)
    e3.Add(CosineSimilarity(tokens[i].embedding, tokens[j].embedding));

  SimilarityResult r;
  auto mean = [](const Moments &m) -> std::optional<double> {
    if (m.n == 0) return std::nullopt;
    return m.sum / static_cast<double>(m.n);
  };
  r.e1 = mean(e1);
  r.e3 = mean(e3);
  r.e4 = mean(e4);
  return r;
}

SimilarityResult SimilarityExperiments(const std::vector<Token> &tokens,
                                       const EncoderStack &stack, int layer,
                                       const SimilarityConfig &cfg) {
  const PoolingMode mean_pool = PoolingMode::Mean();
  const auto embedded = EmbedTokens(tokens, stack, layer, mean_pool);
  SimilarityResult r = PairSimilarities(embedded, cfg);
  if (cfg.semitone_shifts.empty() || tokens.empty()) return r;
  double total = 0.0;
  for (double shift : cfg.semitone_shifts) {
    double sum = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const Token shifted = Perturb(tokens[i], Perturbation::PitchShift(shift), false);
      sum += CosineSimilarity(embedded[i].embedding,
                              stack.ExtractEmbedding(shifted.features, layer, mean_pool));
    }
    const double m = sum / static_cast<double>(tokens.size());
    r.e2_by_shift.emplace_back(shift, m);
    total += m;
  }
  r.e2 = total / static_cast<double>(cfg.semitone_shifts.size());
  return r;
}

// --- layer probe ---------------------------------------------------------------------

std::vector<ProbeRow> LayerProbe(const std::vector<Token> &tokens,
                                 const EncoderStack &stack,
                                 const PoolingMode &retrieval_pooling,
                                 const PoolingMode &geometry_pooling) {
  const int n_blocks = stack.config().n_blocks;
  std::vector<std::vector<LabeledEmbedding>> for_retrieval(n_blocks), for_geometry(n_blocks);
  for (const auto &t : tokens) {
    const auto hs = stack.Forward(t.features, n_blocks);
    for (int l = 0; l < n_blocks; ++l) {
      const auto &h = hs[static_cast<std::size_t>(l)];
      for_retrieval[l].push_back(Label(t, Embedding::Normalized(Pool(h, retrieval_pooling))));
      for_geometry[l].push_back(Label(t, Embedding::Normalized(Pool(h, geometry_pooling))));
    }
  }
  std::vector<ProbeRow> rows;
  for (int l = 0; l < n_blocks; ++l) {
    ProbeRow row;
    row.layer = l + 1;
    row.avg_top1 = CrossGenderTopK(for_retrieval[l]).avg_top1;
    if (auto hard = ComputeToneGeometry(for_geometry[l]).overall.hard_neg_dist)
      row.hard_neg_dist = hard->mean;
    rows.push_back(row);
  }
  return rows;
}

// --- tone classification ---------------------------------------------------------------

ToneClsAccuracy ToneClassification(const std::vector<LabeledEmbedding> &tokens,
                                   const ToneHead &head) {
  ToneClsAccuracy acc;
  if (tokens.empty()) return acc;
  long top1 = 0, top3 = 0;
  for (const auto &t : tokens) {
    const Vector logits = head.Logits(t.embedding.values());
    std::vector<int> order(static_cast<std::size_t>(logits.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return logits(a) > logits(b); });
    const int truth = t.tone - 1;
    if (order[0] == truth) ++top1;
    for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k)
      if (order[k] == truth) ++top3;
  }
  acc.count = static_cast<long>(tokens.size());
  acc.top1 = static_cast<double>(top1) / static_cast<double>(acc.count);
  acc.top3 = static_cast<double>(top3) / static_cast<double>(acc.count);
  return acc;
}

// --- projection --------------------------------------------------------------------------

namespace {

// Dominant eigenpair of a symmetric positive semi-definite matrix.
std::pair<double, Vector> PowerIterate(const Eigen::MatrixXd &c) {
  const Eigen::Index d = c.rows();
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = 1.0 + 0.1 * static_cast<double>(i);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 100000; ++it) {
    Vector w = c * v;
    const double norm = w.norm();
    if (norm == 0.0) return {0.0, v};
    w /= norm;
    const double next = w.dot(c * w);
    const bool done = std::abs(next - lambda) <= 1e-15 * std::max(1.0, next) &&
                      (w - v).norm() < 1e-12;
    v = w;
    lambda = next;
    if (done) break;
  }
  return {lambda, v};
}

}  // namespace

Projection Project2d(const std::vector<Vector> &points) {
  if (points.size() < 3) throw Error("projection needs at least three points");
  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index d = points.front().size();
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (points[static_cast<std::size_t>(i)].size() != d) throw Error("points differ in dimension");
    x.row(i) = points[static_cast<std::size_t>(i)].transpose();
  }
  x.rowwise() -= x.colwise().mean();
  Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n);

  Projection p;
  p.coords = Matrix::Zero(n, 2);
  p.explained_variance = Vector::Zero(2);
  const double scale = std::max(1e-300, cov.trace());
  for (int axis = 0; axis < 2; ++axis) {
    if (axis >= d) {
      p.rank_deficient = true;
      break;
    }
    auto [lambda, v] = PowerIterate(cov);
    if (lambda <= 1e-12 * scale) {
      p.rank_deficient = true;
      break;
    }
    Vector col = x * v;
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0.0) {
      col = -col;
      v = -v;
    }
    p.coords.col(axis) = col;
    p.explained_variance(axis) = lambda;
    cov -= lambda * v * v.transpose();
  }
  return p;
}

// --- CSV ---------------------------------------------------------------------------------

std::string FormatValue(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << (v == 0.0 ? 0.0 : v);
  std::string s = os.str();
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::string FormatValue(const std::optional<double> &v) {
  return v ? FormatValue(*v) : "NA";
}

void CsvTable::Write(const std::filesystem::path &path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  auto line = [&](const std::vector<std::string> &cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(header);
  for (const auto &r : rows) line(r);
  if (!os) throw Error("failed writing " + path.string());
}

CsvTable CsvTable::Read(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  auto split = [](const std::string &s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw Error(path.string() + ": missing header");
  t.header = split(line);
  while (std::getline(is, line))
    if (!line.empty()) t.rows.push_back(split(line));
  return t;
}

namespace {

std::vector<std::string> StatCells(const std::optional<Stat> &s) {
  if (!s) return {"NA", "NA", "0"};
  return {FormatValue(s->mean), FormatValue(s->std), std::to_string(s->count)};
}

std::vector<std::string> GeometryRow(const std::string &label, const GeometryStats &g) {
  std::vector<std::string> row{label};
  for (const auto *s : {&g.pos_sim, &g.hard_neg_dist, &g.soft_neg_dist}) {
    const auto cells = StatCells(*s);
    row.insert(row.end(), cells.begin(), cells.end());
  }
  return row;
}

}  // namespace

CsvTable RetrievalTable(const CrossGenderRetrieval &r) {
  CsvTable t{{"direction", "top1", "top5", "queries"}, {}};
  for (const auto *d : {&r.f2m, &r.m2f})
    t.rows.push_back({d->direction, FormatValue(d->top1), FormatValue(d->top5),
                      std::to_string(d->ranks.size())});
  t.rows.push_back({"avg", FormatValue(r.avg_top1), FormatValue(r.avg_top5),
                    std::to_string(r.f2m.ranks.size() + r.m2f.ranks.size())});
  return t;
}

CsvTable ToneTable(const ToneGeometry &g) {
  CsvTable t{{"tone", "pos_sim_mean", "pos_sim_std", "pos_pairs", "hard_neg_dist_mean",
              "hard_neg_dist_std", "hard_pairs", "soft_neg_dist_mean", "soft_neg_dist_std",
              "soft_pairs"},
             {}};
  t.rows.push_back(GeometryRow("all", g.overall));
  for (const auto &[tone, s] : g.per_tone) t.rows.push_back(GeometryRow(std::to_string(tone), s));
  return t;
}

CsvTable AsrTable(const AsrDecode &a) {
  const auto &s = a.score;
  CsvTable t{{"unit", "rate", "substitutions", "deletions", "insertions", "reference_length"},
             {}};
  t.rows.push_back({"word", FormatValue(s.wer), std::to_string(s.words.substitutions),
                    std::to_string(s.words.deletions), std::to_string(s.words.insertions),
                    std::to_string(s.words.reference_length)});
  t.rows.push_back({"char", FormatValue(s.cer), std::to_string(s.chars.substitutions),
                    std::to_string(s.chars.deletions), std::to_string(s.chars.insertions),
                    std::to_string(s.chars.reference_length)});
  return t;
}

CsvTable SimilarityTable(const SimilarityResult &s) {
  CsvTable t{{"experiment", "shift", "mean_similarity"}, {}};
  t.rows.push_back({"E1", "", FormatValue(s.e1)});
  for (const auto &[shift, v] : s.e2_by_shift)
    t.rows.push_back({"E2", FormatValue(shift), FormatValue(v)});
  t.rows.push_back({"E2", "all", FormatValue(s.e2)});
  t.rows.push_back({"E3", "", FormatValue(s.e3)});
  t.rows.push_back({"E4", "", FormatValue(s.e4)});
  return t;
}

CsvTable ProbeTable(const std::vector<ProbeRow> &rows) {
  CsvTable t{{"layer", "avg_top1", "hard_neg_dist"}, {}};
  for (const auto &r : rows)
    t.rows.push_back({std::to_string(r.layer), FormatValue(r.avg_top1),
                      FormatValue(r.hard_neg_dist)});
  return t;
}

CsvTable ToneClsTable(const ToneClsAccuracy &a) {
  return {{"top1", "top3", "tokens"},
          {{FormatValue(a.top1), FormatValue(a.top3), std::to_string(a.count)}}};
}

}  // namespace sita
