// include/sita/eval.h

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

#ifndef SITA_EVAL_H_
#define SITA_EVAL_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sita/corpus.h"
#include "sita/ctc.h"
#include "sita/encoder.h"
#include "sita/math.h"

namespace sita {

struct LabeledEmbedding {
  std::string id;
  std::string word;
  std::string base_word;
  int tone = 1;
  std::string speaker_id;
  Gender gender = Gender::kFemale;
  Embedding embedding;
};

LabeledEmbedding Label(const Token &token, Embedding embedding);

// Pooled, normalized h^(layer) for every token, in input order.
std::vector<LabeledEmbedding> EmbedTokens(const std::vector<Token> &tokens,
                                          const EncoderStack &stack, int layer,
                                          const PoolingMode &mode);

// --- retrieval ---

struct RetrievalResult {
  std::string direction;
  // 1-based rank of the best matching gallery item per query; 0 when the
  // gallery holds no item with the query's word.
  std::vector<int> ranks;
  double top1 = 0.0;
  double top5 = 0.0;

  double TopK(int k) const;
};

// Ranks the gallery by cosine similarity, descending, ties in input order.
RetrievalResult RetrievalTopK(const std::vector<LabeledEmbedding> &queries,
                              const std::vector<LabeledEmbedding> &gallery,
                              const std::string &direction = "");

struct CrossGenderRetrieval {
  RetrievalResult f2m;
  RetrievalResult m2f;
  double avg_top1 = 0.0;
  double avg_top5 = 0.0;
};

// Female queries against the male gallery and vice versa.
CrossGenderRetrieval CrossGenderTopK(const std::vector<LabeledEmbedding> &tokens);

// --- tone geometry ---

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population
  long count = 0;
};

struct GeometryStats {
  std::optional<Stat> pos_sim;        // same word
  std::optional<Stat> hard_neg_dist;  // same base word, other tone
  std::optional<Stat> soft_neg_dist;  // other base word
};

struct ToneGeometry {
  GeometryStats overall;
  std::map<int, GeometryStats> per_tone;  // keyed by the anchor's tone
};

// Over ordered pairs of distinct tokens.
ToneGeometry ComputeToneGeometry(const std::vector<LabeledEmbedding> &tokens);

// --- ASR ---

struct EditCounts {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long reference_length = 0;

  long errors() const { return substitutions + deletions + insertions; }
};

EditCounts EditDistance(const std::vector<std::string> &hypothesis,
                        const std::vector<std::string> &reference);

struct AsrScore {
  EditCounts words;
  EditCounts chars;
  double wer = 0.0;
  double cer = 0.0;
};

// Utterances are whitespace-separated word strings. Characters are counted
// over the concatenated words of each utterance.
AsrScore EditRates(const std::vector<std::string> &hypotheses,
                   const std::vector<std::string> &references);

struct AsrDecode {
  std::vector<std::string> ids, references, hypotheses;
  AsrScore score;
};

AsrDecode DecodeAndScore(const std::vector<Token> &tokens, const EncoderStack &stack,
                         const Vocabulary &vocab, const std::vector<std::string> &lexicon,
                         int beam_width);

// --- similarity experiments ---

struct SimilarityConfig {
  std::vector<double> semitone_shifts = {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};
  // Different-base-word pairs for E3; when more exist, a seeded permutation
  // picks this many.
  int max_e3_pairs = 2000;
  std::uint64_t seed = 0;
};

struct SimilarityResult {
  std::optional<double> e1, e2, e3, e4;
  std::vector<std::pair<double, double>> e2_by_shift;  // (shift, mean sim)
};

// E1, E3 and E4 from precomputed embeddings.
SimilarityResult PairSimilarities(const std::vector<LabeledEmbedding> &tokens,
                                  const SimilarityConfig &cfg);

// Mean-pooled embeddings at `layer`, with E2 from pitch-shifted copies.
SimilarityResult SimilarityExperiments(const std::vector<Token> &tokens,
                                       const EncoderStack &stack, int layer,
                                       const SimilarityConfig &cfg);

// --- layer probe ---

struct ProbeRow {
  int layer = 0;
  double avg_top1 = 0.0;
  std::optional<double> hard_neg_dist;
};

std::vector<ProbeRow> LayerProbe(const std::vector<Token> &tokens,
                                 const EncoderStack &stack,
                                 const PoolingMode &retrieval_pooling,
                                 const PoolingMode &geometry_pooling);

// --- tone classification ---

struct ToneClsAccuracy {
  double top1 = 0.0;
  double top3 = 0.0;
  long count = 0;
};

// Ranks tones by logit, ties broken toward the lower tone index.
ToneClsAccuracy ToneClassification(const std::vector<LabeledEmbedding> &tokens,
                                   const ToneHead &head);

// --- projection ---

struct Projection {
  Matrix coords;              // n x 2
  Vector explained_variance;  // 2
  bool rank_deficient = false;
};

Projection Project2d(const std::vector<Vector> &points);

// --- CSV ---

std::string FormatValue(double v);
std::string FormatValue(const std::optional<double> &v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void Write(const std::filesystem::path &path) const;
  static CsvTable Read(const std::filesystem::path &path);
};

CsvTable RetrievalTable(const CrossGenderRetrieval &r);
CsvTable ToneTable(const ToneGeometry &g);
CsvTable AsrTable(const AsrDecode &a);
CsvTable SimilarityTable(const SimilarityResult &s);
CsvTable ProbeTable(const std::vector<ProbeRow> &rows);
CsvTable ToneClsTable(const ToneClsAccuracy &a);

}  // namespace sita

#endif  // SITA_EVAL_H_
