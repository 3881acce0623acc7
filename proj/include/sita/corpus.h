// include/sita/corpus.h

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

#ifndef SITA_CORPUS_H_
#define SITA_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sita/math.h"
#include "sita/random.h"

namespace sita {

enum class Gender { kFemale, kMale };
enum class Split { kTrain, kTest };

std::string GenderName(Gender g);  // "F" / "M"
Gender ParseGender(std::string_view s);
std::string SplitName(Split s);  // "train" / "test"
Split ParseSplit(std::string_view s);
inline Gender Opposite(Gender g) {
  return g == Gender::kFemale ? Gender::kMale : Gender::kFemale;
}

// One spoken word: frame features plus every label the objectives consume.
struct Token {
  std::string id;
  std::string word;       // base_word followed by the tone marker
  std::string base_word;  // segmental content
  int tone = 1;           // 1-based index into the tone inventory
  std::string speaker_id;
  Gender gender = Gender::kFemale;
  Split split = Split::kTrain;
  Matrix features;  // T x D

  Eigen::Index frames() const { return features.rows(); }
};

struct SpeakerSpec {
  std::string id;
  Gender gender = Gender::kFemale;
  double base_pitch = 0.0;     // added to the pitch channel
  double spectral_tilt = 0.0;  // scales a linear ramp over segment channels

  bool operator==(const SpeakerSpec &) const = default;
};

// Eight speakers, four of each gender, with gender-separated pitch and tilt.
std::vector<SpeakerSpec> DefaultSpeakers();

// Parameters of the synthetic tonal-word corpus.
//
// Feature layout for dimension D: channels [0, D-2) carry the segmental
// template (a shared spectral floor plus one vector per phone letter, laid out
// left to right over the frames), channel D-2 carries the pitch contour of the
// tone plus the speaker's base pitch, and channel D-1 carries the contour's
// slope. Speakers add spectral_tilt * ramp to the segment channels, where the
// ramp runs linearly from -1 to +1 across those channels.
struct CorpusSpec {
  int n_base_words = 30;
  int n_tones = 7;
  std::vector<SpeakerSpec> speakers = DefaultSpeakers();
  int min_frames = 16;
  int max_frames = 24;
  int feature_dim = 16;
  std::uint64_t seed = 42;
  double noise_sigma = 0.1;
  double spectral_floor = 2.0;
  double slope_scale = 0.5;

  // Throws Error when an invariant is violated.
  void Validate() const;
  const SpeakerSpec &Speaker(std::string_view id) const;

  bool operator==(const CorpusSpec &) const = default;
};


// Tone marker letters: Hmong RPA order for seven tones (b, none, s, j, v, g,
// m), digits for the four-tone inventory.
std::vector<std::string> ToneMarkers(int n_tones);
// Pitch contour and its slope of a tone at normalized time u in [0, 1].
double ToneContour(int n_tones, int tone, double u);
double ToneSlope(int n_tones, int tone, double u);

// Generates one token per (base word, tone, speaker), sorted by id.
// Deterministic given the spec: every token draws from its own substream.
std::vector<Token> Generate(const CorpusSpec &spec);

// The noise-free pitch and segment offsets a speaker contributes to a D-wide
// frame.
Vector SpeakerOffset(const SpeakerSpec &speaker, int feature_dim);

enum class PerturbationKind { kAdditiveNoise, kTimeStretch, kGain, kPitchShift };

struct Perturbation {
  PerturbationKind kind = PerturbationKind::kGain;
  // sigma, stretch ratio, gain in dB or semitones, by kind.
  double amount = 0.0;
  std::uint64_t seed = 0;  // additive noise only

  static Perturbation AdditiveNoise(double sigma, std::uint64_t seed);
  static Perturbation TimeStretch(double ratio);
  static Perturbation Gain(double db);
  static Perturbation PitchShift(double semitones);

  bool tone_unsafe() const { return kind == PerturbationKind::kPitchShift; }
};

// Pitch channel units per semitone; the contour templates span roughly an
// octave.
inline constexpr double kPitchPerSemitone = 1.0 / 12.0;
// Segment channel offset per dB of gain (natural-log spectrum units).
inline constexpr double kLogGainPerDb = 0.11512925464970229;  // ln(10) / 20

// Returns a relabelled-identical copy with transformed features. Pitch shifts
// are refused when `tone_safe` is set.
Token Perturb(const Token &token, const Perturbation &p, bool tone_safe);

// Moves a training token into another speaker's voice by swapping the speaker
// offsets; the view carries the target speaker's id and gender.
Token SpeakerTransplant(const Token &token, const SpeakerSpec &from,
                        const SpeakerSpec &to, int feature_dim);

struct AugmentConfig {
  // Speakers whose training tokens are converted into each other's voices.
  std::vector<std::string> transplant_pool;
  // Tone-safe perturbed copies per training token (noise, stretch, gain).
  int perturbed_views = 0;
  double noise_sigma = 0.05;
  double max_stretch = 1.15;
  double max_gain_db = 3.0;

  bool operator==(const AugmentConfig &) const = default;
};

// Extra training views; test tokens are never used as source or target.
std::vector<Token> AugmentTrainViews(const std::vector<Token> &corpus,
                                     const CorpusSpec &spec,
                                     const AugmentConfig &config,
                                     std::uint64_t seed);

struct MiningConfig {
  int n_negatives = 20;
  int max_tone_positives = 4;
  int max_hard_negatives = 8;  // 0 keeps every candidate
  int n_soft_negatives = 20;

  bool operator==(const MiningConfig &) const = default;
};

// Anchor-centred index sets. Members are indices into the mined corpus.
struct PairSet {
  std::size_t anchor = 0;
  std::optional<std::size_t> cross_gender_positive;
  std::vector<std::size_t> contrastive_negatives;
  std::vector<std::size_t> tone_positives;  // P: same word, other token
  std::vector<std::size_t> hard_negatives;  // H: same base word, other tone
  std::vector<std::size_t> soft_negatives;  // S: other base word
};

// Label index over a fixed token list; mining draws from a restricted subset
// (usually the training split).
class PairMiner {
 public:
  PairMiner(const std::vector<Token> &corpus, std::vector<std::size_t> pool,
            MiningConfig config);

  // A pair set whose cross_gender_positive is empty when no candidate exists.
  PairSet Mine(std::size_t anchor, Rng &rng) const;
  const std::vector<std::size_t> &pool() const { return pool_; }
  bool HasCrossGenderPositive(std::size_t anchor) const;

 private:
  const std::vector<Token> &corpus_;
  std::vector<std::size_t> pool_;
  MiningConfig config_;
  std::map<std::string, std::vector<std::size_t>> by_word_;
  std::map<std::string, std::vector<std::size_t>> by_base_;
  std::map<std::pair<std::string, Gender>, std::vector<std::size_t>> by_word_gender_;
};

// Mines over the whole corpus. Throws "anchor unusable for speaker loss" when
// no opposite-gender token of the anchor's word exists.
PairSet MinePairs(const std::vector<Token> &corpus, std::string_view anchor_id,
                  int n_negatives, std::uint64_t seed,
                  const MiningConfig &config = {});

struct SplitPolicy {
  enum class Kind { kCoverage, kHeldOutSpeaker };
  Kind kind = Kind::kCoverage;
  std::string held_out_speaker;
  std::uint64_t seed = 0;
};

// Assigns split labels. Coverage moves one token per (word, gender) with at
// least two candidates into test, then adds a token for every base word still
// missing from test. Held-out-speaker sends exactly one speaker to test.
std::vector<Token> AssignSplits(std::vector<Token> corpus,
                                const SplitPolicy &policy);

std::size_t FindToken(const std::vector<Token> &corpus, std::string_view id);

// --- persistence ---------------------------------------------------------

// "SITF", uint32 T, uint32 D (little endian), T*D float32 row-major.
void WriteFeatureFile(const std::filesystem::path &path, const Matrix &m);
Matrix ReadFeatureFile(const std::filesystem::path &path);

// Writes manifest.jsonl plus features/<id>.sitf under `dir`.
void WriteCorpus(const std::filesystem::path &dir,
                 const std::vector<Token> &tokens);
std::vector<Token> ReadCorpus(const std::filesystem::path &dir);

// One label sequence per line; tokens are the word's characters.
void WriteLexicon(const std::filesystem::path &path,
                  const std::vector<std::string> &words);
std::vector<std::string> ReadLexicon(const std::filesystem::path &path);

}  // namespace sita

#endif  // SITA_CORPUS_H_
