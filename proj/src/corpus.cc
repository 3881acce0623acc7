// src/corpus.cc

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

#include "sita/corpus.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

namespace sita {

std::string GenderName(Gender g) { return g == Gender::kFemale ? "F" : "M"; }

Gender ParseGender(std::string_view s) {
  if (s == "F") return Gender::kFemale;
  if (s == "M") return Gender::kMale;
  throw Error("bad gender '" + std::string(s) + "' (expected F or M)");
}

std::string SplitName(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split ParseSplit(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw Error("bad split '" + std::string(s) + "'");
}

// --- tone inventory --------------------------------------------------------

namespace {

constexpr std::array<const char *, 7> kHmongMarkers = {"b", "", "s", "j",
                                                       "v", "g", "m"};

// (start, end) of linear contours; the four-tone dipping tone is special-cased.
constexpr std::array<std::array<double, 2>, 7> kHmongContours = {{
    {0.8, 0.8},    // high level
    {0.0, 0.0},    // mid level
    {-0.8, -0.8},  // low level
    {0.8, -0.4},   // high falling
    {-0.2, 0.8},   // mid rising
    {0.4, -0.8},   // breathy falling
    {-0.4, -1.2},  // low falling creaky
}};

constexpr std::array<std::array<double, 2>, 4> kFourToneContours = {{
    {0.8, 0.8},    // high level
    {-0.4, 0.8},   // rising
    {-0.4, -0.2},  // dipping, through -1.0 at mid-token
    {0.8, -1.0},   // falling
}};

void CheckTone(int n_tones, int tone) {
  if (n_tones < 2 || n_tones > 7)
    throw Error("tone inventory must have 2 to 7 tones");
  if (tone < 1 || tone > n_tones) throw Error("tone out of range");
}

}  // namespace

std::vector<std::string> ToneMarkers(int n_tones) {
  CheckTone(n_tones, 1);
  std::vector<std::string> out;
  for (int t = 0; t < n_tones; ++t)
    out.emplace_back(n_tones == 4 ? std::string(1, static_cast<char>('1' + t))
                                  : std::string(kHmongMarkers[t]));
  return out;
}

double ToneContour(int n_tones, int tone, double u) {
  CheckTone(n_tones, tone);
  if (n_tones == 4) {
    const auto &c = kFourToneContours[tone - 1];
    if (tone == 3) {
      return u < 0.5 ? -0.4 - 1.2 * u : -1.0 + 1.6 * (u - 0.5);
    }
    return c[0] + (c[1] - c[0]) * u;
  }
  const auto &c = kHmongContours[tone - 1];
  return c[0] + (c[1] - c[0]) * u;
}

double ToneSlope(int n_tones, int tone, double u) {
  CheckTone(n_tones, tone);
  if (n_tones == 4) {
    if (tone == 3) return u < 0.5 ? -1.2 : 1.6;
    const auto &c = kFourToneContours[tone - 1];
    return c[1] - c[0];
  }
  const auto &c = kHmongContours[tone - 1];
  return c[1] - c[0];
}

// --- configuration ---------------------------------------------------------

std::vector<SpeakerSpec> DefaultSpeakers() {
  return {
      {"F1", Gender::kFemale, 0.6, 1.5},   {"F2", Gender::kFemale, 0.8, 1.2},
      {"F3", Gender::kFemale, 0.5, 1.8},   {"F4", Gender::kFemale, 0.7, 1.1},
      {"M1", Gender::kMale, -0.6, -1.5},   {"M2", Gender::kMale, -0.8, -1.2},
      {"M3", Gender::kMale, -0.5, -1.8},   {"M4", Gender::kMale, -0.7, -1.1},
  };
}

namespace {

constexpr std::array<const char *, 18> kOnsets = {
    "l", "n", "t", "k", "p", "h", "x", "d", "r",
    "c", "z", "f", "y", "nt", "ts", "ch", "pl", "ny"};
// No rime ends in a tone letter, so the marker is always recoverable.
constexpr std::array<const char *, 12> kRimes = {
    "ia", "a", "o", "u", "ee", "ai", "aw", "i", "e", "ua", "oo", "au"};

}  // namespace

void CorpusSpec::Validate() const {
  if (n_base_words < 2) throw Error("corpus needs at least 2 base words");
  if (static_cast<std::size_t>(n_base_words) > kOnsets.size() * kRimes.size())
    throw Error("too many base words for the syllable inventory");
  CheckTone(n_tones, 1);
  if (feature_dim < 4) throw Error("feature_dim must be at least 4");
  if (min_frames < 1 || max_frames < min_frames)
    throw Error("bad frame-count range");
  if (!(noise_sigma >= 0.0)) throw Error("noise_sigma must be non-negative");
  bool has_f = false, has_m = false;
  std::set<std::string> ids;
  for (const auto &s : speakers) {
    if (s.id.empty()) throw Error("empty speaker id");
    if (!ids.insert(s.id).second) throw Error("duplicate speaker id " + s.id);
    (s.gender == Gender::kFemale ? has_f : has_m) = true;
  }
  if (!has_f || !has_m)
    throw Error("corpus needs at least one speaker of each gender");
}

const SpeakerSpec &CorpusSpec::Speaker(std::string_view id) const {
  for (const auto &s : speakers)
    if (s.id == id) return s;
  throw Error("unknown speaker '" + std::string(id) + "'");
}

namespace {

std::vector<std::string> BaseWords(const CorpusSpec &spec) {
  std::vector<std::string> all;
  for (const char *o : kOnsets)
    for (const char *r : kRimes) all.push_back(std::string(o) + r);
  Rng rng(SubstreamSeed(spec.seed, "lexicon"));
  rng.Shuffle(all);
  // Distinct strings only: "n"+"ia" and "ny"+"a" never collide, but keep the
  // check so inventory edits cannot silently break uniqueness.
  std::set<std::string> chosen;
  for (const auto &w : all) {
    if (chosen.size() == static_cast<std::size_t>(spec.n_base_words)) break;
    chosen.insert(w);
  }
  return {chosen.begin(), chosen.end()};
}

Vector PhoneVector(const CorpusSpec &spec, char phone) {
  const int segment_dim = spec.feature_dim - 2;
  Rng rng(SubstreamSeed(spec.seed, std::string("phone:") + phone));
  Vector v(segment_dim);
  for (int d = 0; d < segment_dim; ++d) v(d) = rng.Normal();
  return v;
}

double Ramp(int channel, int segment_dim) {
  if (segment_dim == 1) return 0.0;
  return -1.0 + 2.0 * channel / static_cast<double>(segment_dim - 1);
}

}  // namespace

Vector SpeakerOffset(const SpeakerSpec &speaker, int feature_dim) {
  const int segment_dim = feature_dim - 2;
  Vector off = Vector::Zero(feature_dim);
  for (int d = 0; d < segment_dim; ++d)
    off(d) = speaker.spectral_tilt * Ramp(d, segment_dim);
  off(segment_dim) = speaker.base_pitch;
  return off;
}

std::vector<Token> Generate(const CorpusSpec &spec) {
  spec.Validate();
  const int dim = spec.feature_dim;
  const int segment_dim = dim - 2;
  const auto markers = ToneMarkers(spec.n_tones);
  const auto bases = BaseWords(spec);

  std::map<char, Vector> phones;
  for (const auto &b : bases)
    for (char c : b)
      if (!phones.count(c)) phones.emplace(c, PhoneVector(spec, c));

  std::vector<Token> out;
  for (const auto &base : bases) {
    for (int tone = 1; tone <= spec.n_tones; ++tone) {
      const std::string word = base + markers[tone - 1];
      Rng len_rng(SubstreamSeed(spec.seed, "frames:" + word));
      const int n_frames = len_rng.Int(spec.min_frames, spec.max_frames);
      // Noise-free template shared by every speaker of this word.
      Matrix clean(n_frames, dim);
      const auto n_phones = static_cast<int>(base.size());
      for (int t = 0; t < n_frames; ++t) {
        const double u = (t + 0.5) / n_frames;
        const char phone = base[static_cast<std::size_t>(t * n_phones / n_frames)];
        clean.row(t).head(segment_dim) =
            (phones.at(phone).array() + spec.spectral_floor).matrix().transpose();
        clean(t, segment_dim) = ToneContour(spec.n_tones, tone, u);
        clean(t, segment_dim + 1) =
            spec.slope_scale * ToneSlope(spec.n_tones, tone, u);
      }
      for (const auto &speaker : spec.speakers) {
        Token tok;
        tok.id = speaker.id + "_" + word;
        tok.word = word;
        tok.base_word = base;
        tok.tone = tone;
        tok.speaker_id = speaker.id;
        tok.gender = speaker.gender;
        tok.features = clean;
        tok.features.rowwise() += SpeakerOffset(speaker, dim).transpose();
        if (spec.noise_sigma > 0.0) {
          Rng noise(SubstreamSeed(spec.seed, "noise:" + tok.id));
          for (Eigen::Index i = 0; i < tok.features.size(); ++i)
            tok.features.data()[i] += spec.noise_sigma * noise.Normal();
        }
        out.push_back(std::move(tok));
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Token &a, const Token &b) { return a.id < b.id; });
  return out;
}

// --- perturbations ---------------------------------------------------------

Perturbation Perturbation::AdditiveNoise(double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error("noise sigma must be non-negative");
  return {PerturbationKind::kAdditiveNoise, sigma, seed};
}

Perturbation Perturbation::TimeStretch(double ratio) {
  if (!(ratio >= 0.8 && ratio <= 1.25))
    throw Error("time-stretch ratio must lie in [0.8, 1.25]");
  return {PerturbationKind::kTimeStretch, ratio, 0};
}

Perturbation Perturbation::Gain(double db) {
  return {PerturbationKind::kGain, db, 0};
}

Perturbation Perturbation::PitchShift(double semitones) {
  return {PerturbationKind::kPitchShift, semitones, 0};
}

Token Perturb(const Token &token, const Perturbation &p, bool tone_safe) {
  if (p.tone_unsafe() && tone_safe) throw Error("tone-unsafe perturbation");
  const Eigen::Index n_frames = token.features.rows();
  const Eigen::Index dim = token.features.cols();
  if (n_frames == 0) throw Error("token has no frames");
  if (dim < 4) throw Error("token features are narrower than 4 channels");
  const Eigen::Index pitch = dim - 2;
  Token out = token;
  switch (p.kind) {
    case PerturbationKind::kAdditiveNoise: {
      if (p.amount == 0.0) break;
      Rng rng(p.seed);
      for (Eigen::Index i = 0; i < out.features.size(); ++i)
        out.features.data()[i] += p.amount * rng.Normal();
      break;
    }
    case PerturbationKind::kTimeStretch: {
      if (!(p.amount >= 0.8 && p.amount <= 1.25))
        throw Error("time-stretch ratio must lie in [0.8, 1.25]");
      const auto new_frames = std::max<Eigen::Index>(
          1, static_cast<Eigen::Index>(std::lround(n_frames / p.amount)));
      Matrix stretched(new_frames, dim);
      const double step = static_cast<double>(n_frames) / new_frames;
      for (Eigen::Index t = 0; t < new_frames; ++t) {
        double pos = (t + 0.5) * step - 0.5;
        pos = std::clamp(pos, 0.0, static_cast<double>(n_frames - 1));
        const auto lo = static_cast<Eigen::Index>(std::floor(pos));
        const Eigen::Index hi = std::min(lo + 1, n_frames - 1);
        const double w = pos - lo;
        stretched.row(t) =
            (1.0 - w) * token.features.row(lo) + w * token.features.row(hi);
      }
      out.features = std::move(stretched);
      break;
    }
    case PerturbationKind::kGain:
      out.features.leftCols(pitch).array() += p.amount * kLogGainPerDb;
      break;
    case PerturbationKind::kPitchShift:
      out.features.col(pitch).array() += p.amount * kPitchPerSemitone;
      break;
  }
  return out;
}

Token SpeakerTransplant(const Token &token, const SpeakerSpec &from,
                        const SpeakerSpec &to, int feature_dim) {
  if (token.split != Split::kTrain)
    throw Error("speaker transplant is restricted to the training split");
  if (token.speaker_id != from.id)
    throw Error("token " + token.id + " is not spoken by " + from.id);
  if (token.features.cols() != feature_dim)
    throw Error("feature dimension mismatch in speaker transplant");
  Token out = token;
  const Vector delta =
      SpeakerOffset(to, feature_dim) - SpeakerOffset(from, feature_dim);
  out.features.rowwise() += delta.transpose();
  out.speaker_id = to.id;
  out.gender = to.gender;
  out.id = token.id + "~vc-" + to.id;
  return out;
}

std::vector<Token> AugmentTrainViews(const std::vector<Token> &corpus,
                                     const CorpusSpec &spec,
                                     const AugmentConfig &config,
                                     std::uint64_t seed) {
  std::vector<Token> views;
  Rng rng(seed);
  for (const Token &tok : corpus) {
    if (tok.split != Split::kTrain) continue;
    const auto &pool = config.transplant_pool;
    if (std::find(pool.begin(), pool.end(), tok.speaker_id) != pool.end() &&
        pool.size() >= 2) {
      std::vector<std::string> targets;
      for (const auto &s : pool)
        if (s != tok.speaker_id) targets.push_back(s);
      const std::string &target = targets[rng.Index(targets.size())];
      views.push_back(SpeakerTransplant(tok, spec.Speaker(tok.speaker_id),
                                        spec.Speaker(target), spec.feature_dim));
    }
    for (int k = 0; k < config.perturbed_views; ++k) {
      Token v = Perturb(tok, Perturbation::AdditiveNoise(config.noise_sigma,
                                                         rng.NextU64()),
                        true);
      const double stretch = std::exp(
          rng.Uniform(-std::log(config.max_stretch), std::log(config.max_stretch)));
      v = Perturb(v, Perturbation::TimeStretch(stretch), true);
      v = Perturb(v, Perturbation::Gain(rng.Uniform(-config.max_gain_db,
                                                    config.max_gain_db)),
                  true);
      v.id = tok.id + "~aug" + std::to_string(k);
      views.push_back(std::move(v));
    }
  }
  std::sort(views.begin(), views.end(),
            [](const Token &a, const Token &b) { return a.id < b.id; });
  return views;
}

// --- mining ------------------------------------------------------------------

PairMiner::PairMiner(const std::vector<Token> &corpus,
                     std::vector<std::size_t> pool, MiningConfig config)
    : corpus_(corpus), pool_(std::move(pool)), config_(config) {
  if (config_.n_negatives < 1) throw Error("need at least one negative");
  for (std::size_t i : pool_) {
    if (i >= corpus_.size()) throw Error("mining pool index out of range");
    const Token &t = corpus_[i];
    by_word_[t.word].push_back(i);
    by_base_[t.base_word].push_back(i);
    by_word_gender_[{t.word, t.gender}].push_back(i);
  }
}

bool PairMiner::HasCrossGenderPositive(std::size_t anchor) const {
  const Token &a = corpus_.at(anchor);
  auto it = by_word_gender_.find({a.word, Opposite(a.gender)});
  return it != by_word_gender_.end() && !it->second.empty();
}

PairSet PairMiner::Mine(std::size_t anchor, Rng &rng) const {
  const Token &a = corpus_.at(anchor);
  PairSet ps;
  ps.anchor = anchor;

  auto it = by_word_gender_.find({a.word, Opposite(a.gender)});
  if (it != by_word_gender_.end() && !it->second.empty())
    ps.cross_gender_positive = it->second[rng.Index(it->second.size())];

  std::vector<std::size_t> other_word, other_base;
  for (std::size_t i : pool_) {
    if (corpus_[i].word != a.word) other_word.push_back(i);
    if (corpus_[i].base_word != a.base_word) other_base.push_back(i);
  }
  ps.contrastive_negatives =
      rng.Sample(other_word, static_cast<std::size_t>(config_.n_negatives));

  std::vector<std::size_t> same_word;
  for (std::size_t i : by_word_.at(a.word))
    if (i != anchor) same_word.push_back(i);
  // Tone positives never repeat.
  const std::size_t n_pos = std::min(
      same_word.size(), static_cast<std::size_t>(config_.max_tone_positives));
  ps.tone_positives = rng.Sample(same_word, n_pos);

  std::vector<std::size_t> hard;
  auto base_it = by_base_.find(a.base_word);
  if (base_it != by_base_.end())
    for (std::size_t i : base_it->second)
      if (corpus_[i].tone != a.tone) hard.push_back(i);
  if (config_.max_hard_negatives > 0 &&
      hard.size() > static_cast<std::size_t>(config_.max_hard_negatives))
    hard = rng.Sample(hard, static_cast<std::size_t>(config_.max_hard_negatives));
  ps.hard_negatives = std::move(hard);

  ps.soft_negatives =
      rng.Sample(other_base, static_cast<std::size_t>(config_.n_soft_negatives));
  return ps;
}

std::size_t FindToken(const std::vector<Token> &corpus, std::string_view id) {
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].id == id) return i;
  throw Error("unknown token id '" + std::string(id) + "'");
}

PairSet MinePairs(const std::vector<Token> &corpus, std::string_view anchor_id,
                  int n_negatives, std::uint64_t seed,
                  const MiningConfig &config) {
  if (n_negatives < 1) throw Error("need at least one negative");
  const std::size_t anchor = FindToken(corpus, anchor_id);
  std::vector<std::size_t> pool(corpus.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  MiningConfig cfg = config;
  cfg.n_negatives = n_negatives;
  PairMiner miner(corpus, std::move(pool), cfg);
  if (!miner.HasCrossGenderPositive(anchor))
    throw Error("anchor unusable for speaker loss");
  Rng rng(seed);
  return miner.Mine(anchor, rng);
}

// --- splits ------------------------------------------------------------------

std::vector<Token> AssignSplits(std::vector<Token> corpus,
                                const SplitPolicy &policy) {
  for (auto &t : corpus) t.split = Split::kTrain;
  if (policy.kind == SplitPolicy::Kind::kHeldOutSpeaker) {
    bool found = false;
    for (auto &t : corpus) {
      if (t.speaker_id == policy.held_out_speaker) {
        t.split = Split::kTest;
        found = true;
      }
    }
    if (!found)
      throw Error("held-out speaker '" + policy.held_out_speaker +
                  "' not in corpus");
    return corpus;
  }

  // Group in id order so the assignment does not depend on input order.
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus[a].id < corpus[b].id;
  });
  std::map<std::pair<std::string, Gender>, std::vector<std::size_t>> by_wg;
  std::map<std::string, std::vector<std::size_t>> by_base;
  for (std::size_t i : order) {
    by_wg[{corpus[i].word, corpus[i].gender}].push_back(i);
    by_base[corpus[i].base_word].push_back(i);
  }
  Rng rng(policy.seed);
  for (const auto &[key, members] : by_wg) {
    if (members.size() >= 2) corpus[members[rng.Index(members.size())]].split = Split::kTest;
  }
  for (const auto &[base, members] : by_base) {
    const bool covered = std::any_of(members.begin(), members.end(), [&](std::size_t i) {
      return corpus[i].split == Split::kTest;
    });
    if (!covered) corpus[members[rng.Index(members.size())]].split = Split::kTest;
  }
  return corpus;
}

// --- persistence -------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void WriteU32(std::ostream &os, std::uint32_t v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

std::uint32_t ReadU32(std::istream &is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char *>(&v), sizeof(v));
  return v;
}

}  // namespace

void WriteFeatureFile(const std::filesystem::path &path, const Matrix &m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os.write("SITF", 4);
  WriteU32(os, static_cast<std::uint32_t>(m.rows()));
  WriteU32(os, static_cast<std::uint32_t>(m.cols()));
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    buf[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  os.write(reinterpret_cast<const char *>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw Error("failed writing " + path.string());
}

Matrix ReadFeatureFile(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SITF", 4) != 0)
    throw Error(path.string() + ": bad magic, expected SITF");
  const std::uint32_t rows = ReadU32(is), cols = ReadU32(is);
  if (!is) throw Error(path.string() + ": truncated header");
  std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
  is.read(reinterpret_cast<char *>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw Error(path.string() + ": truncated payload");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < buf.size(); ++i) m.data()[i] = buf[i];
  return m;
}

void WriteCorpus(const std::filesystem::path &dir,
                 const std::vector<Token> &tokens) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  std::vector<const Token *> sorted;
  for (const auto &t : tokens) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const Token *a, const Token *b) { return a->id < b->id; });
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw Error("cannot write " + (dir / "manifest.jsonl").string());
  for (const Token *t : sorted) {
    const std::string rel = "features/" + t->id + ".sitf";
    WriteFeatureFile(dir / rel, t->features);
    nlohmann::ordered_json rec;
    rec["id"] = t->id;
    rec["word"] = t->word;
    rec["base_word"] = t->base_word;
    rec["tone"] = t->tone;
    rec["speaker_id"] = t->speaker_id;
    rec["gender"] = GenderName(t->gender);
    rec["split"] = SplitName(t->split);
    rec["feature_path"] = rel;
    rec["n_frames"] = t->features.rows();
    manifest << rec.dump() << '\n';
  }
  if (!manifest) throw Error("failed writing manifest in " + dir.string());
}

std::vector<Token> ReadCorpus(const std::filesystem::path &dir) {
  const auto path = dir / "manifest.jsonl";
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::vector<Token> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Token t;
      t.id = rec.at("id").get<std::string>();
      t.word = rec.at("word").get<std::string>();
      t.base_word = rec.at("base_word").get<std::string>();
      t.tone = rec.at("tone").get<int>();
      t.speaker_id = rec.at("speaker_id").get<std::string>();
      t.gender = ParseGender(rec.at("gender").get<std::string>());
      t.split = ParseSplit(rec.at("split").get<std::string>());
      t.features = ReadFeatureFile(dir / rec.at("feature_path").get<std::string>());
      if (t.features.rows() != rec.at("n_frames").get<long>())
        throw Error("n_frames disagrees with feature file");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception &e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void WriteLexicon(const std::filesystem::path &path,
                  const std::vector<std::string> &words) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto &w : words) os << w << '\n';
}

std::vector<std::string> ReadLexicon(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace sita
