// src/pipeline.cc

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

#include "sita/pipeline.h"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "sita/random.h"

namespace sita {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

RunConfig::RunConfig() { corpus.n_tones = 4; }

std::uint64_t RunConfig::Seed(std::string_view stream) const {
  return SubstreamSeed(seed, stream);
}

CorpusSpec RunConfig::ResolvedCorpus() const {
  CorpusSpec c = corpus;
  c.seed = Seed("corpus");
  return c;
}

StackConfig RunConfig::ResolvedStack(int n_outputs) const {
  StackConfig s = stack;
  s.hidden_dim = corpus.feature_dim;
  s.n_tones = corpus.n_tones;
  s.n_outputs = n_outputs;
  s.seed = Seed("init");
  return s;
}

void RunConfig::Validate() const {
  if (run_id.empty() || run_id.find(',') != std::string::npos)
    throw PreconditionError("run_id must be non-empty and free of commas");
  try {
    ResolvedCorpus().Validate();
    ResolvedStack(2).Validate();
    stage1.loss.Validate();
    stage1.margin.Validate();
    stage1.optimizer.Validate();
    teacher_optimizer.Validate();
    kd.Validate();
    stage2_optimizer.Validate();
  } catch (const PreconditionError &) {
    throw;
  } catch (const Error &e) {
    throw PreconditionError(std::string("invalid config: ") + e.what());
  }
  if (split == SplitPolicy::Kind::kHeldOutSpeaker && held_out_speaker.empty())
    throw PreconditionError("held_out_speaker split needs a speaker id");
  if (eval.beam_width < 1) throw PreconditionError("beam_width must be at least 1");
  if (eval.max_e3_pairs < 1) throw PreconditionError("max_e3_pairs must be positive");
}

// --- JSON -------------------------------------------------------------------------

namespace {

ordered_json OptimizerJson(const OptimizerConfig &o) {
  return {{"learning_rate", o.learning_rate}, {"weight_decay", o.weight_decay},
          {"grad_clip", o.grad_clip},         {"warmup_steps", o.warmup_steps},
          {"total_steps", o.total_steps},     {"batch_size", o.batch_size},
          {"accumulation_steps", o.accumulation_steps},
          {"beta1", o.beta1},                 {"beta2", o.beta2},
          {"eps", o.eps}};
}

// Reads the keys of one JSON object and rejects any it does not know.
class Reader {
 public:
  Reader(const json &j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw PreconditionError(where_ + ": expected an object");
  }

  template <typename T>
  void Get(const std::string &key, T &out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception &e) {
      throw PreconditionError(where_ + "." + key + ": " + e.what());
    }
  }

  void GetPooling(const std::string &key, PoolingMode &out) {
    std::string name = out.Name();
    Get(key, name);
    try {
      out = PoolingMode::Parse(name);
    } catch (const Error &e) {
      throw PreconditionError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename F>
  void Sub(const std::string &key, F &&f) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader r(j_.at(key), where_ + "." + key);
    f(r);
    r.Finish();
  }

  const json &raw(const std::string &key) {
    seen_.insert(key);
    return j_.at(key);
  }
  bool Has(const std::string &key) const { return j_.contains(key); }

  void Finish() const {
    for (const auto &[key, value] : j_.items())
      if (!seen_.count(key)) throw PreconditionError(where_ + ": unknown key '" + key + "'");
  }

 private:
  const json &j_;
  std::string where_;
  std::set<std::string> seen_;
};

void ReadOptimizer(Reader &r, OptimizerConfig &o) {
  r.Get("learning_rate", o.learning_rate);
  r.Get("weight_decay", o.weight_decay);
  r.Get("grad_clip", o.grad_clip);
  r.Get("warmup_steps", o.warmup_steps);
  r.Get("total_steps", o.total_steps);
  r.Get("batch_size", o.batch_size);
  r.Get("accumulation_steps", o.accumulation_steps);
  r.Get("beta1", o.beta1);
  r.Get("beta2", o.beta2);
  r.Get("eps", o.eps);
}

std::string SplitKindName(SplitPolicy::Kind k) {
  return k == SplitPolicy::Kind::kCoverage ? "coverage" : "held_out_speaker";
}

std::string VariantName(ToneLossVariant v) {
  return v == ToneLossVariant::kInfoNce ? "infonce" : "margin";
}

}  // namespace

ordered_json RunConfig::ToJson() const {
  ordered_json speakers = ordered_json::array();
  for (const auto &s : corpus.speakers)
    speakers.push_back({{"id", s.id},
                        {"gender", GenderName(s.gender)},
                        {"base_pitch", s.base_pitch},
                        {"spectral_tilt", s.spectral_tilt}});
  ordered_json j;
  j["run_id"] = run_id;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["corpus"] = {{"n_base_words", corpus.n_base_words},
                 {"n_tones", corpus.n_tones},
                 {"min_frames", corpus.min_frames},
                 {"max_frames", corpus.max_frames},
                 {"feature_dim", corpus.feature_dim},
                 {"noise_sigma", corpus.noise_sigma},
                 {"spectral_floor", corpus.spectral_floor},
                 {"slope_scale", corpus.slope_scale},
                 {"speakers", speakers}};
  j["split"] = {{"policy", SplitKindName(split)}, {"held_out_speaker", held_out_speaker}};
  j["augment"] = {{"transplant_pool", augment.transplant_pool},
                  {"perturbed_views", augment.perturbed_views},
                  {"noise_sigma", augment.noise_sigma},
                  {"max_stretch", augment.max_stretch},
                  {"max_gain_db", augment.max_gain_db}};
  j["stack"] = {{"n_blocks", stack.n_blocks},
                {"feature_layer", stack.feature_layer},
                {"frozen_blocks", stack.frozen_blocks},
                {"init", stack.init == InitKind::kUniform ? "uniform" : "identity"},
                {"init_scale", stack.init_scale}};
  const auto &l = stage1.loss;
  const auto &m = stage1.margin;
  j["stage1"] = {{"tau_g", l.tau_g},
                 {"tau_t", l.tau_t},
                 {"n_negatives", l.n_negatives},
                 {"alpha", l.alpha},
                 {"lambda_cls", l.lambda_cls},
                 {"negatives_receive_gradient", l.negatives_receive_gradient},
                 {"loss_variant", VariantName(stage1.variant)},
                 {"margin",
                  {{"m_hard", m.m_hard},
                   {"m_soft", m.m_soft},
                   {"lambda_attr", m.lambda_attr},
                   {"lambda_hard", m.lambda_hard},
                   {"lambda_soft", m.lambda_soft}}},
                 {"mining",
                  {{"max_tone_positives", stage1.mining.max_tone_positives},
                   {"max_hard_negatives", stage1.mining.max_hard_negatives},
                   {"n_soft_negatives", stage1.mining.n_soft_negatives}}},
                 {"speaker_pooling", stage1.speaker_pooling.Name()},
                 {"tone_pooling", stage1.tone_pooling.Name()},
                 {"optimizer", OptimizerJson(stage1.optimizer)}};
  j["teacher"] = {{"optimizer", OptimizerJson(teacher_optimizer)}};
  j["stage2"] = {{"tau_kd", kd.tau_kd},
                 {"delta", kd.delta},
                 {"optimizer", OptimizerJson(stage2_optimizer)}};
  j["eval"] = {{"retrieval_pooling", eval.retrieval_pooling.Name()},
               {"geometry_pooling", eval.geometry_pooling.Name()},
               {"beam_width", eval.beam_width},
               {"semitone_shifts", eval.semitone_shifts},
               {"max_e3_pairs", eval.max_e3_pairs}};
  return j;
}

RunConfig RunConfig::FromJson(const json &j) {
  RunConfig c;
  Reader top(j, "config");
  top.Get("run_id", c.run_id);
  top.Get("seed", c.seed);
  std::string out = c.output_dir.string();
  top.Get("output_dir", out);
  c.output_dir = out;

  top.Sub("corpus", [&](Reader &r) {
    r.Get("n_base_words", c.corpus.n_base_words);
    r.Get("n_tones", c.corpus.n_tones);
    r.Get("min_frames", c.corpus.min_frames);
    r.Get("max_frames", c.corpus.max_frames);
    r.Get("feature_dim", c.corpus.feature_dim);
    r.Get("noise_sigma", c.corpus.noise_sigma);
    r.Get("spectral_floor", c.corpus.spectral_floor);
    r.Get("slope_scale", c.corpus.slope_scale);
    if (r.Has("speakers")) {
      const json &arr = r.raw("speakers");
      if (!arr.is_array()) throw PreconditionError("config.corpus.speakers: expected an array");
      c.corpus.speakers.clear();
      for (const auto &item : arr) {
        Reader s(item, "config.corpus.speakers[]");
        SpeakerSpec spec;
        std::string gender = "F";
        s.Get("id", spec.id);
        s.Get("gender", gender);
        s.Get("base_pitch", spec.base_pitch);
        s.Get("spectral_tilt", spec.spectral_tilt);
        s.Finish();
        try {
          spec.gender = ParseGender(gender);
        } catch (const Error &e) {
          throw PreconditionError(std::string("config.corpus.speakers[]: ") + e.what());
        }
        c.corpus.speakers.push_back(spec);
      }
    }
  });
  top.Sub("split", [&](Reader &r) {
    std::string policy = SplitKindName(c.split);
    r.Get("policy", policy);
    r.Get("held_out_speaker", c.held_out_speaker);
    if (policy == "coverage") {
      c.split = SplitPolicy::Kind::kCoverage;
    } else if (policy == "held_out_speaker") {
      c.split = SplitPolicy::Kind::kHeldOutSpeaker;
    } else {
      throw PreconditionError("config.split.policy: unknown policy '" + policy + "'");
    }
  });
  top.Sub("augment", [&](Reader &r) {
    r.Get("transplant_pool", c.augment.transplant_pool);
    r.Get("perturbed_views", c.augment.perturbed_views);
    r.Get("noise_sigma", c.augment.noise_sigma);
    r.Get("max_stretch", c.augment.max_stretch);
    r.Get("max_gain_db", c.augment.max_gain_db);
  });
  top.Sub("stack", [&](Reader &r) {
    r.Get("n_blocks", c.stack.n_blocks);
    r.Get("feature_layer", c.stack.feature_layer);
    r.Get("frozen_blocks", c.stack.frozen_blocks);
    std::string init = c.stack.init == InitKind::kUniform ? "uniform" : "identity";
    r.Get("init", init);
    if (init == "uniform") {
      c.stack.init = InitKind::kUniform;
    } else if (init == "identity") {
      c.stack.init = InitKind::kIdentity;
    } else {
      throw PreconditionError("config.stack.init: unknown init '" + init + "'");
    }
    r.Get("init_scale", c.stack.init_scale);
  });
  top.Sub("stage1", [&](Reader &r) {
    r.Get("tau_g", c.stage1.loss.tau_g);
    r.Get("tau_t", c.stage1.loss.tau_t);
    r.Get("n_negatives", c.stage1.loss.n_negatives);
    r.Get("alpha", c.stage1.loss.alpha);
    r.Get("lambda_cls", c.stage1.loss.lambda_cls);
    r.Get("negatives_receive_gradient", c.stage1.loss.negatives_receive_gradient);
    std::string variant = VariantName(c.stage1.variant);
    r.Get("loss_variant", variant);
    if (variant == "infonce") {
      c.stage1.variant = ToneLossVariant::kInfoNce;
    } else if (variant == "margin") {
      c.stage1.variant = ToneLossVariant::kMargin;
    } else {
      throw PreconditionError("config.stage1.loss_variant: must be infonce or margin");
    }
    r.Sub("margin", [&](Reader &m) {
      m.Get("m_hard", c.stage1.margin.m_hard);
      m.Get("m_soft", c.stage1.margin.m_soft);
      m.Get("lambda_attr", c.stage1.margin.lambda_attr);
      m.Get("lambda_hard", c.stage1.margin.lambda_hard);
      m.Get("lambda_soft", c.stage1.margin.lambda_soft);
    });
    r.Sub("mining", [&](Reader &m) {
      m.Get("max_tone_positives", c.stage1.mining.max_tone_positives);
      m.Get("max_hard_negatives", c.stage1.mining.max_hard_negatives);
      m.Get("n_soft_negatives", c.stage1.mining.n_soft_negatives);
    });
    r.GetPooling("speaker_pooling", c.stage1.speaker_pooling);
    r.GetPooling("tone_pooling", c.stage1.tone_pooling);
    r.Sub("optimizer", [&](Reader &o) { ReadOptimizer(o, c.stage1.optimizer); });
  });
  top.Sub("teacher", [&](Reader &r) {
    r.Sub("optimizer", [&](Reader &o) { ReadOptimizer(o, c.teacher_optimizer); });
  });
  top.Sub("stage2", [&](Reader &r) {
    r.Get("tau_kd", c.kd.tau_kd);
    r.Get("delta", c.kd.delta);
    r.Sub("optimizer", [&](Reader &o) { ReadOptimizer(o, c.stage2_optimizer); });
  });
  top.Sub("eval", [&](Reader &r) {
    r.GetPooling("retrieval_pooling", c.eval.retrieval_pooling);
    r.GetPooling("geometry_pooling", c.eval.geometry_pooling);
    r.Get("beam_width", c.eval.beam_width);
    r.Get("semitone_shifts", c.eval.semitone_shifts);
    r.Get("max_e3_pairs", c.eval.max_e3_pairs);
  });
  top.Finish();
  c.stage1.loss.n_negatives = std::max(0, c.stage1.loss.n_negatives);
  c.stage1.mining.n_negatives = c.stage1.loss.n_negatives;
  c.Validate();
  return c;
}

RunConfig RunConfig::Load(const fs::path &path) {
  std::ifstream is(path);
  if (!is) throw PreconditionError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception &e) {
    throw PreconditionError(path.string() + ": " + e.what());
  }
  return FromJson(j);
}

// --- helpers ----------------------------------------------------------------------

std::vector<Token> SplitTokens(const std::vector<Token> &tokens, Split split) {
  std::vector<Token> out;
  for (const auto &t : tokens)
    if (t.split == split) out.push_back(t);
  return out;
}

std::vector<std::string> CorpusLexicon(const std::vector<Token> &tokens) {
  std::set<std::string> words;
  for (const auto &t : tokens) words.insert(t.word);
  return {words.begin(), words.end()};
}

Vocabulary CorpusVocabulary(const std::vector<Token> &tokens) {
  return Vocabulary::FromWords(CorpusLexicon(tokens));
}

double MeanCtcLoss(const std::vector<Token> &tokens, const EncoderStack &stack,
                   const Vocabulary &vocab) {
  double sum = 0.0;
  long n = 0;
  for (const auto &t : tokens) {
    const Labels target = vocab.Encode(t.word);
    if (CtcMinFrames(target) > t.frames()) continue;
    sum -= CtcLogLikelihood(LogSoftmaxRows(stack.CtcLogits(t.features)), target);
    ++n;
  }
  if (n == 0) throw Error("no token has a feasible CTC target");
  return sum / static_cast<double>(n);
}

TeacherCache BuildTeacherCache(const std::vector<Token> &tokens, const EncoderStack &teacher) {
  TeacherCache cache;
  for (const auto &t : tokens) cache[t.id] = teacher.CtcLogits(t.features);
  return cache;
}

void WriteTeacherCache(const fs::path &dir, const TeacherCache &cache) {
  fs::create_directories(dir);
  for (const auto &[id, logits] : cache) WriteFeatureFile(dir / (id + ".sitf"), logits);
}

TeacherCache ReadTeacherCache(const fs::path &dir, const std::vector<Token> &tokens) {
  TeacherCache cache;
  for (const auto &t : tokens) {
    const fs::path p = dir / (t.id + ".sitf");
    if (!fs::exists(p)) throw PreconditionError("missing teacher cache entry " + p.string());
    cache[t.id] = ReadFeatureFile(p);
  }
  return cache;
}

std::vector<std::string> EvalKinds() {
  return {"retrieval", "tone", "asr", "sim", "probe", "tonecls"};
}

namespace {

void Require(const fs::path &p, const std::string &what) {
  if (!fs::exists(p)) throw PreconditionError("missing " + what + ": " + p.string());
}

std::vector<Token> LoadCorpus(const RunPaths &paths) {
  Require(paths.corpus() / "manifest.jsonl", "corpus manifest (run gen first)");
  return ReadCorpus(paths.corpus());
}

}  // namespace

// --- commands ---------------------------------------------------------------------

void CmdGen(const RunConfig &config, std::ostream &log) {
  config.Validate();
  const RunPaths paths{config.output_dir};
  std::error_code ec;
  fs::create_directories(paths.root, ec);
  if (ec) throw Error("cannot create " + paths.root.string() + ": " + ec.message());

  SplitPolicy policy{config.split, config.held_out_speaker, config.Seed("split")};
  const auto tokens = AssignSplits(Generate(config.ResolvedCorpus()), policy);
  WriteCorpus(paths.corpus(), tokens);
  WriteLexicon(paths.lexicon(), CorpusLexicon(tokens));
  {
    std::ofstream os(paths.root / "config.json", std::ios::binary);
    os << config.ToJson().dump(2) << '\n';
  }

  std::map<std::string, long> counts;
  for (const auto &t : tokens) {
    ++counts["split=" + SplitName(t.split)];
    ++counts["gender=" + GenderName(t.gender)];
    ++counts["tone=" + std::to_string(t.tone)];
  }
  log << "tokens " << tokens.size() << '\n';
  for (const auto &[k, v] : counts) log << k << ' ' << v << '\n';
}

void CmdTrain(const RunConfig &config, const std::string &stage, std::ostream &log) {
  config.Validate();
  const RunPaths paths{config.output_dir};
  if (stage != "1" && stage != "2" && stage != "teacher")
    throw PreconditionError("unknown stage '" + stage + "' (expected 1, teacher or 2)");
  const auto tokens = LoadCorpus(paths);
  const auto train = SplitTokens(tokens, Split::kTrain);
  const Vocabulary vocab = CorpusVocabulary(tokens);

  if (stage == "1") {
    EncoderStack stack = EncoderStack::Init(config.ResolvedStack(vocab.size()));
    stack.Save(paths.init_checkpoint());
    std::vector<Token> pool = train;
    const auto views =
        AugmentTrainViews(tokens, config.ResolvedCorpus(), config.augment, config.Seed("augment"));
    pool.insert(pool.end(), views.begin(), views.end());
    Stage1TrainConfig cfg = config.stage1;
    cfg.seed = config.Seed("stage1");
    const TrainTrace trace = TrainStage1(pool, stack, cfg);
    stack.Save(paths.stage1_checkpoint());
    trace.WriteCsv(paths.stage1_trace());
    log << "stage 1: " << trace.rows.size() << " steps over " << pool.size() << " tokens";
    if (!trace.rows.empty())
      log << ", loss " << FormatValue(trace.rows.front().loss) << " -> "
          << FormatValue(trace.rows.back().loss);
    log << '\n';
    return;
  }

  if (stage == "teacher") {
    Require(paths.init_checkpoint(), "initial checkpoint (run train --stage 1 first)");
    EncoderStack teacher = EncoderStack::Load(paths.init_checkpoint());
    CtcTrainConfig cfg;
    cfg.kd.delta = 1.0;
    cfg.optimizer = config.teacher_optimizer;
    cfg.seed = config.Seed("teacher");
    const TrainTrace trace =
        TrainCtc(train, vocab, teacher, teacher.config().frozen_blocks + 1, cfg);
    teacher.Save(paths.teacher_checkpoint());
    trace.WriteCsv(paths.teacher_trace());
    WriteTeacherCache(paths.teacher_cache(), BuildTeacherCache(train, teacher));
    log << "teacher: " << trace.rows.size() << " steps, train CTC loss "
        << FormatValue(MeanCtcLoss(train, teacher, vocab)) << '\n';
    return;
  }

  Require(paths.stage1_checkpoint(), "stage-1 checkpoint");
  EncoderStack stack = EncoderStack::Load(paths.stage1_checkpoint());
  TeacherCache cache;
  if (config.kd.enabled()) {
    Require(paths.teacher_cache(), "teacher cache (run train --stage teacher first)");
    cache = ReadTeacherCache(paths.teacher_cache(), train);
  }
  CtcTrainConfig cfg;
  cfg.kd = config.kd;
  cfg.optimizer = config.stage2_optimizer;
  cfg.seed = config.Seed("stage2");
  const TrainTrace trace =
      TrainStage2(train, vocab, stack, cfg, config.kd.enabled() ? &cache : nullptr);
  stack.Save(paths.stage2_checkpoint());
  trace.WriteCsv(paths.stage2_trace());
  log << "stage 2: " << trace.rows.size() << " steps, train CTC loss "
      << FormatValue(MeanCtcLoss(train, stack, vocab)) << '\n';
}

namespace {

fs::path ResolveCheckpoint(const RunPaths &paths, const fs::path &explicit_path) {
  if (!explicit_path.empty()) {
    Require(explicit_path, "checkpoint");
    return explicit_path;
  }
  if (fs::exists(paths.stage2_checkpoint())) return paths.stage2_checkpoint();
  Require(paths.stage1_checkpoint(), "checkpoint (train a stage first)");
  return paths.stage1_checkpoint();
}

}  // namespace

void CmdEval(const RunConfig &config, const std::string &kind, std::ostream &log,
             const fs::path &checkpoint) {
  config.Validate();
  const auto kinds = EvalKinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
    throw PreconditionError("unknown eval kind '" + kind + "'");
  const RunPaths paths{config.output_dir};
  const auto tokens = LoadCorpus(paths);
  const auto test = SplitTokens(tokens, Split::kTest);
  if (test.empty()) throw PreconditionError("corpus has no test tokens");
  const fs::path ckpt = ResolveCheckpoint(paths, checkpoint);
  const EncoderStack stack = EncoderStack::Load(ckpt);
  const int layer = stack.config().feature_layer;
  const EvalSettings &e = config.eval;
  fs::create_directories(paths.eval_dir());

  CsvTable table;
  if (kind == "retrieval") {
    table = RetrievalTable(CrossGenderTopK(EmbedTokens(test, stack, layer, e.retrieval_pooling)));
  } else if (kind == "tone") {
    table = ToneTable(ComputeToneGeometry(EmbedTokens(test, stack, layer, e.geometry_pooling)));
  } else if (kind == "asr") {
    const Vocabulary vocab = CorpusVocabulary(tokens);
    Require(paths.lexicon(), "lexicon");
    const AsrDecode decode =
        DecodeAndScore(test, stack, vocab, ReadLexicon(paths.lexicon()), e.beam_width);
    table = AsrTable(decode);
    CsvTable hyps{{"id", "reference", "hypothesis"}, {}};
    for (std::size_t i = 0; i < decode.ids.size(); ++i)
      hyps.rows.push_back({decode.ids[i], decode.references[i], decode.hypotheses[i]});
    hyps.Write(paths.eval_dir() / "asr_hypotheses.csv");
  } else if (kind == "sim") {
    SimilarityConfig sc;
    sc.semitone_shifts = e.semitone_shifts;
    sc.max_e3_pairs = e.max_e3_pairs;
    sc.seed = config.Seed("eval:sim");
    table = SimilarityTable(SimilarityExperiments(test, stack, layer, sc));
  } else if (kind == "probe") {
    table = ProbeTable(LayerProbe(test, stack, e.retrieval_pooling, e.geometry_pooling));
  } else {
    table = ToneClsTable(ToneClassification(
        EmbedTokens(test, stack, layer, config.stage1.tone_pooling), stack.tone_head()));
  }
  const fs::path out = paths.eval_dir() / (kind + ".csv");
  table.Write(out);
  log << kind << " (" << ckpt.filename().string() << ") -> " << out.string() << '\n';
}

void CmdReport(const RunConfig &config, std::ostream &log) {
  config.Validate();
  const RunPaths paths{config.output_dir};
  CsvTable summary{{"run_id", "kind", "row", "column", "value"}, {}};
  int found = 0;
  for (const auto &kind : EvalKinds()) {
    const fs::path p = paths.eval_dir() / (kind + ".csv");
    if (!fs::exists(p)) continue;
    ++found;
    const CsvTable t = CsvTable::Read(p);
    for (const auto &row : t.rows)
      for (std::size_t c = 1; c < t.header.size() && c < row.size(); ++c)
        summary.rows.push_back({config.run_id, kind, row[0], t.header[c], row[c]});
  }
  if (found == 0) throw PreconditionError("no eval outputs under " + paths.eval_dir().string());
  fs::create_directories(paths.report_dir());
  summary.Write(paths.report_dir() / "summary.csv");
  log << "summary: " << summary.rows.size() << " rows from " << found << " eval kinds\n";

  const bool have_ckpt =
      fs::exists(paths.stage2_checkpoint()) || fs::exists(paths.stage1_checkpoint());
  if (!have_ckpt || !fs::exists(paths.corpus() / "manifest.jsonl")) {
    log << "projection skipped: no checkpoint or corpus\n";
    return;
  }
  const auto test = SplitTokens(ReadCorpus(paths.corpus()), Split::kTest);
  const EncoderStack stack = EncoderStack::Load(ResolveCheckpoint(paths, {}));
  const auto embedded =
      EmbedTokens(test, stack, stack.config().feature_layer, config.eval.geometry_pooling);
  if (embedded.size() < 3) {
    log << "projection skipped: fewer than three test tokens\n";
    return;
  }
  std::vector<Vector> points;
  for (const auto &e : embedded) points.push_back(e.embedding.values());
  const Projection proj = Project2d(points);
  CsvTable coords{{"id", "word", "tone", "x", "y"}, {}};
  for (std::size_t i = 0; i < embedded.size(); ++i)
    coords.rows.push_back({embedded[i].id, embedded[i].word, std::to_string(embedded[i].tone),
                           FormatValue(proj.coords(static_cast<Eigen::Index>(i), 0)),
                           FormatValue(proj.coords(static_cast<Eigen::Index>(i), 1))});
  coords.Write(paths.report_dir() / "projection.csv");
  if (proj.rank_deficient) log << "warning: projection rank < 2, second axis zeroed\n";
  log << "projection: " << embedded.size() << " points\n";
}

}  // namespace sita
