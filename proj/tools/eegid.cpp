// tools/eegid.cpp

// Copyright 2026 The eegid Authors
//
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

//
// Command-line front end: one subcommand per pipeline stage plus
// run-protocol for complete experiments.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "eegid/eegid.hpp"

namespace fs = std::filesystem;

namespace eegid {
namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  int workers = 0;
};

void AddCommon(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "INI configuration file");
  cmd->add_option("--set", o.overrides,
                  "Override a setting, e.g. --set ubm.relevance=8");
  cmd->add_option("--workers", o.workers, "Worker threads (overrides run.workers)");
}

PipelineConfig MakeConfig(const CommonOptions& o) {
  PipelineConfig cfg;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path))
      throw ValidationError(StrCat("config file '", o.config_path,
                                   "' does not exist"));
    cfg = LoadConfig(o.config_path, cfg);
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ValidationError(StrCat("--set expects section.key=value, got '",
                                   kv, "'"));
    SetConfigValue(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.workers > 0) cfg.workers = o.workers;
  cfg.Validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Feature directories: one MCFT1 file per segment plus features.csv with
// "file,segment,split" rows after a "# config_hash=" line.

struct FeatureDir {
  std::vector<FeatureSegment> segments;
  std::vector<Split> splits;
  std::uint64_t config_hash = 0;

  std::vector<const FeatureSegment*> Select(Split want) const {
    std::vector<const FeatureSegment*> out;
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (splits[i] == want) out.push_back(&segments[i]);
    return out;
  }
};

Split ParseSplit(const std::string& s, const std::string& what) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw ArtifactError(StrCat(what, ": unknown split '", s, "'"));
}

std::string FeatureFileName(const SegmentLabels& l) {
  return StrCat(l.subject_id, "_", l.session_id, "_", l.task_id, "_", l.index,
                ".mcft");
}

void SaveFeatureDir(const std::string& dir, const FeatureSet& fs_,
                    std::uint64_t config_hash) {
  fs::create_directories(dir);
  auto index = OpenOut((fs::path(dir) / "features.csv").string());
  index << "# config_hash=" << HexDigest(config_hash) << '\n';
  index << "file,segment,split\n";
  for (std::size_t i = 0; i < fs_.segments.size(); ++i) {
    const auto& f = fs_.segments[i];
    const std::string name = FeatureFileName(f.labels);
    SaveFeatures((fs::path(dir) / name).string(), f);
    index << name << ',' << f.labels.Key() << ',' << SplitName(fs_.splits[i])
          << '\n';
  }
}

FeatureDir LoadFeatureDir(const std::string& dir) {
  const std::string path = (fs::path(dir) / "features.csv").string();
  auto is = OpenIn(path);
  FeatureDir out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# config_hash=", 0) != 0)
    throw ArtifactError(StrCat(path, ": missing config hash line"));
  out.config_hash = std::stoull(line.substr(14), nullptr, 16);
  if (!std::getline(is, line) || line != "file,segment,split")
    throw ArtifactError(StrCat(path, ": bad header"));
  for (int lineno = 3; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    const auto f = SplitCsvLine(line);
    if (f.size() != 3)
      throw ArtifactError(StrCat(path, ":", lineno, ": expected 3 fields"));
    FeatureSegment seg = LoadFeatures((fs::path(dir) / f[0]).string());
    if (seg.labels.Key() != f[1])
      throw ArtifactError(StrCat(f[0], ": labels ", seg.labels.Key(),
                                 " disagree with the index (", f[1], ")"));
    out.segments.push_back(std::move(seg));
    out.splits.push_back(ParseSplit(f[2], path));
  }
  if (out.segments.empty())
    throw ArtifactError(StrCat(path, ": no feature files listed"));
  return out;
}

void CheckFeatureShape(const FeatureDir& fd, Eigen::Index dim,
                       Eigen::Index channels, const std::string& model) {
  const auto& f = fd.segments.front();
  if (f.Dim() != dim || f.channels != channels)
    throw ArtifactError(StrCat(model, " expects features with d=", dim,
                               " and C=", channels, ", but the feature "
                               "directory has d=", f.Dim(), " and C=",
                               f.channels));
}

// ---------------------------------------------------------------------------
// Model files.  The embedding model of a cosine system is a TVMX1 subspace
// (with its UBM) or an XVEC1 network; the magic decides.

std::string PeekMagic(const std::string& path) {
  auto is = OpenIn(path);
  std::string m(5, '\0');
  is.read(m.data(), 5);
  if (!is) throw ArtifactError(StrCat(path, ": file too short"));
  return m;
}

struct EmbeddingModel {
  EmbeddingKind kind = EmbeddingKind::kIvector;
  std::optional<IvectorModel> ivec;
  std::optional<XvecNet> xvec;

  std::uint64_t Fingerprint() const {
    return ivec ? ivec->tv.Fingerprint() : xvec->Fingerprint();
  }

  void CheckFeatures(const FeatureDir& fd) const {
    const auto& f = fd.segments.front();
    if (ivec)
      CheckFeatureShape(fd, ivec->ubm.gmm.Dim(),
                        ivec->tv.Mode() == StatsMode::kModified
                            ? ivec->tv.Channels()
                            : f.channels,
                        "i-vector model");
    else
      CheckFeatureShape(fd, xvec->shape.input_dim, xvec->shape.channels,
                        "x-vector model");
  }

  VectorXd Embed(const FeatureSegment& f) const {
    return ivec ? ivec->Extract(f) : ExtractXvector(*xvec, f);
  }
};

EmbeddingModel LoadEmbeddingModel(const std::string& model_path,
                                  const std::string& ubm_path) {
  EmbeddingModel m;
  const std::string magic = PeekMagic(model_path);
  if (magic == "TVMX1") {
    if (ubm_path.empty())
      throw ValidationError("an i-vector model needs --ubm");
    IvectorModel iv;
    iv.ubm = LoadUbm(ubm_path);
    iv.tv = LoadTotalVariability(model_path);
    if (iv.tv.UbmFingerprint() != iv.ubm.Fingerprint())
      throw ArtifactError(StrCat(model_path, " was trained on UBM ",
                                 HexDigest(iv.tv.UbmFingerprint()), ", but ",
                                 ubm_path, " has fingerprint ",
                                 HexDigest(iv.ubm.Fingerprint())));
    m.kind = EmbeddingKind::kIvector;
    m.ivec = std::move(iv);
  } else if (magic == "XVEC1") {
    m.kind = EmbeddingKind::kXvector;
    m.xvec = LoadXvector(model_path);
  } else {
    throw ArtifactError(StrCat(model_path, ": not an i-vector subspace "
                               "(TVMX1) or x-vector network (XVEC1)"));
  }
  return m;
}

std::vector<VectorXd> EmbedAll(const EmbeddingModel& m,
                               const std::vector<const FeatureSegment*>& segs,
                               int workers) {
  std::vector<VectorXd> out(segs.size());
  ParallelFor(segs.size(), workers,
              [&](std::size_t i) { out[i] = m.Embed(*segs[i]); });
  return out;
}

LdaModel LoadLdaFor(const std::string& path, const EmbeddingModel& m) {
  LdaModel lda = LoadLda(path);
  if (lda.source_fingerprint != m.Fingerprint())
    throw ArtifactError(StrCat(path, " was fitted on embeddings of model ",
                               HexDigest(lda.source_fingerprint),
                               ", not of the given model (",
                               HexDigest(m.Fingerprint()), ")"));
  return lda;
}

// Enrolled GMM models: one GMMA1 file per subject plus subjects.txt.
void SaveAdaptedDir(const std::string& dir,
                    const std::vector<AdaptedModel>& models) {
  fs::create_directories(dir);
  auto list = OpenOut((fs::path(dir) / "subjects.txt").string());
  for (const auto& m : models) {
    auto os = OpenOut((fs::path(dir) / (m.subject_id + ".gmma")).string());
    WriteAdapted(os, m);
    list << m.subject_id << '\n';
  }
}

std::vector<AdaptedModel> LoadAdaptedDir(const std::string& dir,
                                         const Ubm& ubm) {
  auto list = OpenIn((fs::path(dir) / "subjects.txt").string());
  std::vector<AdaptedModel> out;
  std::string id;
  while (std::getline(list, id)) {
    if (id.empty()) continue;
    const std::string path = (fs::path(dir) / (id + ".gmma")).string();
    auto is = OpenIn(path);
    out.push_back(ReadAdapted(is, path, ubm));
  }
  if (out.empty()) throw ArtifactError(StrCat(dir, ": no enrolled subjects"));
  return out;
}

std::vector<std::string> SortedSubjects(
    const std::vector<const FeatureSegment*>& segs) {
  return SubjectsOf(segs);
}

StatsMode ParseMode(const std::string& s) {
  if (s == "baseline") return StatsMode::kBaseline;
  if (s == "modified") return StatsMode::kModified;
  throw ValidationError(StrCat("--mode must be 'baseline' or 'modified', got '",
                               s, "'"));
}

// ---------------------------------------------------------------------------
// Commands.

int CmdGenSynth(const CommonOptions& co, const std::string& out) {
  const PipelineConfig cfg = MakeConfig(co);
  const Corpus corpus = GenerateSyntheticCorpus(cfg.synth, cfg.corpus_seed);
  SaveCorpus(out, corpus);
  std::cout << "wrote " << corpus.recordings.size() << " recordings and "
            << (fs::path(out) / "manifest.csv").string() << '\n';
  return 0;
}

int CmdExtract(const CommonOptions& co, const std::string& manifest,
               const std::string& out) {
  const PipelineConfig cfg = MakeConfig(co);
  const Corpus corpus = LoadCorpus(manifest);
  const FeatureSet set = ExtractFeatureSet(corpus, cfg);
  SaveFeatureDir(out, set, cfg.Hash());
  std::cout << "wrote " << set.segments.size() << " feature files (d="
            << set.segments.front().Dim()
            << ", C=" << set.segments.front().channels << ") to " << out
            << '\n';
  return 0;
}

int CmdTrainUbm(const CommonOptions& co, const std::string& features,
                const std::string& system, const std::string& out) {
  const PipelineConfig cfg = MakeConfig(co);
  const FeatureDir fd = LoadFeatureDir(features);
  const auto train = fd.Select(Split::kTrain);
  Ubm ubm;
  if (system == "ubm-gmm")
    ubm = TrainUbmOn(train, cfg.ubm_gmm_mixtures, cfg, StageSeed(cfg, 10));
  else if (system == "ivector-baseline")
    ubm = TrainUbmOn(train, cfg.ivector_baseline_mixtures, cfg,
                     StageSeed(cfg, 11, 0));
  else if (system == "ivector-modified")
    ubm = TrainUbmOn(train, cfg.ivector_modified_mixtures, cfg,
                     StageSeed(cfg, 11, 1));
  else
    throw ValidationError(StrCat("--system must be ubm-gmm, ivector-baseline "
                                 "or ivector-modified, got '", system, "'"));
  SaveUbm(out, ubm);
  std::cout << "UBM K=" << ubm.gmm.NumComponents() << " d=" << ubm.gmm.Dim()
            << " iterations=" << ubm.iterations << " fingerprint="
            << HexDigest(ubm.Fingerprint()) << '\n';
  return 0;
}

int CmdTrainTmatrix(const CommonOptions& co, const std::string& features,
                    const std::string& ubm_path, const std::string& mode_name,
                    const std::string& out) {
  const PipelineConfig cfg = MakeConfig(co);
  const StatsMode mode = ParseMode(mode_name);
  const FeatureDir fd = LoadFeatureDir(features);
  const Ubm ubm = LoadUbm(ubm_path);
  CheckFeatureShape(fd, ubm.gmm.Dim(), fd.segments.front().channels, ubm_path);
  const auto train = fd.Select(Split::kTrain);
  const auto stats = AccumulateAll(ubm, train, mode, cfg.workers);
  const TotalVariability tv = TrainTvOn(
      ubm, stats, cfg,
      StageSeed(cfg, 12, mode == StatsMode::kModified ? 1 : 0));
  SaveTotalVariability(out, tv);
  std::cout << "T matrix " << tv.T().rows() << "x" << tv.Rank() << " ("
            << ModeName(mode) << ") fingerprint=" << HexDigest(tv.Fingerprint())
            << '\n';
  return 0;
}

int CmdTrainXvector(const CommonOptions& co, const std::string& features,
                    const std::string& mode_name, const std::string& out) {
  const PipelineConfig cfg = MakeConfig(co);
  const StatsMode mode = ParseMode(mode_name);
  const FeatureDir fd = LoadFeatureDir(features);
  const auto m = static_cast<std::uint64_t>(mode);
  XvecTrainReport rep;
  const XvecNet net = TrainXvectorOn(fd.Select(Split::kTrain),
                                     fd.Select(Split::kValidation), mode, cfg,
                                     StageSeed(cfg, 13, m),
                                     StageSeed(cfg, 14, m), &rep);
  SaveXvector(out, net);
  std::cout << "x-vector (" << ModeName(mode) << ") epochs=" << rep.train_loss.size()
            << " best_epoch=" << rep.best_epoch << " fingerprint="
            << HexDigest(net.Fingerprint()) << '\n';
  return 0;
}

int CmdFitLda(const CommonOptions& co, const std::string& features,
              const std::string& model_path, const std::string& ubm_path,
              const std::string& out) {
  const PipelineConfig cfg = MakeConfig(co);
  const FeatureDir fd = LoadFeatureDir(features);
  const EmbeddingModel m = LoadEmbeddingModel(model_path, ubm_path);
  m.CheckFeatures(fd);
  const auto train = fd.Select(Split::kTrain);
  std::vector<std::string> labels;
  for (const auto* f : train) labels.push_back(f->labels.subject_id);
  LdaModel lda = FitLda(EmbedAll(m, train, cfg.workers), labels, cfg.lda_dim,
                        m.kind == EmbeddingKind::kXvector);
  lda.source_fingerprint = m.Fingerprint();
  lda.provenance.config_hash = cfg.Hash();
  lda.provenance.seed = cfg.seed;
  SaveLda(out, lda);
  std::cout << "LDA " << lda.InputDim() << " -> " << lda.OutputDim() << " on "
            << train.size() << " segments of " << lda.classes.size()
            << " subjects\n";
  return 0;
}

int CmdEnroll(const CommonOptions& co, const std::string& features,
              const std::string& model_path, const std::string& ubm_path,
              const std::string& lda_path, const std::string& out) {
  const PipelineConfig cfg = MakeConfig(co);
  const FeatureDir fd = LoadFeatureDir(features);
  const auto enroll = fd.Select(Split::kTrain);
  const auto subjects = SortedSubjects(enroll);
  if (model_path.empty()) {
    // UBM-GMM: MAP-adapted model per subject.
    if (ubm_path.empty())
      throw ValidationError("enroll needs --model (cosine systems) or --ubm "
                            "alone (ubm-gmm)");
    const Ubm ubm = LoadUbm(ubm_path);
    CheckFeatureShape(fd, ubm.gmm.Dim(), fd.segments.front().channels,
                      ubm_path);
    std::vector<AdaptedModel> models;
    for (const auto& s : subjects) {
      std::vector<const FeatureSegment*> mine;
      for (const auto* f : enroll)
        if (f->labels.subject_id == s) mine.push_back(f);
      models.push_back(MapAdapt(ubm, PoolFrames(mine), cfg.relevance, s));
    }
    SaveAdaptedDir(out, models);
    std::cout << "enrolled " << models.size() << " subjects into " << out
              << '\n';
    return 0;
  }
  if (lda_path.empty())
    throw ValidationError("enroll of a cosine system needs --lda");
  const EmbeddingModel m = LoadEmbeddingModel(model_path, ubm_path);
  m.CheckFeatures(fd);
  const LdaModel lda = LoadLdaFor(lda_path, m);
  const auto raw = EmbedAll(m, enroll, cfg.workers);
  std::map<std::string, std::vector<VectorXd>> by;
  for (std::size_t i = 0; i < enroll.size(); ++i)
    by[enroll[i]->labels.subject_id].push_back(lda.Project(raw[i]));
  std::vector<Embedding> refs;
  for (const auto& [s, v] : by)
    refs.push_back({m.kind, Enroll(v), {s, "enroll", "all", 0}});
  auto os = OpenOut(out);
  WriteEmbeddingsCsv(os, refs);
  std::cout << "enrolled " << refs.size() << " subjects into " << out << '\n';
  return 0;
}

int CmdScore(const CommonOptions& co, const std::string& features,
             const std::string& model_path, const std::string& ubm_path,
             const std::string& lda_path, const std::string& enroll_path,
             const std::string& out) {
  const PipelineConfig cfg = MakeConfig(co);
  const FeatureDir fd = LoadFeatureDir(features);
  const auto test = fd.Select(Split::kTest);
  if (test.empty())
    throw ArtifactError(StrCat(features, ": no test segments"));
  ScoreTable t;
  t.rows.reserve(test.size());
  if (model_path.empty()) {
    if (ubm_path.empty())
      throw ValidationError("score needs --model (cosine systems) or --ubm "
                            "alone (ubm-gmm)");
    const Ubm ubm = LoadUbm(ubm_path);
    CheckFeatureShape(fd, ubm.gmm.Dim(), fd.segments.front().channels,
                      ubm_path);
    const auto models = LoadAdaptedDir(enroll_path, ubm);
    for (const auto& m : models) t.subjects.push_back(m.subject_id);
    t.scores.resize(static_cast<Eigen::Index>(test.size()),
                    static_cast<Eigen::Index>(models.size()));
    ParallelFor(test.size(), cfg.workers, [&](std::size_t i) {
      for (std::size_t j = 0; j < models.size(); ++j)
        t.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            LlrScore(ubm, models[j], *test[i]);
    });
  } else {
    if (lda_path.empty()) throw ValidationError("score needs --lda");
    const EmbeddingModel m = LoadEmbeddingModel(model_path, ubm_path);
    m.CheckFeatures(fd);
    const LdaModel lda = LoadLdaFor(lda_path, m);
    auto is = OpenIn(enroll_path);
    const auto refs = ReadEmbeddingsCsv(is, enroll_path);
    if (refs.empty())
      throw ArtifactError(StrCat(enroll_path, ": no enrolled subjects"));
    for (const auto& r : refs) {
      if (r.kind != m.kind || r.v.size() != lda.OutputDim())
        throw ArtifactError(StrCat(enroll_path, ": reference of ",
                                   r.labels.subject_id, " (", KindName(r.kind),
                                   ", dim ", r.v.size(), ") does not match the "
                                   "model (", KindName(m.kind), ", dim ",
                                   lda.OutputDim(), ")"));
      t.subjects.push_back(r.labels.subject_id);
    }
    const auto raw = EmbedAll(m, test, cfg.workers);
    t.scores.resize(static_cast<Eigen::Index>(test.size()),
                    static_cast<Eigen::Index>(refs.size()));
    for (std::size_t i = 0; i < test.size(); ++i) {
      const VectorXd y = lda.Project(raw[i]);
      for (std::size_t j = 0; j < refs.size(); ++j)
        t.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            CosineScore(refs[j].v, y);
    }
  }
  for (const auto* f : test) {
    auto it = std::find(t.subjects.begin(), t.subjects.end(),
                        f->labels.subject_id);
    if (it == t.subjects.end())
      throw ValidationError(StrCat("test segment ", f->labels.Key(),
                                   " belongs to a subject that is not "
                                   "enrolled"));
    t.rows.push_back(f->labels);
    t.truth.push_back(it - t.subjects.begin());
  }
  auto os = OpenOut(out);
  WriteScoreTableCsv(os, t, cfg.Hash());
  std::cout << "scored " << t.scores.rows() << " test segments against "
            << t.scores.cols() << " subjects\n";
  return 0;
}

int CmdEvaluate(const std::vector<std::string>& score_paths, bool force,
                const std::string& out) {
  std::vector<EvalReport> reports;
  std::optional<std::uint64_t> first_hash;
  for (const auto& p : score_paths) {
    auto is = OpenIn(p);
    std::uint64_t h = 0;
    const ScoreTable t = ReadScoreTableCsv(is, p, &h);
    if (!first_hash) {
      first_hash = h;
    } else if (h != *first_hash && !force) {
      throw ValidationError(StrCat(p, " has config hash ", HexDigest(h),
                                   " but ", score_paths.front(), " has ",
                                   HexDigest(*first_hash),
                                   "; pass --force to evaluate them together"));
    }
    EvalReport r = Evaluate(t);
    r.system = fs::path(p).stem().string();
    reports.push_back(r);
  }
  WriteReportText(std::cout, reports);
  if (!out.empty()) {
    auto os = OpenOut(out);
    WriteReportCsv(os, reports);
  }
  return 0;
}

std::string SafeName(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.')
      c = '_';
  return s;
}

int CmdRunProtocol(const CommonOptions& co, const std::string& manifest,
                   const std::string& protocol,
                   const std::vector<std::string>& systems,
                   const std::string& out) {
  PipelineConfig cfg = MakeConfig(co);
  if (!protocol.empty()) SetConfigValue(cfg, "protocol.name", protocol);
  if (!systems.empty()) {
    cfg.systems.clear();
    for (const auto& s : systems)
      for (const auto& part : detail::SplitList(s, ',')) cfg.systems.push_back(part);
  }
  cfg.Validate();
  const Corpus corpus = manifest.empty()
                            ? GenerateSyntheticCorpus(cfg.synth, cfg.corpus_seed)
                            : LoadCorpus(manifest);
  const ProtocolOutput res = RunProtocol(corpus, cfg);
  WriteReportText(std::cout, res.reports);
  if (!out.empty()) {
    fs::create_directories(out);
    {
      auto os = OpenOut((fs::path(out) / "report.csv").string());
      WriteReportCsv(os, res.reports);
    }
    {
      auto os = OpenOut((fs::path(out) / "config.ini").string());
      SaveConfig(os, cfg);
    }
    for (std::size_t i = 0; i < res.reports.size(); ++i) {
      const auto& r = res.reports[i];
      std::string name = "scores_" + r.system;
      if (!r.condition.empty()) name += "_" + r.condition;
      auto os = OpenOut((fs::path(out) / (SafeName(name) + ".csv")).string());
      WriteScoreTableCsv(os, res.tables[i], cfg.Hash());
    }
  }
  return 0;
}

}  // namespace
}  // namespace eegid

int main(int argc, char** argv) {
  using namespace eegid;
  CLI::App app{"EEG biometric identification with UBM-GMM, i-vector, "
               "x-vector and ix-vector systems"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonOptions co;
  std::string out, manifest, features, system, mode, ubm, model, lda, enroll,
      protocol;
  std::vector<std::string> scores, systems;
  bool force = false;

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic corpus");
  AddCommon(gen, co);
  gen->add_option("--out", out, "Output directory")->required();

  auto* ext = app.add_subcommand("extract-features",
                                 "Segment recordings and compute PSD features");
  AddCommon(ext, co);
  ext->add_option("--manifest", manifest, "Corpus manifest.csv")->required();
  ext->add_option("--out", out, "Output feature directory")->required();

  auto* tubm = app.add_subcommand("train-ubm", "Train a diagonal UBM");
  AddCommon(tubm, co);
  tubm->add_option("--features", features, "Feature directory")->required();
  tubm->add_option("--system", system,
                   "ubm-gmm, ivector-baseline or ivector-modified")
      ->required();
  tubm->add_option("--out", out, "Output UBM file")->required();

  auto* ttm = app.add_subcommand("train-tmatrix",
                                 "Train the total variability matrix");
  AddCommon(ttm, co);
  ttm->add_option("--features", features, "Feature directory")->required();
  ttm->add_option("--ubm", ubm, "UBM file")->required();
  ttm->add_option("--mode", mode, "baseline or modified")->required();
  ttm->add_option("--out", out, "Output subspace file")->required();

  auto* txv = app.add_subcommand("train-xvector", "Train an x-vector network");
  AddCommon(txv, co);
  txv->add_option("--features", features, "Feature directory")->required();
  txv->add_option("--mode", mode, "baseline or modified")->required();
  txv->add_option("--out", out, "Output network file")->required();

  auto* flda = app.add_subcommand("fit-lda",
                                  "Fit LDA on training-split embeddings");
  AddCommon(flda, co);
  flda->add_option("--features", features, "Feature directory")->required();
  flda->add_option("--model", model, "Subspace (TVMX1) or network (XVEC1)")
      ->required();
  flda->add_option("--ubm", ubm, "UBM of an i-vector model");
  flda->add_option("--out", out, "Output LDA file")->required();

  auto* enr = app.add_subcommand(
      "enroll", "Build subject references from the training split");
  AddCommon(enr, co);
  enr->add_option("--features", features, "Feature directory")->required();
  enr->add_option("--model", model, "Embedding model (omit for ubm-gmm)");
  enr->add_option("--ubm", ubm, "UBM file");
  enr->add_option("--lda", lda, "LDA file of the embedding model");
  enr->add_option("--out", out,
                  "Reference CSV, or a directory for ubm-gmm models")
      ->required();

  auto* sc = app.add_subcommand("score",
                                "Score test-split segments against references");
  AddCommon(sc, co);
  sc->add_option("--features", features, "Feature directory")->required();
  sc->add_option("--model", model, "Embedding model (omit for ubm-gmm)");
  sc->add_option("--ubm", ubm, "UBM file");
  sc->add_option("--lda", lda, "LDA file of the embedding model");
  sc->add_option("--enroll", enroll, "Output of enroll")->required();
  sc->add_option("--out", out, "Score table CSV")->required();

  auto* ev = app.add_subcommand("evaluate",
                                "Rank-1 accuracy and EER of score tables");
  ev->add_option("--scores", scores, "Score table CSV files")->required();
  ev->add_flag("--force", force, "Accept tables with different config hashes");
  ev->add_option("--out", out, "Report CSV");

  auto* rp = app.add_subcommand("run-protocol", "Run a complete experiment");
  AddCommon(rp, co);
  rp->add_option("--manifest", manifest,
                 "Corpus manifest (default: synthesize from the config)");
  rp->add_option("--protocol", protocol,
                 "session-disjoint, leave-task-out, leave-subject-out, "
                 "channel-subset or segment-length");
  rp->add_option("--system", systems, "System(s) to run (repeatable)");
  rp->add_option("--out", out, "Directory for report and score tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return CmdGenSynth(co, out);
    if (*ext) return CmdExtract(co, manifest, out);
    if (*tubm) return CmdTrainUbm(co, features, system, out);
    if (*ttm) return CmdTrainTmatrix(co, features, ubm, mode, out);
    if (*txv) return CmdTrainXvector(co, features, mode, out);
    if (*flda) return CmdFitLda(co, features, model, ubm, out);
    if (*enr) return CmdEnroll(co, features, model, ubm, lda, out);
    if (*sc) return CmdScore(co, features, model, ubm, lda, enroll, out);
    if (*ev) return CmdEvaluate(scores, force, out);
    if (*rp) return CmdRunProtocol(co, manifest, protocol, systems, out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const HygieneError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
