// eegid/protocol.hpp

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
// Experiment orchestration: feature sets, the recognition systems and the
// evaluation protocols built from them.

#pragma once

#include <iostream>
#include <set>
#include <unordered_map>

#include "eegid/config.hpp"
#include "eegid/eval.hpp"

namespace eegid {

inline const std::vector<std::string> kSystemNames = {
    "ubm-gmm",          "ivector-baseline", "ivector-modified",
    "xvector-baseline", "xvector-modified", "ix",
    "ivector-concat",   "ivector-score-fusion"};

inline const std::vector<std::string> kProtocolNames = {
    "session-disjoint", "leave-task-out", "leave-subject-out",
    "channel-subset", "segment-length"};

inline void CheckSystemName(const std::string& s) {
  if (std::find(kSystemNames.begin(), kSystemNames.end(), s) ==
      kSystemNames.end())
    throw ValidationError(StrCat("unknown system '", s, "'"));
}

// Raised when a training stage saw data the protocol reserves for testing.
class HygieneError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::uint64_t StageSeed(const PipelineConfig& cfg, std::uint64_t stage,
                               std::uint64_t variant = 0) {
  return detail::DeriveSeed(cfg.seed, {stage, variant});
}

// ---------------------------------------------------------------------------
// Feature sets.

struct FeatureSet {
  std::vector<FeatureSegment> segments;
  std::vector<Split> splits;

  std::vector<const FeatureSegment*> Select(
      const std::function<bool(const FeatureSegment&, Split)>& keep) const {
    std::vector<const FeatureSegment*> out;
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (keep(segments[i], splits[i])) out.push_back(&segments[i]);
    return out;
  }
};

namespace detail {

inline FeatureSegment PrepareChannels(const FeatureSegment& f,
                                      const std::vector<int>& channels,
                                      bool normalize) {
  FeatureSegment out = SelectChannels(f, channels);
  if (normalize) NormalizeMeanVariance(out);
  return out;
}

inline void CheckChannels(const Corpus& corpus,
                          const std::vector<int>& channels) {
  for (const auto& rec : corpus.recordings)
    for (int c : channels)
      EEGID_REQUIRE(c < rec.NumChannels(), "channel ", c, " requested but ",
                    rec.subject_id, "/", rec.session_id, "/", rec.task_id,
                    " has ", rec.NumChannels(), " channels");
}

}  // namespace detail

/// Segments every recording at `segment_s`, computes PSD features of all
/// recording channels and assigns each segment its split.
inline FeatureSet ExtractAllChannels(const Corpus& corpus,
                                     const PipelineConfig& cfg,
                                     double segment_s) {
  EEGID_REQUIRE(corpus.recordings.size() == corpus.manifest.Rows().size(),
                "corpus recordings and manifest rows differ in number");
  std::vector<std::vector<FeatureSegment>> per_rec(corpus.recordings.size());
  ParallelFor(per_rec.size(), cfg.workers, [&](std::size_t r) {
    const auto& rec = corpus.recordings[r];
    rec.Validate();
    for (const auto& seg : SegmentRecording(rec, segment_s))
      per_rec[r].push_back(ComputePsd(seg, cfg.frame_len_ms, cfg.band));
  });
  FeatureSet fs;
  for (auto& v : per_rec)
    for (auto& f : v) fs.segments.push_back(std::move(f));
  EEGID_REQUIRE(!fs.segments.empty(), "no recording is at least ", segment_s,
                " s long");
  std::vector<SegmentLabels> labels;
  for (const auto& f : fs.segments) labels.push_back(f.labels);
  fs.splits = corpus.manifest.SegmentSplits(labels);
  return fs;
}

/// Restricts a feature set to `channels` (and applies the optional
/// normalization).
inline FeatureSet WithChannels(const FeatureSet& all,
                               const std::vector<int>& channels,
                               bool normalize) {
  FeatureSet out;
  out.splits = all.splits;
  out.segments.reserve(all.segments.size());
  for (const auto& f : all.segments)
    out.segments.push_back(detail::PrepareChannels(f, channels, normalize));
  return out;
}

inline FeatureSet ExtractFeatureSet(const Corpus& corpus,
                                    const PipelineConfig& cfg) {
  detail::CheckChannels(corpus, cfg.channels);
  return WithChannels(ExtractAllChannels(corpus, cfg, cfg.segment_s),
                      cfg.channels, cfg.normalize);
}

/// Test segments of `length_s` seconds: recordings re-segmented at the new
/// length, keeping only segments that lie entirely within base segments of
/// the test split.
inline std::vector<FeatureSegment> RetimedTestSegments(
    const Corpus& corpus, const PipelineConfig& cfg, const FeatureSet& base,
    double length_s) {
  std::set<SegmentLabels> test;
  for (std::size_t i = 0; i < base.segments.size(); ++i)
    if (base.splits[i] == Split::kTest) test.insert(base.segments[i].labels);
  std::vector<std::vector<FeatureSegment>> per_rec(corpus.recordings.size());
  ParallelFor(per_rec.size(), cfg.workers, [&](std::size_t r) {
    const auto& rec = corpus.recordings[r];
    const auto base_len = static_cast<Eigen::Index>(
        std::llround(cfg.segment_s * rec.sample_rate_hz));
    const auto len = static_cast<Eigen::Index>(
        std::llround(length_s * rec.sample_rate_hz));
    for (const auto& seg : SegmentRecording(rec, length_s)) {
      const Eigen::Index begin = seg.labels.index * len;
      const Eigen::Index end = begin + len;
      bool inside = true;
      for (Eigen::Index b = begin / base_len; b * base_len < end; ++b) {
        SegmentLabels l = seg.labels;
        l.index = static_cast<std::uint32_t>(b);
        if (!test.contains(l)) {
          inside = false;
          break;
        }
      }
      if (inside)
        per_rec[r].push_back(detail::PrepareChannels(
            ComputePsd(seg, cfg.frame_len_ms, cfg.band), cfg.channels,
            cfg.normalize));
    }
  });
  std::vector<FeatureSegment> out;
  for (auto& v : per_rec)
    for (auto& f : v) out.push_back(std::move(f));
  return out;
}

// ---------------------------------------------------------------------------
// Training log and hygiene checks.

/// Records which segments each training stage of each experiment saw.
class TrainingLog {
 public:
  using Stages = std::map<std::string, std::set<SegmentLabels>>;

  void Begin(const std::string& experiment) { current_ = experiment; }

  void Record(const std::string& stage,
              const std::vector<const FeatureSegment*>& segs) {
    auto& s = log_[current_][stage];
    for (const auto* f : segs) s.insert(f->labels);
  }

  const std::map<std::string, Stages>& Experiments() const { return log_; }

 private:
  std::string current_;
  std::map<std::string, Stages> log_;
};

/// Throws HygieneError if any stage of `stages` saw a segment for which
/// `forbidden` holds.
inline void CheckHygiene(const TrainingLog::Stages& stages,
                         const std::function<bool(const SegmentLabels&)>& forbidden,
                         const std::string& rule) {
  for (const auto& [stage, segs] : stages)
    for (const auto& l : segs)
      if (forbidden(l))
        throw HygieneError(StrCat("protocol violation (", rule, "): stage '",
                                  stage, "' was trained on ", l.Key()));
}

// ---------------------------------------------------------------------------
// Model training from feature segments.

inline Ubm TrainUbmOn(const std::vector<const FeatureSegment*>& segs, int K,
                      const PipelineConfig& cfg, std::uint64_t seed) {
  UbmOptions o;
  o.num_components = K;
  o.max_iters = cfg.ubm_iters;
  o.tol = cfg.ubm_tol;
  o.floor_factor = cfg.floor_factor;
  o.seed = seed;
  o.workers = cfg.workers;
  Ubm ubm = TrainUbm(PoolFrames(segs), o);
  ubm.provenance.config_hash = cfg.Hash();
  return ubm;
}

inline std::vector<SuffStats> AccumulateAll(
    const Ubm& ubm, const std::vector<const FeatureSegment*>& segs,
    StatsMode mode, int workers) {
  std::vector<SuffStats> out(segs.size());
  ParallelFor(segs.size(), workers, [&](std::size_t i) {
    out[i] = AccumulateStats(ubm, *segs[i], mode);
  });
  return out;
}

inline TotalVariability TrainTvOn(const Ubm& ubm,
                                  const std::vector<SuffStats>& stats,
                                  const PipelineConfig& cfg,
                                  std::uint64_t seed) {
  TMatrixOptions o;
  o.rank = cfg.ivector_rank;
  o.iterations = cfg.tmatrix_iters;
  o.seed = seed;
  o.workers = cfg.workers;
  TotalVariability tv = TrainTMatrix(ubm, stats, o);
  tv.provenance.config_hash = cfg.Hash();
  return tv;
}

inline XvecShape XvectorShapeFor(const PipelineConfig& cfg, StatsMode mode,
                                 const FeatureSegment& like,
                                 Eigen::Index num_classes) {
  XvecShape s;
  s.mode = mode;
  s.input_dim = like.Dim();
  s.channels = like.channels;
  const bool modified = mode == StatsMode::kModified;
  s.hidden1 = modified ? cfg.xvec_modified_hidden1 : cfg.xvec_baseline_hidden1;
  s.hidden2 = modified ? cfg.xvec_modified_hidden2 : cfg.xvec_baseline_hidden2;
  s.embed_dim = cfg.xvec_embed_dim;
  s.num_classes = num_classes;
  return s;
}

inline std::vector<std::string> SubjectsOf(
    const std::vector<const FeatureSegment*>& segs) {
  std::set<std::string> s;
  for (const auto* f : segs) s.insert(f->labels.subject_id);
  return {s.begin(), s.end()};
}

inline XvecNet TrainXvectorOn(const std::vector<const FeatureSegment*>& train,
                              const std::vector<const FeatureSegment*>& val,
                              StatsMode mode, const PipelineConfig& cfg,
                              std::uint64_t init_seed,
                              std::uint64_t train_seed,
                              XvecTrainReport* report = nullptr) {
  EEGID_REQUIRE(!train.empty(), "no x-vector training segments");
  const auto n_classes =
      static_cast<Eigen::Index>(SubjectsOf(train).size());
  XvecNet net = XvecNet::Init(
      XvectorShapeFor(cfg, mode, *train.front(), n_classes), init_seed);
  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.patience = cfg.patience;
  tc.seed = train_seed;
  tc.workers = cfg.workers;
  XvecNet out = TrainXvector(std::move(net), train, val, tc, report);
  out.provenance.config_hash = cfg.Hash();
  return out;
}

/// UBM plus total variability subspace.  With `concat`, frames are the
/// concatenation of all channels and baseline statistics are used.
struct IvectorModel {
  Ubm ubm;
  TotalVariability tv;
  bool concat = false;

  SuffStats Stats(const FeatureSegment& f) const {
    if (concat) return AccumulateStats(ubm, VariantFeatureConcat(f), tv.Mode());
    return AccumulateStats(ubm, f, tv.Mode());
  }
  VectorXd Extract(const FeatureSegment& f) const {
    return ExtractIvector(tv, Stats(f));
  }
};

// ---------------------------------------------------------------------------
// Systems.

/// Trains the systems of one experiment on demand and scores test segments
/// against the enrolled subjects.  Trained models are cached, so several
/// systems (and several test sets) share them.  Segment pointers must stay
/// valid for the runner's lifetime.
class SystemRunner {
 public:
  SystemRunner(const PipelineConfig& cfg,
               std::vector<const FeatureSegment*> train,
               std::vector<const FeatureSegment*> val,
               std::vector<const FeatureSegment*> enroll,
               TrainingLog* log = nullptr)
      : cfg_(cfg),
        train_(std::move(train)),
        val_(std::move(val)),
        enroll_(std::move(enroll)),
        log_(log) {
    cfg_.Validate();
    EEGID_REQUIRE(!train_.empty(), "experiment has no training segments");
    EEGID_REQUIRE(!enroll_.empty(), "experiment has no enrollment segments");
    subjects_ = SubjectsOf(enroll_);
    EEGID_REQUIRE(subjects_.size() >= 2, "need at least 2 enrolled subjects");
  }

  const std::vector<std::string>& Subjects() const { return subjects_; }

  ScoreTable Score(const std::string& system,
                   const std::vector<const FeatureSegment*>& test) {
    CheckSystemName(system);
    EEGID_REQUIRE(!test.empty(), "no test segments");
    ScoreTable t;
    t.subjects = subjects_;
    for (const auto* f : test) {
      auto it = std::lower_bound(subjects_.begin(), subjects_.end(),
                                 f->labels.subject_id);
      EEGID_REQUIRE(it != subjects_.end() && *it == f->labels.subject_id,
                    "test subject '", f->labels.subject_id,
                    "' is not enrolled");
      t.rows.push_back(f->labels);
      t.truth.push_back(it - subjects_.begin());
    }
    t.scores.resize(static_cast<Eigen::Index>(test.size()),
                    static_cast<Eigen::Index>(subjects_.size()));
    if (system == "ubm-gmm") {
      ScoreGmm(test, t.scores);
    } else if (system == "ix") {
      ScoreIx(test, t.scores);
    } else if (system == "ivector-score-fusion") {
      const Eigen::Index C = train_.front()->channels;
      std::vector<MatrixXd> per(static_cast<std::size_t>(C));
      for (Eigen::Index c = 0; c < C; ++c) {
        per[c].resize(t.scores.rows(), t.scores.cols());
        ScoreCosine(StrCat("ivector-ch", c), test, per[c]);
      }
      for (Eigen::Index i = 0; i < t.scores.rows(); ++i)
        for (Eigen::Index j = 0; j < t.scores.cols(); ++j) {
          VectorXd col(C);
          for (Eigen::Index c = 0; c < C; ++c) col(c) = per[c](i, j);
          t.scores(i, j) = VariantScoreFusion(col)(0);
        }
    } else {
      ScoreCosine(system, test, t.scores);
    }
    t.Validate();
    return t;
  }

  /// Baseline, modified, concat or per-channel ("ch<c>") i-vector model.
  const IvectorModel& Ivector(const std::string& variant) {
    auto it = ivectors_.find(variant);
    if (it != ivectors_.end()) return it->second;
    IvectorModel m;
    std::vector<FeatureSegment> owned;
    std::vector<const FeatureSegment*> segs = train_;
    StatsMode mode = StatsMode::kModified;
    int K = cfg_.ivector_modified_mixtures;
    std::uint64_t variant_id = 1;
    if (variant == "baseline") {
      mode = StatsMode::kBaseline;
      K = cfg_.ivector_baseline_mixtures;
      variant_id = 0;
    } else if (variant == "concat") {
      mode = StatsMode::kBaseline;
      K = cfg_.ivector_baseline_mixtures;
      m.concat = true;
      variant_id = 2;
      for (const auto* f : train_) owned.push_back(VariantFeatureConcat(*f));
    } else if (variant.rfind("ch", 0) == 0) {
      const int c = std::stoi(variant.substr(2));
      K = cfg_.ivector_fusion_mixtures;
      variant_id = 100 + static_cast<std::uint64_t>(c);
      for (const auto* f : train_) owned.push_back(SelectChannels(*f, {c}));
    } else {
      EEGID_REQUIRE(variant == "modified", "unknown i-vector variant '",
                    variant, "'");
    }
    if (!owned.empty()) {
      segs.clear();
      for (const auto& f : owned) segs.push_back(&f);
    }
    Record("ubm", train_);
    m.ubm = TrainUbmOn(segs, K, cfg_, StageSeed(cfg_, 11, variant_id));
    Record("tmatrix", train_);
    const auto stats = AccumulateAll(m.ubm, segs, mode, cfg_.workers);
    m.tv = TrainTvOn(m.ubm, stats, cfg_, StageSeed(cfg_, 12, variant_id));
    return ivectors_.emplace(variant, std::move(m)).first->second;
  }

  const XvecNet& Xvector(StatsMode mode) {
    auto it = xvectors_.find(mode);
    if (it != xvectors_.end()) return it->second;
    Record("xvector", train_);
    Record("xvector-validation", val_);
    const auto m = static_cast<std::uint64_t>(mode);
    XvecNet net = TrainXvectorOn(train_, val_, mode, cfg_,
                                 StageSeed(cfg_, 13, m), StageSeed(cfg_, 14, m));
    return xvectors_.emplace(mode, std::move(net)).first->second;
  }

  const Ubm& GmmUbm() {
    if (!gmm_ubm_) {
      Record("ubm", train_);
      gmm_ubm_ = std::make_unique<Ubm>(
          TrainUbmOn(train_, cfg_.ubm_gmm_mixtures, cfg_, StageSeed(cfg_, 10)));
    }
    return *gmm_ubm_;
  }

  /// MAP-adapted model per enrolled subject.
  const std::vector<AdaptedModel>& Adapted() {
    if (adapted_.empty()) {
      const Ubm& ubm = GmmUbm();
      for (const auto& s : subjects_) {
        std::vector<const FeatureSegment*> mine;
        for (const auto* f : enroll_)
          if (f->labels.subject_id == s) mine.push_back(f);
        adapted_.push_back(MapAdapt(ubm, PoolFrames(mine), cfg_.relevance, s));
      }
    }
    return adapted_;
  }

  /// LDA of a cosine-scored embedding system.
  const LdaModel& Lda(const std::string& key) { return Backend(key).lda; }

  /// Raw (pre-LDA) embedding of a segment.
  VectorXd Embed(const std::string& key, const FeatureSegment& f) {
    if (key.rfind("ix:", 0) == 0) return Embed(key.substr(3), f);
    if (key == "ivector-baseline") return Ivector("baseline").Extract(f);
    if (key == "ivector-modified") return Ivector("modified").Extract(f);
    if (key == "ivector-concat") return Ivector("concat").Extract(f);
    if (key == "xvector-baseline")
      return ExtractXvector(Xvector(StatsMode::kBaseline), f);
    if (key == "xvector-modified")
      return ExtractXvector(Xvector(StatsMode::kModified), f);
    if (key.rfind("ivector-ch", 0) == 0) {
      const int c = std::stoi(key.substr(10));
      return Ivector(key.substr(8)).Extract(SelectChannels(f, {c}));
    }
    throw ValidationError(StrCat("no embedding named '", key, "'"));
  }

 private:
  // Stand-alone i-vector systems score uncentered projections, which keeps
  // them invariant to the norm growth of i-vectors with segment length.
  // x-vectors and both ix parts are centered on the training mean.
  static bool CenterLda(const std::string& key) {
    return key.rfind("ivector-", 0) != 0;
  }

  struct CosineBackend {
    LdaModel lda;
    std::vector<VectorXd> enroll_proj;  // aligned with enroll_
    std::vector<VectorXd> refs;         // per subject
  };

  void Record(const std::string& stage,
              const std::vector<const FeatureSegment*>& segs) {
    if (log_) log_->Record(stage, segs);
  }

  std::vector<VectorXd> EmbedAll(const std::string& key,
                                 const std::vector<const FeatureSegment*>& segs) {
    Embed(key, *segs.front());  // train the model outside the parallel loop
    std::vector<VectorXd> out(segs.size());
    ParallelFor(segs.size(), cfg_.workers,
                [&](std::size_t i) { out[i] = Embed(key, *segs[i]); });
    return out;
  }

  Eigen::Index SubjectIndex(const std::string& s) const {
    return std::lower_bound(subjects_.begin(), subjects_.end(), s) -
           subjects_.begin();
  }

  std::vector<VectorXd> MeanReferences(const std::vector<VectorXd>& proj) {
    std::vector<std::vector<VectorXd>> by(subjects_.size());
    for (std::size_t i = 0; i < enroll_.size(); ++i)
      by[SubjectIndex(enroll_[i]->labels.subject_id)].push_back(proj[i]);
    std::vector<VectorXd> refs;
    for (const auto& v : by) refs.push_back(Enroll(v));
    return refs;
  }

  const CosineBackend& Backend(const std::string& key) {
    auto it = backends_.find(key);
    if (it != backends_.end()) return it->second;
    CosineBackend b;
    const auto train_emb = EmbedAll(key, train_);
    std::vector<std::string> labels;
    for (const auto* f : train_) labels.push_back(f->labels.subject_id);
    Record("lda", train_);
    b.lda = FitLda(train_emb, labels, cfg_.lda_dim, CenterLda(key));
    b.lda.provenance.config_hash = cfg_.Hash();

    std::unordered_map<const FeatureSegment*, std::size_t> in_train;
    for (std::size_t i = 0; i < train_.size(); ++i) in_train[train_[i]] = i;
    std::vector<const FeatureSegment*> missing;
    for (const auto* f : enroll_)
      if (!in_train.contains(f)) missing.push_back(f);
    const auto extra = missing.empty() ? std::vector<VectorXd>{}
                                       : EmbedAll(key, missing);
    std::size_t next = 0;
    for (const auto* f : enroll_) {
      auto t = in_train.find(f);
      const VectorXd& raw = t != in_train.end() ? train_emb[t->second]
                                                : extra[next++];
      b.enroll_proj.push_back(b.lda.Project(raw));
    }
    const bool pooled = cfg_.enrollment == "pooled-stats" &&
                        key.rfind("ivector", 0) == 0;
    if (pooled) {
      b.refs = PooledReferences(key, b.lda);
    } else {
      b.refs = MeanReferences(b.enroll_proj);
    }
    return backends_.emplace(key, std::move(b)).first->second;
  }

  // One i-vector per subject from the summed statistics of its enrollment
  // segments.
  std::vector<VectorXd> PooledReferences(const std::string& key,
                                         const LdaModel& lda) {
    std::string variant = key.substr(8);
    const bool per_channel = variant.rfind("ch", 0) == 0;
    const IvectorModel& m = Ivector(variant);
    std::vector<SuffStats> stats(enroll_.size());
    ParallelFor(enroll_.size(), cfg_.workers, [&](std::size_t i) {
      stats[i] = per_channel
                     ? m.Stats(SelectChannels(*enroll_[i],
                                              {std::stoi(variant.substr(2))}))
                     : m.Stats(*enroll_[i]);
    });
    std::vector<std::vector<const SuffStats*>> by(subjects_.size());
    for (std::size_t i = 0; i < enroll_.size(); ++i)
      by[SubjectIndex(enroll_[i]->labels.subject_id)].push_back(&stats[i]);
    std::vector<VectorXd> refs;
    for (const auto& parts : by)
      refs.push_back(lda.Project(ExtractIvector(m.tv, PoolStats(parts))));
    return refs;
  }

  void ScoreCosine(const std::string& key,
                   const std::vector<const FeatureSegment*>& test,
                   MatrixXd& scores) {
    const CosineBackend& b = Backend(key);
    const auto raw = EmbedAll(key, test);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const VectorXd y = b.lda.Project(raw[i]);
      for (std::size_t j = 0; j < b.refs.size(); ++j)
        scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            CosineScore(b.refs[j], y);
    }
  }

  void ScoreIx(const std::vector<const FeatureSegment*>& test,
               MatrixXd& scores) {
    const CosineBackend& bi = Backend("ix:ivector-modified");
    const CosineBackend& bx = Backend("xvector-modified");
    if (ix_refs_.empty()) {
      std::vector<VectorXd> fused;
      for (std::size_t i = 0; i < enroll_.size(); ++i)
        fused.push_back(FuseIx({EmbeddingKind::kIvector, bi.enroll_proj[i], {}},
                               {EmbeddingKind::kXvector, bx.enroll_proj[i], {}})
                            .v);
      ix_refs_ = MeanReferences(fused);
    }
    const auto iv = EmbedAll("ix:ivector-modified", test);
    const auto xv = EmbedAll("xvector-modified", test);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const Embedding e =
          FuseIx({EmbeddingKind::kIvector, bi.lda.Project(iv[i]), test[i]->labels},
                 {EmbeddingKind::kXvector, bx.lda.Project(xv[i]), test[i]->labels});
      for (std::size_t j = 0; j < ix_refs_.size(); ++j)
        scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            CosineScore(ix_refs_[j], e.v);
    }
  }

  void ScoreGmm(const std::vector<const FeatureSegment*>& test,
                MatrixXd& scores) {
    const Ubm& ubm = GmmUbm();
    const auto& models = Adapted();
    ParallelFor(test.size(), cfg_.workers, [&](std::size_t i) {
      for (std::size_t j = 0; j < models.size(); ++j)
        scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            LlrScore(ubm, models[j], *test[i]);
    });
  }

  PipelineConfig cfg_;
  std::vector<const FeatureSegment*> train_, val_, enroll_;
  TrainingLog* log_;
  std::vector<std::string> subjects_;
  std::map<std::string, IvectorModel> ivectors_;
  std::map<StatsMode, XvecNet> xvectors_;
  std::unique_ptr<Ubm> gmm_ubm_;
  std::vector<AdaptedModel> adapted_;
  std::map<std::string, CosineBackend> backends_;
  std::vector<VectorXd> ix_refs_;
};

// ---------------------------------------------------------------------------
// Protocols.

struct ProtocolOutput {
  std::vector<EvalReport> reports;
  std::vector<ScoreTable> tables;  // aligned with reports
};

namespace detail {

inline bool InSet(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

// Every experiment: no training stage may see a test segment.
inline void CheckNoTestLeak(const TrainingLog& log, const std::string& exp,
                            const std::vector<const FeatureSegment*>& test) {
  std::set<SegmentLabels> t;
  for (const auto* f : test) t.insert(f->labels);
  auto it = log.Experiments().find(exp);
  if (it == log.Experiments().end()) return;
  CheckHygiene(it->second, [&](const SegmentLabels& l) { return t.contains(l); },
               "test segment used for training");
}

inline std::string ChannelLabel(const PipelineConfig& cfg,
                                const std::vector<int>& subset) {
  std::string s = "channels=";
  for (std::size_t i = 0; i < subset.size(); ++i)
    s += (i ? "+" : "") + cfg.channel_names[subset[i]];
  return s;
}

}  // namespace detail

/// Runs the configured protocol for the configured systems.  Training
/// stages are recorded in `log` (an internal log is used when null) and
/// checked after every experiment; a violation throws HygieneError.
inline ProtocolOutput RunProtocol(const Corpus& corpus,
                                  const PipelineConfig& cfg,
                                  TrainingLog* log = nullptr) {
  cfg.Validate();
  for (const auto& s : cfg.systems) CheckSystemName(s);
  EEGID_REQUIRE(!cfg.systems.empty(), "no systems selected");
  TrainingLog local;
  TrainingLog& lg = log ? *log : local;
  ProtocolOutput out;

  auto evaluate = [&](const std::string& condition, const std::string& system,
                      ScoreTable table) {
    EvalReport r = Evaluate(table);
    r.protocol = cfg.protocol;
    r.system = system;
    r.condition = condition;
    r.seed = cfg.seed;
    out.reports.push_back(r);
    out.tables.push_back(std::move(table));
  };

  // One experiment: fresh models, every system scored on `test`.
  auto run = [&](const std::string& condition,
                 const std::vector<const FeatureSegment*>& train,
                 const std::vector<const FeatureSegment*>& val,
                 const std::vector<const FeatureSegment*>& enroll,
                 const std::vector<const FeatureSegment*>& test,
                 const std::vector<std::string>& systems,
                 const std::function<void(const TrainingLog::Stages&)>& extra) {
    EEGID_REQUIRE(!test.empty(), "protocol ", cfg.protocol, " (", condition,
                  ") has no test segments");
    const std::string exp = StrCat(cfg.protocol, " ", condition);
    lg.Begin(exp);
    SystemRunner runner(cfg, train, val, enroll, &lg);
    for (const auto& s : systems) evaluate(condition, s, runner.Score(s, test));
    detail::CheckNoTestLeak(lg, exp, test);
    auto it = lg.Experiments().find(exp);
    if (extra && it != lg.Experiments().end()) extra(it->second);
  };

  const FeatureSet all = ExtractAllChannels(corpus, cfg, cfg.segment_s);
  detail::CheckChannels(corpus, cfg.channels);
  const FeatureSet fs = WithChannels(all, cfg.channels, cfg.normalize);
  auto split_is = [](Split want) {
    return [want](const FeatureSegment&, Split s) { return s == want; };
  };

  if (cfg.protocol == "session-disjoint") {
    const auto train = fs.Select(split_is(Split::kTrain));
    run("", train, fs.Select(split_is(Split::kValidation)), train,
        fs.Select(split_is(Split::kTest)), cfg.systems, nullptr);
  } else if (cfg.protocol == "channel-subset") {
    for (const auto& subset : cfg.channel_subsets) {
      detail::CheckChannels(corpus, subset);
      const FeatureSet sub = WithChannels(all, subset, cfg.normalize);
      const auto train = sub.Select(split_is(Split::kTrain));
      run(detail::ChannelLabel(cfg, subset), train,
          sub.Select(split_is(Split::kValidation)), train,
          sub.Select(split_is(Split::kTest)), cfg.systems, nullptr);
    }
  } else if (cfg.protocol == "leave-task-out") {
    const auto tasks = corpus.manifest.Tasks();
    EEGID_REQUIRE(tasks.size() >= 2, "leave-task-out needs at least 2 tasks, "
                  "the corpus has ", tasks.size());
    std::vector<std::string> held = tasks;
    if (!cfg.leave_out_task.empty()) {
      EEGID_REQUIRE(detail::InSet(tasks, cfg.leave_out_task), "task '",
                    cfg.leave_out_task, "' is not in the corpus");
      held = {cfg.leave_out_task};
    }
    for (const auto& task : held) {
      auto other = [&](Split want) {
        return [&, want](const FeatureSegment& f, Split s) {
          return s == want && f.labels.task_id != task;
        };
      };
      const auto test = fs.Select([&](const FeatureSegment& f, Split s) {
        return s == Split::kTest && f.labels.task_id == task;
      });
      const auto enroll = fs.Select(other(Split::kTrain));
      run(StrCat("task=", task, " case=1"), fs.Select(split_is(Split::kTrain)),
          fs.Select(split_is(Split::kValidation)), enroll, test, cfg.systems,
          nullptr);
      run(StrCat("task=", task, " case=2"), enroll,
          fs.Select(other(Split::kValidation)), enroll, test, cfg.systems,
          [&](const TrainingLog::Stages& st) {
            CheckHygiene(st,
                         [&](const SegmentLabels& l) { return l.task_id == task; },
                         StrCat("held-out task ", task, " used for training"));
          });
    }
  } else if (cfg.protocol == "leave-subject-out") {
    std::vector<std::string> subjects = corpus.manifest.Subjects();
    std::sort(subjects.begin(), subjects.end());
    const long S = static_cast<long>(subjects.size());
    const long n_held = std::max(
        1L, RoundHalfUp(cfg.heldout_subject_fraction * static_cast<double>(S)));
    EEGID_REQUIRE(n_held >= 2, "leave-subject-out holds out ", n_held,
                  " subject(s); identification needs at least 2 (raise "
                  "protocol.heldout_subject_fraction)");
    EEGID_REQUIRE(S - n_held >= 2, "leave-subject-out needs at least 2 "
                  "training subjects; the corpus has ", S, " subjects");
    std::mt19937_64 rng(StageSeed(cfg, 20));
    std::shuffle(subjects.begin(), subjects.end(), rng);
    std::vector<std::string> held(subjects.begin(), subjects.begin() + n_held);
    std::sort(held.begin(), held.end());
    std::vector<std::string> systems;
    for (const auto& s : cfg.systems) {
      if (s == "ubm-gmm")
        std::clog << "note: leave-subject-out uses cosine-scored systems only; "
                     "skipping ubm-gmm\n";
      else
        systems.push_back(s);
    }
    EEGID_REQUIRE(!systems.empty(), "leave-subject-out needs a cosine-scored "
                  "system");
    auto of_held = [&](Split want, bool in_held) {
      return [&, want, in_held](const FeatureSegment& f, Split s) {
        return s == want && detail::InSet(held, f.labels.subject_id) == in_held;
      };
    };
    const auto enroll = fs.Select(of_held(Split::kTrain, true));
    const auto test = fs.Select(of_held(Split::kTest, true));
    run("case=1", fs.Select(split_is(Split::kTrain)),
        fs.Select(split_is(Split::kValidation)), enroll, test, systems, nullptr);
    run("case=2", fs.Select(of_held(Split::kTrain, false)),
        fs.Select(of_held(Split::kValidation, false)), enroll, test, systems,
        [&](const TrainingLog::Stages& st) {
          CheckHygiene(st,
                       [&](const SegmentLabels& l) {
                         return detail::InSet(held, l.subject_id);
                       },
                       "held-out subject used for training");
        });
  } else if (cfg.protocol == "segment-length") {
    const auto train = fs.Select(split_is(Split::kTrain));
    lg.Begin(cfg.protocol);
    SystemRunner runner(cfg, train, fs.Select(split_is(Split::kValidation)),
                        train, &lg);
    for (double len : cfg.test_lengths_s) {
      const auto segs = RetimedTestSegments(corpus, cfg, all, len);
      EEGID_REQUIRE(!segs.empty(), "no test segment of ", len, " s fits in "
                    "the test portion of the corpus");
      std::vector<const FeatureSegment*> test;
      for (const auto& f : segs) test.push_back(&f);
      std::ostringstream cond;
      cond << "test_s=" << len;
      for (const auto& s : cfg.systems)
        evaluate(cond.str(), s, runner.Score(s, test));
      detail::CheckNoTestLeak(lg, cfg.protocol,
                              fs.Select(split_is(Split::kTest)));
    }
  } else {
    throw ValidationError(StrCat("unknown protocol '", cfg.protocol, "'"));
  }
  return out;
}

}  // namespace eegid
