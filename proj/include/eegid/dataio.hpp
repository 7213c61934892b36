// eegid/dataio.hpp

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

#pragma once

#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "eegid/common.hpp"

namespace eegid {

/// A labelled multichannel recording.  Samples are channel-major (C x T) and
/// always float-representable, so that writing and re-reading a recording is
/// lossless.
struct Recording {
  std::string subject_id;
  std::string session_id;
  std::string task_id;
  double sample_rate_hz = 0.0;
  MatrixXd samples;  // C x T

  Eigen::Index NumChannels() const { return samples.rows(); }
  Eigen::Index NumSamples() const { return samples.cols(); }

  void Validate() const {
    EEGID_REQUIRE(samples.rows() >= 1, "recording has no channels");
    EEGID_REQUIRE(samples.cols() >= 1, "recording has no samples");
    EEGID_REQUIRE(sample_rate_hz > 0 && std::isfinite(sample_rate_hz),
                  "sample rate must be positive, got ", sample_rate_hz);
    EEGID_REQUIRE(samples.allFinite(), "recording ", subject_id, "/",
                  session_id, "/", task_id, " has non-finite samples");
  }
};

struct Segment {
  SegmentLabels labels;
  double sample_rate_hz = 0.0;
  double duration_s = 0.0;
  MatrixXd samples;  // C x L
};

/// Cuts `rec` into consecutive non-overlapping segments of `duration_s`.
/// The trailing remainder is dropped.  A recording shorter than one segment
/// yields an empty vector.
inline std::vector<Segment> SegmentRecording(const Recording& rec,
                                             double duration_s) {
  EEGID_REQUIRE(duration_s > 0 && std::isfinite(duration_s),
                "segment duration must be positive, got ", duration_s);
  const auto len =
      static_cast<Eigen::Index>(std::llround(duration_s * rec.sample_rate_hz));
  EEGID_REQUIRE(len >= 1, "segment of ", duration_s, " s at ",
                rec.sample_rate_hz, " Hz has no samples");
  std::vector<Segment> out;
  const Eigen::Index count = rec.NumSamples() / len;
  out.reserve(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    Segment seg;
    seg.labels = {rec.subject_id, rec.session_id, rec.task_id,
                  static_cast<std::uint32_t>(i)};
    seg.sample_rate_hz = rec.sample_rate_hz;
    seg.duration_s = duration_s;
    seg.samples = rec.samples.middleCols(i * len, len);
    out.push_back(std::move(seg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recording files ("MCSR1").

inline void WriteRecording(std::ostream& os, const Recording& rec) {
  rec.Validate();
  BinaryWriter w(os);
  w.Magic("MCSR1");
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(rec.NumChannels()));
  w.Put<std::uint64_t>(static_cast<std::uint64_t>(rec.NumSamples()));
  w.Put<double>(rec.sample_rate_hz);
  w.PutString(rec.subject_id);
  w.PutString(rec.session_id);
  w.PutString(rec.task_id);
  for (Eigen::Index c = 0; c < rec.NumChannels(); ++c)
    for (Eigen::Index t = 0; t < rec.NumSamples(); ++t)
      w.Put<float>(static_cast<float>(rec.samples(c, t)));
}

inline Recording ReadRecording(std::istream& is, const std::string& what) {
  BinaryReader r(is, what);
  r.ExpectMagic("MCSR1");
  Recording rec;
  const auto channels = r.Get<std::uint32_t>();
  const auto length = r.Get<std::uint64_t>();
  rec.sample_rate_hz = r.Get<double>();
  rec.subject_id = r.GetString();
  rec.session_id = r.GetString();
  rec.task_id = r.GetString();
  if (channels == 0 || length == 0 || length > (1ull << 34))
    throw ArtifactError(StrCat(what, ": implausible shape ", channels, "x",
                               length));
  rec.samples.resize(channels, static_cast<Eigen::Index>(length));
  for (Eigen::Index c = 0; c < rec.samples.rows(); ++c)
    for (Eigen::Index t = 0; t < rec.samples.cols(); ++t)
      rec.samples(c, t) = r.Get<float>();
  r.ExpectEnd();
  rec.Validate();
  return rec;
}

inline void SaveRecording(const std::string& path, const Recording& rec) {
  auto os = OpenOut(path);
  WriteRecording(os, rec);
}

inline Recording LoadRecording(const std::string& path) {
  auto is = OpenIn(path);
  return ReadRecording(is, path);
}

// ---------------------------------------------------------------------------
// Manifest and session splits.

enum class Split { kTrain, kValidation, kTest };

inline std::string_view SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

// kHeldOut sessions are shared between validation and test at segment level;
// this only happens when too few sessions remain after the training share.
enum class SessionRole { kTrain, kValidation, kTest, kHeldOut };

struct ManifestRow {
  std::string subject_id;
  std::string session_id;
  std::string task_id;
  std::string path;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

inline long RoundHalfUp(double x) {
  return static_cast<long>(std::floor(x + 0.5));
}

/// Rows in file order plus the chronological session order of each subject
/// (order of first appearance).
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestRow> rows) : rows_(std::move(rows)) {
    Index();
  }

  const std::vector<ManifestRow>& Rows() const { return rows_; }
  const std::vector<std::string>& Subjects() const { return subjects_; }
  const std::vector<std::string>& Sessions(const std::string& subject) const {
    auto it = sessions_.find(subject);
    EEGID_REQUIRE(it != sessions_.end(), "unknown subject '", subject, "'");
    return it->second;
  }
  std::vector<std::string> Tasks() const {
    std::vector<std::string> tasks;
    for (const auto& r : rows_)
      if (std::find(tasks.begin(), tasks.end(), r.task_id) == tasks.end())
        tasks.push_back(r.task_id);
    return tasks;
  }

  /// First 60% of each subject's sessions (round half up, at least one
  /// session kept back) train; of the rest, 20% of sessions (rounded)
  /// validate.  If that leaves no validation session, the held-out sessions
  /// are marked kHeldOut and split by segment count in SegmentSplits().
  SessionRole Role(const std::string& subject,
                   const std::string& session) const {
    const auto& ses = Sessions(subject);
    auto it = std::find(ses.begin(), ses.end(), session);
    EEGID_REQUIRE(it != ses.end(), "unknown session '", session,
                  "' for subject '", subject, "'");
    const long pos = it - ses.begin();
    const long n = static_cast<long>(ses.size());
    const long n_train = std::clamp(RoundHalfUp(0.6 * n), 1L, n - 1);
    if (pos < n_train) return SessionRole::kTrain;
    const long rest = n - n_train;
    const long n_val = std::min(RoundHalfUp(0.2 * rest), rest - 1);
    if (n_val <= 0) return SessionRole::kHeldOut;
    return pos < n_train + n_val ? SessionRole::kValidation : SessionRole::kTest;
  }

  /// Split of each segment.  Segments of kHeldOut sessions are ordered by
  /// (session order, manifest row order, index); the first 20% (rounded half
  /// up) validate and the rest test.
  std::vector<Split> SegmentSplits(
      const std::vector<SegmentLabels>& segs) const {
    std::vector<Split> out(segs.size(), Split::kTest);
    std::map<std::string, std::vector<std::size_t>> held_out;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      switch (Role(segs[i].subject_id, segs[i].session_id)) {
        case SessionRole::kTrain: out[i] = Split::kTrain; break;
        case SessionRole::kValidation: out[i] = Split::kValidation; break;
        case SessionRole::kTest: out[i] = Split::kTest; break;
        case SessionRole::kHeldOut:
          held_out[segs[i].subject_id].push_back(i);
          break;
      }
    }
    for (auto& [subject, idx] : held_out) {
      const auto& ses = Sessions(subject);
      auto rank = [&](std::size_t i) {
        const auto& l = segs[i];
        const long s = std::find(ses.begin(), ses.end(), l.session_id) -
                       ses.begin();
        return std::tuple(s, RowOrder(l), l.index);
      };
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
        return rank(a) < rank(b);
      });
      const auto n_val = static_cast<std::size_t>(
          RoundHalfUp(0.2 * static_cast<double>(idx.size())));
      for (std::size_t j = 0; j < idx.size(); ++j)
        out[idx[j]] = j < n_val ? Split::kValidation : Split::kTest;
    }
    return out;
  }

 private:
  long RowOrder(const SegmentLabels& l) const {
    for (std::size_t i = 0; i < rows_.size(); ++i)
      if (rows_[i].subject_id == l.subject_id &&
          rows_[i].session_id == l.session_id &&
          rows_[i].task_id == l.task_id)
        return static_cast<long>(i);
    return static_cast<long>(rows_.size());
  }

  void Index() {
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& r : rows_) {
      if (!seen.emplace(r.subject_id, r.session_id, r.path).second)
        throw ValidationError(StrCat("duplicate manifest entry (", r.subject_id,
                                     ", ", r.session_id, ", ", r.path, ")"));
      auto [it, fresh] = sessions_.try_emplace(r.subject_id);
      if (fresh) subjects_.push_back(r.subject_id);
      auto& ses = it->second;
      if (std::find(ses.begin(), ses.end(), r.session_id) == ses.end())
        ses.push_back(r.session_id);
    }
    for (const auto& s : subjects_)
      if (sessions_[s].size() < 2)
        throw ValidationError(StrCat("subject '", s, "' has only ",
                                     sessions_[s].size(),
                                     " session; at least 2 are required"));
  }

  std::vector<ManifestRow> rows_;
  std::vector<std::string> subjects_;
  std::map<std::string, std::vector<std::string>> sessions_;
};

inline std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

/// Reads a manifest CSV.  Relative paths are resolved against the manifest's
/// directory.
inline Manifest LoadManifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ArtifactError(StrCat("cannot open manifest '", path, "'"));
  const auto base = std::filesystem::path(path).parent_path();
  std::string line;
  if (!std::getline(is, line) ||
      SplitCsvLine(line) != std::vector<std::string>{"subject_id", "session_id",
                                                      "task_id", "path"})
    throw ValidationError(StrCat(path, ":1: expected header "
                                       "'subject_id,session_id,task_id,path'"));
  std::vector<ManifestRow> rows;
  for (int lineno = 2; std::getline(is, line); ++lineno) {
    if (line.empty() || line == "\r") continue;
    auto f = SplitCsvLine(line);
    if (f.size() != 4 ||
        std::any_of(f.begin(), f.end(), [](auto& s) { return s.empty(); }))
      throw ValidationError(StrCat(path, ":", lineno,
                                   ": malformed row, expected 4 non-empty "
                                   "fields: '", line, "'"));
    std::filesystem::path p(f[3]);
    if (p.is_relative() && !base.empty()) p = base / p;
    rows.push_back({f[0], f[1], f[2], p.string()});
  }
  return Manifest(std::move(rows));
}

/// Writes rows with paths relative to `dir` when they live under it.
inline void SaveManifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ArtifactError(StrCat("cannot write manifest '", path, "'"));
  const auto base = std::filesystem::path(path).parent_path();
  os << "subject_id,session_id,task_id,path\n";
  for (const auto& r : m.Rows()) {
    std::string p = r.path;
    if (!base.empty()) {
      auto rel = std::filesystem::path(r.path).lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") p = rel.string();
    }
    os << r.subject_id << ',' << r.session_id << ',' << r.task_id << ',' << p
       << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus.

struct SynthSpec {
  int n_subjects = 10;
  int n_sessions = 3;
  int n_tasks = 2;
  double session_duration_s = 120.0;  // per task within a session
  int n_channels = 9;
  double sample_rate_hz = 250.0;
  double subject_sd = 1.0;
  double session_sd = 0.15;
  double task_sd = 0.5;
  double noise_sd = 1.0;

  void Validate() const {
    EEGID_REQUIRE(n_subjects >= 2, "n_subjects must be >= 2");
    EEGID_REQUIRE(n_sessions >= 2, "n_sessions must be >= 2");
    EEGID_REQUIRE(n_tasks >= 1, "n_tasks must be >= 1");
    EEGID_REQUIRE(n_channels >= 1, "n_channels must be >= 1");
    EEGID_REQUIRE(session_duration_s > 0, "session duration must be positive");
    EEGID_REQUIRE(sample_rate_hz > 0, "sample rate must be positive");
    for (double v : {subject_sd, session_sd, task_sd, noise_sd})
      EEGID_REQUIRE(std::isfinite(v) && v >= 0,
                    "effect magnitudes must be finite and >= 0");
    EEGID_REQUIRE(noise_sd > 0, "noise_sd must be positive");
  }
};

namespace detail {

inline std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t DeriveSeed(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = SplitMix(seed);
  for (auto p : parts) h = SplitMix(h ^ SplitMix(p + 0x51ed27ULL));
  return h;
}

struct Oscillator {
  double freq_hz;
  VectorXd log_amp;  // per channel
};

}  // namespace detail

inline std::string SynthSubjectId(int s) { return StrCat("S", s + 1); }
inline std::string SynthSessionId(int j) { return StrCat("ses", j + 1); }
inline std::string SynthTaskId(int t) { return StrCat("T", t + 1); }

/// Recordings in manifest row order.
struct Corpus {
  std::vector<Recording> recordings;
  Manifest manifest;
};

/// Loads every recording listed in a manifest and checks that its labels
/// agree with the row.
inline Corpus LoadCorpus(const std::string& manifest_path) {
  Corpus corpus;
  corpus.manifest = LoadManifest(manifest_path);
  for (const auto& row : corpus.manifest.Rows()) {
    Recording rec = LoadRecording(row.path);
    if (rec.subject_id != row.subject_id || rec.session_id != row.session_id ||
        rec.task_id != row.task_id)
      throw ArtifactError(StrCat(row.path, ": labels (", rec.subject_id, ", ",
                                 rec.session_id, ", ", rec.task_id,
                                 ") disagree with the manifest row"));
    corpus.recordings.push_back(std::move(rec));
  }
  return corpus;
}

/// Writes every recording to its manifest path (relative paths are taken
/// relative to `dir`) and the manifest itself to dir/manifest.csv.
inline void SaveCorpus(const std::string& dir, const Corpus& corpus) {
  namespace fs = std::filesystem;
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < corpus.recordings.size(); ++i) {
    ManifestRow row = corpus.manifest.Rows().at(i);
    fs::path p(row.path);
    if (p.is_relative()) p = fs::path(dir) / p;
    fs::create_directories(p.parent_path());
    SaveRecording(p.string(), corpus.recordings[i]);
    row.path = p.string();
    rows.push_back(std::move(row));
  }
  SaveManifest((fs::path(dir) / "manifest.csv").string(),
               Manifest(std::move(rows)));
}

/// Generates a corpus with a persistent per-subject spectral signature
/// (channel gains and 2-4 oscillators), a per-session broadband gain/tilt, a
/// per-task band perturbation shared across subjects and 1/f background
/// noise.  Subjects share the population's oscillator frequencies up to a
/// small jitter; most of the identity lies in how power is spread over the
/// channels, plus any oscillators beyond the population's.  Each recording
/// is seeded from (seed, subject, session, task) so the result does not
/// depend on generation order.  Manifest paths are
/// "rec/<subject>_<session>_<task>.mcsr".
inline Corpus GenerateSyntheticCorpus(const SynthSpec& spec,
                                      std::uint64_t seed) {
  spec.Validate();
  using detail::DeriveSeed;
  using detail::Oscillator;
  const int C = spec.n_channels;
  const double lo = 4.0, hi = 28.0;
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [](std::mt19937_64& g, double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(g);
  };
  auto randn_vec = [&](std::mt19937_64& g, int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gauss(g);
    return v;
  };

  // Population template shared by everybody.
  std::mt19937_64 pop(DeriveSeed(seed, {1}));
  const int n_template = std::uniform_int_distribution<int>(2, 4)(pop);
  std::vector<Oscillator> templ;
  for (int o = 0; o < n_template; ++o)
    templ.push_back({uniform(pop, lo, hi), 0.3 * randn_vec(pop, C)});

  // Subjects.
  struct SubjectModel {
    std::vector<Oscillator> osc;
    VectorXd log_gain;
  };
  std::vector<SubjectModel> subjects(spec.n_subjects);
  for (int s = 0; s < spec.n_subjects; ++s) {
    std::mt19937_64 g(DeriveSeed(seed, {2, static_cast<std::uint64_t>(s)}));
    auto& sm = subjects[s];
    sm.log_gain = 0.12 * spec.subject_sd * randn_vec(g, C);
    if (spec.subject_sd == 0.0) {
      sm.osc = templ;
      continue;
    }
    const int n_osc = std::uniform_int_distribution<int>(2, 4)(g);
    for (int o = 0; o < n_osc; ++o) {
      Oscillator osc;
      if (o < n_template) {
        osc.freq_hz = std::clamp(
            templ[o].freq_hz + 0.15 * spec.subject_sd * gauss(g), lo, hi);
        osc.log_amp = templ[o].log_amp + 0.15 * spec.subject_sd * randn_vec(g, C);
      } else {
        osc.freq_hz = uniform(g, lo, hi);
        osc.log_amp = spec.subject_sd * randn_vec(g, C);
      }
      sm.osc.push_back(std::move(osc));
    }
  }

  // Tasks: a band perturbation shared across subjects.
  std::vector<Oscillator> tasks(spec.n_tasks);
  for (int t = 0; t < spec.n_tasks; ++t) {
    std::mt19937_64 g(DeriveSeed(seed, {3, static_cast<std::uint64_t>(t)}));
    tasks[t] = {uniform(g, lo, hi), 0.3 * randn_vec(g, C)};
  }

  const auto T = static_cast<Eigen::Index>(
      std::llround(spec.session_duration_s * spec.sample_rate_hz));
  EEGID_REQUIRE(T >= 1, "session duration too short for the sample rate");
  const double dt = 1.0 / spec.sample_rate_hz;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  Corpus corpus;
  std::vector<ManifestRow> rows;
  for (int s = 0; s < spec.n_subjects; ++s) {
    for (int j = 0; j < spec.n_sessions; ++j) {
      std::mt19937_64 gs(DeriveSeed(
          seed, {4, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(j)}));
      const double session_gain = spec.session_sd * gauss(gs);
      const double tilt = spec.session_sd * gauss(gs);
      const VectorXd channel_jitter = 0.5 * spec.session_sd * randn_vec(gs, C);
      for (int t = 0; t < spec.n_tasks; ++t) {
        std::mt19937_64 g(DeriveSeed(
            seed, {5, static_cast<std::uint64_t>(s),
                   static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(t)}));
        std::vector<Oscillator> sources = subjects[s].osc;
        if (spec.task_sd > 0) {
          Oscillator task = tasks[t];
          task.log_amp.array() += std::log(spec.task_sd);
          sources.push_back(std::move(task));
        }
        MatrixXd x = MatrixXd::Zero(C, T);
        for (const auto& osc : sources) {
          // Narrow-band source: random-walk phase, slowly varying envelope.
          const double shaped =
              session_gain + tilt * (osc.freq_hz - 16.0) / 12.0;
          VectorXd amp = (osc.log_amp.array() + shaped +
                          subjects[s].log_gain.array() + channel_jitter.array())
                             .exp();
          double phase = uniform(g, 0.0, kTwoPi);
          double env = 1.0;
          for (Eigen::Index n = 0; n < T; ++n) {
            phase += kTwoPi * (osc.freq_hz + 0.5 * gauss(g)) * dt;
            env += 0.02 * (1.0 - env) + 0.02 * gauss(g);
            const double v = env * std::sin(phase);
            x.col(n) += v * amp;
          }
        }
        // 1/f background (Kellet's economy pink filter), per channel.
        for (int c = 0; c < C; ++c) {
          double b0 = 0, b1 = 0, b2 = 0;
          const double scale = spec.noise_sd;
          for (Eigen::Index n = 0; n < T; ++n) {
            const double w = gauss(g);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            x(c, n) += scale * (b0 + b1 + b2 + w * 0.1848) / 3.0;
          }
        }
        Recording rec;
        rec.subject_id = SynthSubjectId(s);
        rec.session_id = SynthSessionId(j);
        rec.task_id = SynthTaskId(t);
        rec.sample_rate_hz = spec.sample_rate_hz;
        rec.samples = x.unaryExpr(
            [](double v) { return static_cast<double>(static_cast<float>(v)); });
        rows.push_back({rec.subject_id, rec.session_id, rec.task_id,
                        StrCat("rec/", rec.subject_id, "_", rec.session_id, "_",
                               rec.task_id, ".mcsr")});
        corpus.recordings.push_back(std::move(rec));
      }
    }
  }
  corpus.manifest = Manifest(std::move(rows));
  return corpus;
}

}  // namespace eegid
