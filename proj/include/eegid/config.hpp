// eegid/config.hpp

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
// Pipeline configuration.  Files are INI-style ("[section]" then
// "key = value"); keys not present keep their defaults, and command-line
// "section.key=value" overrides are applied on top.

#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "eegid/dataio.hpp"
#include "eegid/features.hpp"

namespace eegid {

inline const std::vector<std::string> kDefaultChannelNames = {
    "Fz", "F7", "F8", "C3", "C4", "P7", "P8", "O1", "O2"};

struct PipelineConfig {
  // [corpus] synthetic generator
  SynthSpec synth;
  std::uint64_t corpus_seed = 1;

  // [features]
  double frame_len_ms = 360.0;
  Band band{3.0, 30.0};
  bool normalize = false;
  double segment_s = 15.0;
  std::vector<std::string> channel_names = kDefaultChannelNames;
  std::vector<int> channels = {0, 1, 2, 3, 4, 5, 6, 7, 8};

  // [ubm]
  int ubm_gmm_mixtures = 128;
  int ivector_baseline_mixtures = 64;
  int ivector_modified_mixtures = 7;
  int ivector_fusion_mixtures = 8;  // per-channel systems for score fusion
  int ubm_iters = 50;
  double ubm_tol = 1e-4;
  double floor_factor = 1e-4;
  double relevance = 16.0;

  // [ivector]
  int ivector_rank = 160;
  int tmatrix_iters = 10;
  std::string enrollment = "mean";  // mean | pooled-stats

  // [xvector]
  int xvec_baseline_hidden1 = 1024;
  int xvec_baseline_hidden2 = 1024;
  int xvec_modified_hidden1 = 1024;
  int xvec_modified_hidden2 = 512;
  int xvec_embed_dim = 160;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 30;
  int patience = 5;

  // [backend]
  int lda_dim = 0;  // 0: min(p, S - 1)

  // [protocol]
  std::string protocol = "session-disjoint";
  std::vector<std::string> systems = {"ubm-gmm", "ivector-baseline",
                                      "ivector-modified", "xvector-baseline",
                                      "xvector-modified", "ix"};
  std::vector<double> test_lengths_s = {15.0, 30.0, 60.0};
  std::vector<std::vector<int>> channel_subsets = {
      {0, 1, 2}, {3, 4, 5, 6}, {0, 1, 2, 3, 4, 5, 6, 7, 8}};
  double heldout_subject_fraction = 0.2;
  std::string leave_out_task;  // empty: every task in turn

  // [run]
  std::uint64_t seed = 7;
  int workers = 1;

  void Validate() const {
    synth.Validate();
    EEGID_REQUIRE(frame_len_ms > 0, "frame_len_ms must be positive");
    EEGID_REQUIRE(band.low_hz > 0 && band.low_hz < band.high_hz,
                  "band must satisfy 0 < low < high");
    EEGID_REQUIRE(segment_s > 0, "segment_s must be positive");
    EEGID_REQUIRE(!channels.empty(), "channel selection is empty");
    for (int c : channels)
      EEGID_REQUIRE(c >= 0 && c < static_cast<int>(channel_names.size()),
                    "channel index ", c, " has no name");
    for (const auto& subset : channel_subsets)
      for (int c : subset)
        EEGID_REQUIRE(c >= 0 && c < static_cast<int>(channel_names.size()),
                      "channel subset references unknown channel ", c);
    for (int k : {ubm_gmm_mixtures, ivector_baseline_mixtures,
                  ivector_modified_mixtures, ivector_fusion_mixtures, ubm_iters,
                  ivector_rank, tmatrix_iters, xvec_baseline_hidden1,
                  xvec_baseline_hidden2, xvec_modified_hidden1,
                  xvec_modified_hidden2, xvec_embed_dim, batch_size, epochs,
                  patience, workers})
      EEGID_REQUIRE(k >= 1, "integer parameters must be positive");
    EEGID_REQUIRE(relevance >= 0, "relevance must be >= 0");
    EEGID_REQUIRE(enrollment == "mean" || enrollment == "pooled-stats",
                  "enrollment must be 'mean' or 'pooled-stats'");
    EEGID_REQUIRE(heldout_subject_fraction > 0 && heldout_subject_fraction < 1,
                  "heldout_subject_fraction must lie in (0, 1)");
    for (double l : test_lengths_s)
      EEGID_REQUIRE(l > 0, "test lengths must be positive");
  }

  /// Every setting except `workers`, one per line, in a fixed order.
  std::string Canonical() const;

  std::uint64_t Hash() const {
    Fnv1a h;
    h.Update(Canonical());
    return h.Digest();
  }
};

namespace detail {

template <typename T>
std::string JoinList(const std::vector<T>& v, char sep = ',') {
  std::ostringstream oss;
  oss << std::setprecision(17);
  for (std::size_t i = 0; i < v.size(); ++i) oss << (i ? std::string(1, sep) : "") << v[i];
  return oss.str();
}

inline std::vector<std::string> SplitList(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream iss(s);
  while (std::getline(iss, cur, sep)) {
    cur.erase(0, cur.find_first_not_of(" \t"));
    cur.erase(cur.find_last_not_of(" \t") + 1);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline double ParseDouble(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ValidationError(StrCat("config: '", key, "' expects a number, got '",
                               v, "'"));
}

inline long long ParseInt(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw ValidationError(StrCat("config: '", key, "' expects an integer, got '",
                               v, "'"));
}

inline bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError(StrCat("config: '", key, "' expects true/false"));
}

// Channel references may be indices or names.
inline std::vector<int> ParseChannels(const std::string& key,
                                      const std::string& v,
                                      const std::vector<std::string>& names) {
  std::vector<int> out;
  for (const auto& tok : SplitList(v, ',')) {
    auto it = std::find(names.begin(), names.end(), tok);
    if (it != names.end())
      out.push_back(static_cast<int>(it - names.begin()));
    else
      out.push_back(static_cast<int>(ParseInt(key, tok)));
  }
  return out;
}

}  // namespace detail

/// Applies one "section.key" = value setting.
inline void SetConfigValue(PipelineConfig& c, const std::string& key,
                           const std::string& value) {
  using namespace detail;
  auto d = [&] { return ParseDouble(key, value); };
  auto i = [&] { return static_cast<int>(ParseInt(key, value)); };
  auto u = [&] { return static_cast<std::uint64_t>(ParseInt(key, value)); };
  if (key == "corpus.n_subjects") c.synth.n_subjects = i();
  else if (key == "corpus.n_sessions") c.synth.n_sessions = i();
  else if (key == "corpus.n_tasks") c.synth.n_tasks = i();
  else if (key == "corpus.session_duration_s") c.synth.session_duration_s = d();
  else if (key == "corpus.n_channels") c.synth.n_channels = i();
  else if (key == "corpus.sample_rate_hz") c.synth.sample_rate_hz = d();
  else if (key == "corpus.subject_sd") c.synth.subject_sd = d();
  else if (key == "corpus.session_sd") c.synth.session_sd = d();
  else if (key == "corpus.task_sd") c.synth.task_sd = d();
  else if (key == "corpus.noise_sd") c.synth.noise_sd = d();
  else if (key == "corpus.seed") c.corpus_seed = u();
  else if (key == "features.frame_len_ms") c.frame_len_ms = d();
  else if (key == "features.band_low_hz") c.band.low_hz = d();
  else if (key == "features.band_high_hz") c.band.high_hz = d();
  else if (key == "features.normalize") c.normalize = ParseBool(key, value);
  else if (key == "features.segment_s") c.segment_s = d();
  else if (key == "features.channel_names") c.channel_names = SplitList(value, ',');
  else if (key == "features.channels")
    c.channels = ParseChannels(key, value, c.channel_names);
  else if (key == "ubm.ubm_gmm_mixtures") c.ubm_gmm_mixtures = i();
  else if (key == "ubm.ivector_baseline_mixtures") c.ivector_baseline_mixtures = i();
  else if (key == "ubm.ivector_modified_mixtures") c.ivector_modified_mixtures = i();
  else if (key == "ubm.ivector_fusion_mixtures") c.ivector_fusion_mixtures = i();
  else if (key == "ubm.iters") c.ubm_iters = i();
  else if (key == "ubm.tol") c.ubm_tol = d();
  else if (key == "ubm.floor_factor") c.floor_factor = d();
  else if (key == "ubm.relevance") c.relevance = d();
  else if (key == "ivector.rank") c.ivector_rank = i();
  else if (key == "ivector.iters") c.tmatrix_iters = i();
  else if (key == "ivector.enrollment") c.enrollment = value;
  else if (key == "xvector.baseline_hidden1") c.xvec_baseline_hidden1 = i();
  else if (key == "xvector.baseline_hidden2") c.xvec_baseline_hidden2 = i();
  else if (key == "xvector.modified_hidden1") c.xvec_modified_hidden1 = i();
  else if (key == "xvector.modified_hidden2") c.xvec_modified_hidden2 = i();
  else if (key == "xvector.embed_dim") c.xvec_embed_dim = i();
  else if (key == "xvector.learning_rate") c.learning_rate = d();
  else if (key == "xvector.batch_size") c.batch_size = i();
  else if (key == "xvector.epochs") c.epochs = i();
  else if (key == "xvector.patience") c.patience = i();
  else if (key == "backend.lda_dim") c.lda_dim = i();
  else if (key == "protocol.name") c.protocol = value;
  else if (key == "protocol.systems") c.systems = SplitList(value, ',');
  else if (key == "protocol.test_lengths_s") {
    c.test_lengths_s.clear();
    for (const auto& t : SplitList(value, ',')) c.test_lengths_s.push_back(ParseDouble(key, t));
  } else if (key == "protocol.channel_subsets") {
    c.channel_subsets.clear();
    for (const auto& s : SplitList(value, ';'))
      c.channel_subsets.push_back(ParseChannels(key, s, c.channel_names));
  } else if (key == "protocol.heldout_subject_fraction") c.heldout_subject_fraction = d();
  else if (key == "protocol.leave_out_task") c.leave_out_task = value;
  else if (key == "run.seed") c.seed = u();
  else if (key == "run.workers") c.workers = i();
  else
    throw ValidationError(StrCat("config: unknown key '", key, "'"));
}

inline std::string PipelineConfig::Canonical() const {
  using detail::JoinList;
  std::ostringstream o;
  o << std::setprecision(17);
  o << "corpus.n_subjects=" << synth.n_subjects << '\n'
    << "corpus.n_sessions=" << synth.n_sessions << '\n'
    << "corpus.n_tasks=" << synth.n_tasks << '\n'
    << "corpus.session_duration_s=" << synth.session_duration_s << '\n'
    << "corpus.n_channels=" << synth.n_channels << '\n'
    << "corpus.sample_rate_hz=" << synth.sample_rate_hz << '\n'
    << "corpus.subject_sd=" << synth.subject_sd << '\n'
    << "corpus.session_sd=" << synth.session_sd << '\n'
    << "corpus.task_sd=" << synth.task_sd << '\n'
    << "corpus.noise_sd=" << synth.noise_sd << '\n'
    << "corpus.seed=" << corpus_seed << '\n'
    << "features.frame_len_ms=" << frame_len_ms << '\n'
    << "features.band_low_hz=" << band.low_hz << '\n'
    << "features.band_high_hz=" << band.high_hz << '\n'
    << "features.normalize=" << (normalize ? "true" : "false") << '\n'
    << "features.segment_s=" << segment_s << '\n'
    << "features.channel_names=" << JoinList(channel_names) << '\n'
    << "features.channels=" << JoinList(channels) << '\n'
    << "ubm.ubm_gmm_mixtures=" << ubm_gmm_mixtures << '\n'
    << "ubm.ivector_baseline_mixtures=" << ivector_baseline_mixtures << '\n'
    << "ubm.ivector_modified_mixtures=" << ivector_modified_mixtures << '\n'
    << "ubm.ivector_fusion_mixtures=" << ivector_fusion_mixtures << '\n'
    << "ubm.iters=" << ubm_iters << '\n'
    << "ubm.tol=" << ubm_tol << '\n'
    << "ubm.floor_factor=" << floor_factor << '\n'
    << "ubm.relevance=" << relevance << '\n'
    << "ivector.rank=" << ivector_rank << '\n'
    << "ivector.iters=" << tmatrix_iters << '\n'
    << "ivector.enrollment=" << enrollment << '\n'
    << "xvector.baseline_hidden1=" << xvec_baseline_hidden1 << '\n'
    << "xvector.baseline_hidden2=" << xvec_baseline_hidden2 << '\n'
    << "xvector.modified_hidden1=" << xvec_modified_hidden1 << '\n'
    << "xvector.modified_hidden2=" << xvec_modified_hidden2 << '\n'
    << "xvector.embed_dim=" << xvec_embed_dim << '\n'
    << "xvector.learning_rate=" << learning_rate << '\n'
    << "xvector.batch_size=" << batch_size << '\n'
    << "xvector.epochs=" << epochs << '\n'
    << "xvector.patience=" << patience << '\n'
    << "backend.lda_dim=" << lda_dim << '\n'
    << "protocol.name=" << protocol << '\n'
    << "protocol.systems=" << JoinList(systems) << '\n'
    << "protocol.test_lengths_s=" << JoinList(test_lengths_s) << '\n'
    << "protocol.channel_subsets=";
  for (std::size_t i = 0; i < channel_subsets.size(); ++i)
    o << (i ? ";" : "") << JoinList(channel_subsets[i]);
  o << '\n'
    << "protocol.heldout_subject_fraction=" << heldout_subject_fraction << '\n'
    << "protocol.leave_out_task=" << leave_out_task << '\n'
    << "run.seed=" << seed << '\n';
  return o.str();
}

/// Loads an INI file on top of the defaults.
inline PipelineConfig LoadConfig(const std::string& path,
                                 PipelineConfig base = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(StrCat("config parse failure: ", e.what()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty())
      throw ValidationError(StrCat("config ", path, ": key '", section,
                                   "' outside of a section"));
    for (const auto& [key, value] : body)
      SetConfigValue(base, section + "." + key, value.get_value<std::string>());
  }
  return base;
}

/// Writes the effective configuration as an INI file that LoadConfig reads
/// back to an equal configuration.
inline void SaveConfig(std::ostream& os, const PipelineConfig& c) {
  std::string section;
  std::istringstream lines(c.Canonical());
  std::string line;
  while (std::getline(lines, line)) {
    const auto dot = line.find('.');
    const auto eq = line.find('=');
    const std::string sec = line.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    os << line.substr(dot + 1, eq - dot - 1) << " = " << line.substr(eq + 1)
       << '\n';
  }
}

}  // namespace eegid
