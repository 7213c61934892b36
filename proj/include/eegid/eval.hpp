// eegid/eval.hpp

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

#include <map>

#include "eegid/backend.hpp"

namespace eegid {

/// Test segments (rows) scored against enrolled subjects (columns).
struct ScoreTable {
  std::vector<std::string> subjects;  // column ids
  std::vector<SegmentLabels> rows;
  std::vector<Eigen::Index> truth;  // true column per row
  MatrixXd scores;

  void Validate() const {
    EEGID_REQUIRE(scores.rows() == static_cast<Eigen::Index>(truth.size()) &&
                      scores.cols() == static_cast<Eigen::Index>(subjects.size()),
                  "score table shape mismatch");
    EEGID_REQUIRE(scores.allFinite(), "score table has non-finite entries");
    for (auto t : truth)
      EEGID_REQUIRE(t >= 0 && t < scores.cols(),
                    "row whose true subject is not enrolled");
  }
};

/// Fraction of rows whose argmax column is the true one.  Ties go to the
/// lowest column index.
inline double Rank1Accuracy(const ScoreTable& t) {
  t.Validate();
  EEGID_REQUIRE(t.scores.rows() > 0, "empty score table");
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < t.scores.rows(); ++i) {
    Eigen::Index best;
    t.scores.row(i).maxCoeff(&best);  // first maximum
    if (best == t.truth[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(t.scores.rows());
}

/// Equal error rate from target and non-target scores.
///
/// Operating points are taken at every distinct score s (accept iff
/// score >= s), plus one point above the maximum where everything is
/// rejected.  FAR falls and FRR rises along that sweep; the EER is where
/// FAR - FRR changes sign, interpolating linearly between the two
/// bracketing operating points.
inline double EqualErrorRate(std::vector<double> targets,
                             std::vector<double> nontargets) {
  EEGID_REQUIRE(!targets.empty() && !nontargets.empty(),
                "EER needs at least one target and one non-target score");
  std::sort(targets.begin(), targets.end());
  std::sort(nontargets.begin(), nontargets.end());
  std::vector<double> thresholds;
  thresholds.reserve(targets.size() + nontargets.size());
  std::merge(targets.begin(), targets.end(), nontargets.begin(),
             nontargets.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  const double nt = static_cast<double>(targets.size());
  const double nn = static_cast<double>(nontargets.size());
  std::size_t ti = 0, ni = 0;  // counts strictly below the threshold
  double prev_far = 1.0, prev_frr = 0.0;
  for (std::size_t k = 0; k <= thresholds.size(); ++k) {
    double far, frr;
    if (k < thresholds.size()) {
      const double th = thresholds[k];
      while (ti < targets.size() && targets[ti] < th) ++ti;
      while (ni < nontargets.size() && nontargets[ni] < th) ++ni;
      far = (nn - static_cast<double>(ni)) / nn;
      frr = static_cast<double>(ti) / nt;
    } else {
      far = 0.0;
      frr = 1.0;
    }
    const double diff = far - frr;
    if (diff == 0.0) return far;
    if (diff < 0.0) {
      const double prev_diff = prev_far - prev_frr;
      const double a = prev_diff / (prev_diff - diff);
      return prev_far + a * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 0.0;  // unreachable: the final point always has FAR - FRR = -1
}

/// Closed-set EER: true-label entries are targets, every other entry a
/// non-target.
inline double EqualErrorRate(const ScoreTable& t) {
  t.Validate();
  std::vector<double> targets, nontargets;
  for (Eigen::Index i = 0; i < t.scores.rows(); ++i)
    for (Eigen::Index j = 0; j < t.scores.cols(); ++j)
      (j == t.truth[i] ? targets : nontargets).push_back(t.scores(i, j));
  return EqualErrorRate(std::move(targets), std::move(nontargets));
}

struct EvalReport {
  std::string protocol;
  std::string system;
  std::string condition;  // e.g. "task=T1 case=2"
  double accuracy = 0.0;
  double eer = 0.0;
  Eigen::Index n_trials = 0;  // test segments
  Eigen::Index n_scores = 0;
  std::uint64_t seed = 0;
};

inline EvalReport Evaluate(const ScoreTable& t) {
  EvalReport r;
  r.accuracy = Rank1Accuracy(t);
  r.eer = EqualErrorRate(t);
  r.n_trials = t.scores.rows();
  r.n_scores = t.scores.size();
  return r;
}

inline void WriteReportCsv(std::ostream& os,
                           const std::vector<EvalReport>& reports) {
  os << "protocol,system,condition,accuracy,eer,n_trials,seed\n";
  os << std::setprecision(6) << std::fixed;
  for (const auto& r : reports)
    os << r.protocol << ',' << r.system << ',' << r.condition << ','
       << r.accuracy << ',' << r.eer << ',' << r.n_trials << ',' << r.seed
       << '\n';
}

inline void WriteReportText(std::ostream& os,
                            const std::vector<EvalReport>& reports) {
  os << std::left << std::setw(20) << "protocol" << std::setw(22) << "system"
     << std::setw(28) << "condition" << std::right << std::setw(10)
     << "acc(%)" << std::setw(10) << "EER(%)" << std::setw(9) << "trials"
     << '\n';
  os << std::string(99, '-') << '\n';
  for (const auto& r : reports)
    os << std::left << std::setw(20) << r.protocol << std::setw(22) << r.system
       << std::setw(28) << (r.condition.empty() ? "-" : r.condition)
       << std::right << std::fixed << std::setprecision(2) << std::setw(10)
       << 100.0 * r.accuracy << std::setw(10) << 100.0 * r.eer << std::setw(9)
       << r.n_trials << '\n';
}

/// Score table CSV: a "# config_hash=<hex>" line, a header
/// "segment,true_subject,<subject>...", then one row per test segment.
inline void WriteScoreTableCsv(std::ostream& os, const ScoreTable& t,
                               std::uint64_t config_hash) {
  t.Validate();
  os << "# config_hash=" << HexDigest(config_hash) << '\n';
  os << "segment,true_subject";
  for (const auto& s : t.subjects) os << ',' << s;
  os << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < t.scores.rows(); ++i) {
    os << t.rows[i].Key() << ',' << t.subjects[t.truth[i]];
    for (Eigen::Index j = 0; j < t.scores.cols(); ++j) os << ',' << t.scores(i, j);
    os << '\n';
  }
}

inline ScoreTable ReadScoreTableCsv(std::istream& is, const std::string& what,
                                    std::uint64_t* config_hash) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# config_hash=", 0) != 0)
    throw ArtifactError(StrCat(what, ": missing config hash line"));
  if (config_hash) *config_hash = std::stoull(line.substr(14), nullptr, 16);
  if (!std::getline(is, line))
    throw ArtifactError(StrCat(what, ": missing header"));
  auto head = SplitCsvLine(line);
  if (head.size() < 3 || head[0] != "segment" || head[1] != "true_subject")
    throw ArtifactError(StrCat(what, ": bad header"));
  ScoreTable t;
  t.subjects.assign(head.begin() + 2, head.end());
  std::vector<std::vector<double>> vals;
  for (int lineno = 3; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    auto f = SplitCsvLine(line);
    if (f.size() != head.size())
      throw ArtifactError(StrCat(what, ":", lineno, ": wrong field count"));
    auto it = std::find(t.subjects.begin(), t.subjects.end(), f[1]);
    if (it == t.subjects.end())
      throw ArtifactError(StrCat(what, ":", lineno, ": true subject '", f[1],
                                 "' is not a column"));
    try {
      t.rows.push_back(SegmentLabels::FromKey(f[0]));
    } catch (const std::exception& e) {
      throw ArtifactError(StrCat(what, ":", lineno, ": ", e.what()));
    }
    t.truth.push_back(it - t.subjects.begin());
    std::vector<double> row;
    for (std::size_t j = 2; j < f.size(); ++j) row.push_back(std::stod(f[j]));
    vals.push_back(std::move(row));
  }
  t.scores.resize(static_cast<Eigen::Index>(vals.size()),
                  static_cast<Eigen::Index>(t.subjects.size()));
  for (std::size_t i = 0; i < vals.size(); ++i)
    for (std::size_t j = 0; j < vals[i].size(); ++j)
      t.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          vals[i][j];
  t.Validate();
  return t;
}

}  // namespace eegid
