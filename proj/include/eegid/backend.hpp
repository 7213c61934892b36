// eegid/backend.hpp

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

#include "eegid/xvector.hpp"

namespace eegid {

enum class EmbeddingKind : std::uint8_t { kIvector, kXvector, kIxvector };

inline std::string_view KindName(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::kIvector: return "ivector";
    case EmbeddingKind::kXvector: return "xvector";
    case EmbeddingKind::kIxvector: return "ixvector";
  }
  return "?";
}

inline EmbeddingKind ParseKind(std::string_view s) {
  if (s == "ivector") return EmbeddingKind::kIvector;
  if (s == "xvector") return EmbeddingKind::kXvector;
  if (s == "ixvector") return EmbeddingKind::kIxvector;
  throw ValidationError(StrCat("unknown embedding kind '", s, "'"));
}

struct Embedding {
  EmbeddingKind kind = EmbeddingKind::kIvector;
  VectorXd v;
  SegmentLabels labels;
};

/// Linear discriminant projection y = W' (x - mean), W is p x q with
/// columns sorted by decreasing eigenvalue and normalized so that
/// W' S_w W = I.  `mean` is zero for an uncentered projection.
struct LdaModel {
  VectorXd mean;
  MatrixXd projection;  // p x q
  VectorXd eigenvalues;
  std::vector<std::string> classes;
  std::uint64_t source_fingerprint = 0;  // model that produced the inputs
  Provenance provenance;

  Eigen::Index InputDim() const { return projection.rows(); }
  Eigen::Index OutputDim() const { return projection.cols(); }

  VectorXd Project(const VectorXd& x) const {
    EEGID_REQUIRE(x.size() == InputDim(), "LDA expects dimension ", InputDim(),
                  ", got ", x.size());
    return projection.transpose() * (x - mean);
  }
};

/// Between-class vs within-class generalized eigenproblem.  The within-class
/// scatter is regularized by 1e-6 * trace / p * I.  `q` = 0 selects
/// min(p, S - 1).  With `center` false the projection is applied to x
/// directly, which keeps cosine scores invariant to the scale of x.
inline LdaModel FitLda(const std::vector<VectorXd>& xs,
                       const std::vector<std::string>& labels, Eigen::Index q,
                       bool center = true) {
  EEGID_REQUIRE(!xs.empty() && xs.size() == labels.size(),
                "LDA needs one label per vector");
  const Eigen::Index p = xs.front().size();
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EEGID_REQUIRE(xs[i].size() == p, "LDA inputs have mixed dimensions");
    EEGID_REQUIRE(xs[i].allFinite(), "LDA inputs must be finite");
    groups[labels[i]].push_back(i);
  }
  const auto S = static_cast<Eigen::Index>(groups.size());
  EEGID_REQUIRE(S >= 2, "LDA needs at least 2 classes, got ", S);
  if (q == 0) q = std::min(p, S - 1);
  EEGID_REQUIRE(q >= 1 && q <= S - 1 && q <= p, "LDA dimension ", q,
                " exceeds min(p, S - 1) = ", std::min(p, S - 1));

  VectorXd mean = VectorXd::Zero(p);
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  MatrixXd sb = MatrixXd::Zero(p, p), sw = MatrixXd::Zero(p, p);
  LdaModel lda;
  for (const auto& [name, idx] : groups) {
    lda.classes.push_back(name);
    VectorXd mu = VectorXd::Zero(p);
    for (auto i : idx) mu += xs[i];
    mu /= static_cast<double>(idx.size());
    const VectorXd dm = mu - mean;
    sb.noalias() += static_cast<double>(idx.size()) * dm * dm.transpose();
    for (auto i : idx) {
      const VectorXd dx = xs[i] - mu;
      sw.noalias() += dx * dx.transpose();
    }
  }
  const double reg = 1e-6 * sw.trace() / static_cast<double>(p);
  sw.diagonal().array() += reg > 0 ? reg : 1e-12;

  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(sb, sw);
  if (ges.info() != Eigen::Success)
    throw NumericError("LDA generalized eigenproblem failed");
  // Ascending order from Eigen; take the top q in descending order.
  lda.mean = center ? mean : VectorXd::Zero(p);
  lda.projection.resize(p, q);
  lda.eigenvalues.resize(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    lda.projection.col(j) = ges.eigenvectors().col(p - 1 - j);
    lda.eigenvalues(j) = ges.eigenvalues()(p - 1 - j);
  }
  return lda;
}

/// Reference vector of a subject: the mean of its (already projected)
/// per-segment embeddings.
inline VectorXd Enroll(const std::vector<VectorXd>& embeddings) {
  EEGID_REQUIRE(!embeddings.empty(), "enrollment needs at least one embedding");
  VectorXd ref = VectorXd::Zero(embeddings.front().size());
  for (const auto& e : embeddings) {
    EEGID_REQUIRE(e.size() == ref.size(), "enrollment embeddings differ in size");
    ref += e;
  }
  return ref / static_cast<double>(embeddings.size());
}

inline double CosineScore(const VectorXd& reference, const VectorXd& test) {
  EEGID_REQUIRE(reference.size() == test.size(), "cosine of vectors of size ",
                reference.size(), " and ", test.size());
  const double nr = reference.norm(), nt = test.norm();
  EEGID_REQUIRE(nr > 0 && nt > 0, "cosine score of a zero-norm vector");
  return std::clamp(reference.dot(test) / (nr * nt), -1.0, 1.0);
}

inline VectorXd UnitNormalized(const VectorXd& v) {
  const double n = v.norm();
  return n > 0 ? VectorXd(v / n) : v;
}

/// ix-vector: each part scaled to unit norm, then concatenated (i first).
inline Embedding FuseIx(const Embedding& iv, const Embedding& xv) {
  EEGID_REQUIRE(iv.labels == xv.labels, "cannot fuse embeddings of different "
                "segments (", iv.labels.Key(), " vs ", xv.labels.Key(), ")");
  Embedding out;
  out.kind = EmbeddingKind::kIxvector;
  out.labels = iv.labels;
  out.v.resize(iv.v.size() + xv.v.size());
  out.v << UnitNormalized(iv.v), UnitNormalized(xv.v);
  return out;
}

// ---------------------------------------------------------------------------
// Files: "LDAX1" and embedding CSV dumps.

inline void WriteLda(std::ostream& os, const LdaModel& lda) {
  BinaryWriter w(os);
  w.Magic("LDAX1");
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(lda.InputDim()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(lda.OutputDim()));
  w.PutMatrix(lda.projection, true);
  w.PutMatrix(lda.mean);
  w.PutMatrix(lda.eigenvalues);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(lda.classes.size()));
  for (const auto& c : lda.classes) w.PutString(c);
  w.Put<std::uint64_t>(lda.source_fingerprint);
  w.PutProvenance(lda.provenance);
}

inline LdaModel ReadLda(std::istream& is, const std::string& what) {
  BinaryReader r(is, what);
  r.ExpectMagic("LDAX1");
  const auto p = r.Get<std::uint32_t>();
  const auto q = r.Get<std::uint32_t>();
  if (p == 0 || q == 0 || q > p || p > (1u << 20))
    throw ArtifactError(StrCat(what, ": implausible LDA shape"));
  LdaModel lda;
  lda.projection = r.GetMatrix(p, q, true);
  lda.mean = r.GetMatrix(p, 1);
  lda.eigenvalues = r.GetMatrix(q, 1);
  const auto n = r.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) lda.classes.push_back(r.GetString());
  lda.source_fingerprint = r.Get<std::uint64_t>();
  lda.provenance = r.GetProvenance();
  r.ExpectEnd();
  return lda;
}

inline void SaveLda(const std::string& path, const LdaModel& lda) {
  auto os = OpenOut(path);
  WriteLda(os, lda);
}

inline LdaModel LoadLda(const std::string& path) {
  auto is = OpenIn(path);
  return ReadLda(is, path);
}

/// CSV rows: kind,subject_id,session_id,task_id,index,v0,v1,...  Values are
/// written with 17 significant digits so they re-read exactly.
inline void WriteEmbeddingsCsv(std::ostream& os,
                               const std::vector<Embedding>& embs) {
  os << "kind,subject_id,session_id,task_id,index,values\n";
  os << std::setprecision(17);
  for (const auto& e : embs) {
    os << KindName(e.kind) << ',' << e.labels.subject_id << ','
       << e.labels.session_id << ',' << e.labels.task_id << ','
       << e.labels.index;
    for (Eigen::Index i = 0; i < e.v.size(); ++i) os << ',' << e.v(i);
    os << '\n';
  }
}

inline std::vector<Embedding> ReadEmbeddingsCsv(std::istream& is,
                                                const std::string& what) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("kind,subject_id", 0) != 0)
    throw ArtifactError(StrCat(what, ": not an embedding CSV"));
  std::vector<Embedding> out;
  for (int lineno = 2; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    auto f = SplitCsvLine(line);
    if (f.size() < 6)
      throw ArtifactError(StrCat(what, ":", lineno, ": too few fields"));
    Embedding e;
    try {
      e.kind = ParseKind(f[0]);
      e.labels = {f[1], f[2], f[3],
                  static_cast<std::uint32_t>(std::stoul(f[4]))};
      e.v.resize(static_cast<Eigen::Index>(f.size() - 5));
      for (std::size_t i = 5; i < f.size(); ++i) e.v(i - 5) = std::stod(f[i]);
    } catch (const std::exception& ex) {
      throw ArtifactError(StrCat(what, ":", lineno, ": ", ex.what()));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace eegid
