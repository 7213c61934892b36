// eegid/ivector.hpp

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

#include <iostream>
#include <random>

#include "eegid/gmm.hpp"

namespace eegid {

/// baseline pools every channel into one set of per-mixture statistics;
/// modified keeps one set per (mixture, channel).
enum class StatsMode : std::uint8_t { kBaseline = 0, kModified = 1 };

inline std::string_view ModeName(StatsMode m) {
  return m == StatsMode::kBaseline ? "baseline" : "modified";
}

/// Zeroth- and centered first-order Baum-Welch statistics of one segment.
/// Statistics are arranged in blocks; block b covers mixture b / C and
/// channel b % C (C = 1 in baseline mode).  `first` has `dim` entries per
/// block.
struct SuffStats {
  StatsMode mode = StatsMode::kBaseline;
  Eigen::Index mixtures = 0;
  Eigen::Index channels = 1;  // blocks per mixture
  Eigen::Index dim = 0;
  VectorXd zeroth;  // blocks
  VectorXd first;   // blocks * dim
  SegmentLabels labels;

  Eigen::Index NumBlocks() const { return mixtures * channels; }
  Eigen::Index SupervectorDim() const { return NumBlocks() * dim; }
};

inline SuffStats AccumulateStats(const Ubm& ubm, const FeatureSegment& feat,
                                 StatsMode mode) {
  const DiagGmm& g = ubm.gmm;
  EEGID_REQUIRE(feat.Dim() == g.Dim(), "feature dimension ", feat.Dim(),
                " does not match UBM dimension ", g.Dim());
  const Eigen::Index K = g.NumComponents(), d = g.Dim();
  SuffStats st;
  st.mode = mode;
  st.mixtures = K;
  st.channels = mode == StatsMode::kModified ? feat.channels : 1;
  st.dim = d;
  st.labels = feat.labels;
  st.zeroth = VectorXd::Zero(st.NumBlocks());
  st.first = VectorXd::Zero(st.SupervectorDim());

  const MatrixXd post = g.Posteriors(feat.data);  // (C*N) x K
  const Eigen::Index C = st.channels;
  const Eigen::Index rows_per_block = feat.data.rows() / C;
  for (Eigen::Index c = 0; c < C; ++c) {
    const auto p = post.middleRows(c * rows_per_block, rows_per_block);
    const auto x = feat.data.middleRows(c * rows_per_block, rows_per_block);
    const VectorXd occ = p.colwise().sum().transpose();
    const MatrixXd px = p.transpose() * x;  // K x d
    for (Eigen::Index k = 0; k < K; ++k) {
      const Eigen::Index b = k * C + c;
      st.zeroth(b) = occ(k);
      st.first.segment(b * d, d) =
          (px.row(k) - occ(k) * g.Means().row(k)).transpose();
    }
  }
  return st;
}

/// Sums the statistics of several segments (pooled-statistics enrollment).
/// The result carries the labels of the first segment.
inline SuffStats PoolStats(const std::vector<const SuffStats*>& parts) {
  EEGID_REQUIRE(!parts.empty(), "no statistics to pool");
  SuffStats out = *parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto& p = *parts[i];
    EEGID_REQUIRE(p.mode == out.mode && p.mixtures == out.mixtures &&
                      p.channels == out.channels && p.dim == out.dim,
                  "cannot pool statistics of different shapes");
    out.zeroth += p.zeroth;
    out.first += p.first;
  }
  return out;
}

/// The total variability subspace.  T is D x R with D = blocks * dim; sigma
/// is the UBM diagonal covariance replicated per block.
class TotalVariability {
 public:
  TotalVariability() = default;
  TotalVariability(StatsMode mode, Eigen::Index mixtures, Eigen::Index channels,
                   Eigen::Index dim, MatrixXd T, VectorXd sigma,
                   std::uint64_t ubm_fingerprint)
      : mode_(mode),
        mixtures_(mixtures),
        channels_(channels),
        dim_(dim),
        T_(std::move(T)),
        sigma_(std::move(sigma)),
        ubm_fingerprint_(ubm_fingerprint) {
    EEGID_REQUIRE(T_.cols() >= 1, "subspace rank must be >= 1");
    EEGID_REQUIRE(T_.rows() == mixtures_ * channels_ * dim_ &&
                      sigma_.size() == T_.rows(),
                  "total variability shape mismatch");
    EEGID_REQUIRE((sigma_.array() > 0).all(), "sigma entries must be positive");
    EEGID_REQUIRE(mode_ == StatsMode::kModified || channels_ == 1,
                  "baseline subspace has one block per mixture");
    Precompute();
  }

  StatsMode Mode() const { return mode_; }
  Eigen::Index Mixtures() const { return mixtures_; }
  Eigen::Index Channels() const { return channels_; }
  Eigen::Index Dim() const { return dim_; }
  Eigen::Index Rank() const { return T_.cols(); }
  Eigen::Index NumBlocks() const { return mixtures_ * channels_; }
  const MatrixXd& T() const { return T_; }
  const VectorXd& Sigma() const { return sigma_; }
  std::uint64_t UbmFingerprint() const { return ubm_fingerprint_; }

  void CheckCompatible(const SuffStats& st) const {
    EEGID_REQUIRE(st.mode == mode_, "statistics mode ", ModeName(st.mode),
                  " does not match subspace mode ", ModeName(mode_));
    EEGID_REQUIRE(st.mixtures == mixtures_ && st.channels == channels_ &&
                      st.dim == dim_,
                  "statistics shape (K=", st.mixtures, ", C=", st.channels,
                  ", d=", st.dim, ") does not match subspace (K=", mixtures_,
                  ", C=", channels_, ", d=", dim_, ")");
  }

  /// Precision matrix L = I + sum_b N_b T_b' Sigma_b^-1 T_b.
  MatrixXd Precision(const VectorXd& zeroth) const {
    const Eigen::Index R = Rank();
    MatrixXd L = MatrixXd::Identity(R, R);
    for (Eigen::Index b = 0; b < NumBlocks(); ++b)
      if (zeroth(b) != 0.0) L.noalias() += zeroth(b) * block_gram_[b];
    return L;
  }

  /// T' Sigma^-1 F.
  VectorXd Linear(const VectorXd& first) const { return tt_sinv_ * first; }

  std::uint64_t Fingerprint() const {
    Fnv1a h;
    h.UpdateValue<std::uint8_t>(static_cast<std::uint8_t>(mode_));
    h.Update(T_);
    h.Update(sigma_);
    h.UpdateValue(ubm_fingerprint_);
    return h.Digest();
  }

  Provenance provenance;

 private:
  void Precompute() {
    const VectorXd inv = sigma_.cwiseInverse();
    tt_sinv_ = T_.transpose() * inv.asDiagonal();
    block_gram_.resize(NumBlocks());
    for (Eigen::Index b = 0; b < NumBlocks(); ++b) {
      const auto Tb = T_.middleRows(b * dim_, dim_);
      block_gram_[b] = Tb.transpose() * inv.segment(b * dim_, dim_).asDiagonal() * Tb;
    }
  }

  StatsMode mode_ = StatsMode::kBaseline;
  Eigen::Index mixtures_ = 0, channels_ = 1, dim_ = 0;
  MatrixXd T_;
  VectorXd sigma_;
  std::uint64_t ubm_fingerprint_ = 0;
  MatrixXd tt_sinv_;
  std::vector<MatrixXd> block_gram_;
};

/// w = (I + T' Sigma^-1 N T)^-1 T' Sigma^-1 F, solved in R x R.
inline VectorXd ExtractIvector(const TotalVariability& tv,
                               const SuffStats& st) {
  tv.CheckCompatible(st);
  Eigen::LLT<MatrixXd> llt(tv.Precision(st.zeroth));
  if (llt.info() != Eigen::Success)
    throw NumericError("i-vector precision matrix is not positive definite");
  return llt.solve(tv.Linear(st.first));
}

inline VectorXd ReplicatedSigma(const Ubm& ubm, Eigen::Index channels) {
  const auto& v = ubm.gmm.Variances();
  const Eigen::Index K = v.rows(), d = v.cols();
  VectorXd sigma(K * channels * d);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index c = 0; c < channels; ++c)
      sigma.segment((k * channels + c) * d, d) = v.row(k).transpose();
  return sigma;
}

struct TMatrixOptions {
  Eigen::Index rank = 160;
  int iterations = 10;
  double init_scale = 0.01;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct TMatrixReport {
  // Mean per-segment log-likelihood of the statistics, up to a constant,
  // under the subspace before each M-step plus one after the last.
  std::vector<double> objective;
  int regularized_blocks = 0;
};

namespace detail {

struct TAccumulator {
  std::vector<MatrixXd> occ_ww;  // per block: sum_s N_sb E[w w']
  MatrixXd f_w;                  // D x R: sum_s F_s E[w]'
  double objective = 0.0;
};

inline TAccumulator TEStep(const TotalVariability& tv,
                           const std::vector<SuffStats>& stats,
                           bool accumulate, int workers) {
  const Eigen::Index R = tv.Rank(), B = tv.NumBlocks();
  // Fixed shard count keeps the reduction order independent of `workers`.
  constexpr std::size_t kShards = 16;
  std::vector<TAccumulator> parts(kShards);
  ParallelFor(kShards, workers, [&](std::size_t shard) {
    auto& acc = parts[shard];
    if (accumulate) {
      acc.occ_ww.assign(B, MatrixXd::Zero(R, R));
      acc.f_w = MatrixXd::Zero(tv.T().rows(), R);
    }
    for (std::size_t s = shard; s < stats.size(); s += kShards) {
      const auto& st = stats[s];
      Eigen::LLT<MatrixXd> llt(tv.Precision(st.zeroth));
      if (llt.info() != Eigen::Success)
        throw NumericError("T-matrix E-step: precision not positive definite");
      const VectorXd lin = tv.Linear(st.first);
      const VectorXd w = llt.solve(lin);
      const double logdet =
          2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      acc.objective += 0.5 * lin.dot(w) - 0.5 * logdet;
      if (!accumulate) continue;
      MatrixXd ww = llt.solve(MatrixXd::Identity(R, R));
      ww.noalias() += w * w.transpose();
      for (Eigen::Index b = 0; b < B; ++b)
        if (st.zeroth(b) != 0.0) acc.occ_ww[b].noalias() += st.zeroth(b) * ww;
      acc.f_w.noalias() += st.first * w.transpose();
    }
  });
  TAccumulator total = std::move(parts[0]);
  for (std::size_t i = 1; i < kShards; ++i) {
    total.objective += parts[i].objective;
    if (!accumulate) continue;
    for (Eigen::Index b = 0; b < B; ++b) total.occ_ww[b] += parts[i].occ_ww[b];
    total.f_w += parts[i].f_w;
  }
  return total;
}

}  // namespace detail

/// EM training of the total variability matrix from per-segment statistics.
/// M-step per block b: T_b = (sum_s F_sb E[w_s]') (sum_s N_sb E[w_s w_s'])^-1.
inline TotalVariability TrainTMatrix(const Ubm& ubm,
                                     const std::vector<SuffStats>& stats,
                                     const TMatrixOptions& opts,
                                     TMatrixReport* report = nullptr) {
  EEGID_REQUIRE(!stats.empty(), "no statistics to train the subspace on");
  EEGID_REQUIRE(opts.rank >= 1, "subspace rank must be >= 1");
  EEGID_REQUIRE(opts.iterations >= 1, "need at least one EM iteration");
  const auto& first = stats.front();
  EEGID_REQUIRE(first.mixtures == ubm.gmm.NumComponents() &&
                    first.dim == ubm.gmm.Dim(),
                "statistics were not computed with this UBM");
  for (const auto& st : stats)
    EEGID_REQUIRE(st.mode == first.mode && st.channels == first.channels &&
                      st.mixtures == first.mixtures && st.dim == first.dim,
                  "statistics of segment ", st.labels.Key(),
                  " are inconsistent with the rest");
  if (static_cast<Eigen::Index>(stats.size()) < opts.rank)
    std::clog << "warning: training a rank-" << opts.rank << " subspace on "
              << stats.size() << " segments\n";

  TMatrixReport local;
  TMatrixReport& rep = report ? *report : local;
  rep = {};

  const Eigen::Index C = first.channels, d = first.dim, R = opts.rank;
  VectorXd sigma = ReplicatedSigma(ubm, C);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss;
  MatrixXd T(sigma.size(), R);
  for (Eigen::Index i = 0; i < T.rows(); ++i)
    for (Eigen::Index r = 0; r < R; ++r)
      T(i, r) = opts.init_scale * std::sqrt(sigma(i)) * gauss(rng);

  const double n = static_cast<double>(stats.size());
  TotalVariability tv(first.mode, first.mixtures, C, d, T, sigma,
                      ubm.Fingerprint());
  for (int it = 0; it < opts.iterations; ++it) {
    auto acc = detail::TEStep(tv, stats, true, opts.workers);
    rep.objective.push_back(acc.objective / n);
    for (Eigen::Index b = 0; b < tv.NumBlocks(); ++b) {
      MatrixXd& A = acc.occ_ww[b];
      Eigen::LLT<MatrixXd> llt(A);
      if (llt.info() != Eigen::Success) {
        A.diagonal().array() += 1e-8;
        llt.compute(A);
        ++rep.regularized_blocks;
        std::clog << "warning: T-matrix M-step block " << b
                  << " singular; regularized with 1e-8 I\n";
      }
      T.middleRows(b * d, d) =
          llt.solve(acc.f_w.middleRows(b * d, d).transpose()).transpose();
    }
    if (!T.allFinite())
      throw NumericError(StrCat("T-matrix diverged at iteration ", it));
    tv = TotalVariability(first.mode, first.mixtures, C, d, T, sigma,
                          ubm.Fingerprint());
  }
  rep.objective.push_back(
      detail::TEStep(tv, stats, false, opts.workers).objective / n);
  tv.provenance.seed = opts.seed;
  return tv;
}

/// One channel whose frame vectors are the concatenation of every channel's
/// frame vector at the same time index.
inline FeatureSegment VariantFeatureConcat(const FeatureSegment& f) {
  EEGID_REQUIRE(f.channels >= 1, "segment has no channels");
  FeatureSegment out = f;
  out.channels = 1;
  out.data.resize(f.frames, f.channels * f.Dim());
  for (Eigen::Index c = 0; c < f.channels; ++c)
    out.data.middleCols(c * f.Dim(), f.Dim()) = f.Channel(c);
  return out;
}

/// Unweighted mean over channels (rows) of per-channel scores.
inline VectorXd VariantScoreFusion(const Eigen::Ref<const MatrixXd>& scores) {
  EEGID_REQUIRE(scores.rows() >= 1, "no channel scores to fuse");
  EEGID_REQUIRE(scores.allFinite(), "channel scores must be finite");
  return scores.colwise().mean().transpose();
}

// ---------------------------------------------------------------------------
// Model file ("TVMX1").

inline void WriteTotalVariability(std::ostream& os, const TotalVariability& tv) {
  BinaryWriter w(os);
  w.Magic("TVMX1");
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(tv.Mode()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(tv.Mixtures()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(tv.Channels()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(tv.Dim()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(tv.Rank()));
  w.PutMatrix(tv.T(), true);
  w.PutMatrix(tv.Sigma());
  w.Put<std::uint64_t>(tv.UbmFingerprint());
  w.PutProvenance(tv.provenance);
}

inline TotalVariability ReadTotalVariability(std::istream& is,
                                             const std::string& what) {
  BinaryReader r(is, what);
  r.ExpectMagic("TVMX1");
  const auto mode = r.Get<std::uint8_t>();
  const auto K = r.Get<std::uint32_t>();
  const auto C = r.Get<std::uint32_t>();
  const auto d = r.Get<std::uint32_t>();
  const auto R = r.Get<std::uint32_t>();
  if (mode > 1 || K == 0 || C == 0 || d == 0 || R == 0 ||
      static_cast<double>(K) * C * d * R > 1e9)
    throw ArtifactError(StrCat(what, ": implausible subspace header"));
  const Eigen::Index D = static_cast<Eigen::Index>(K) * C * d;
  MatrixXd T = r.GetMatrix(D, R, true);
  VectorXd sigma = r.GetMatrix(D, 1);
  const auto fp = r.Get<std::uint64_t>();
  Provenance prov = r.GetProvenance();
  r.ExpectEnd();
  try {
    TotalVariability tv(static_cast<StatsMode>(mode), K, C, d, std::move(T),
                        std::move(sigma), fp);
    tv.provenance = prov;
    return tv;
  } catch (const ValidationError& e) {
    throw ArtifactError(StrCat(what, ": ", e.what()));
  }
}

inline void SaveTotalVariability(const std::string& path,
                                 const TotalVariability& tv) {
  auto os = OpenOut(path);
  WriteTotalVariability(os, tv);
}

inline TotalVariability LoadTotalVariability(const std::string& path) {
  auto is = OpenIn(path);
  return ReadTotalVariability(is, path);
}

}  // namespace eegid
