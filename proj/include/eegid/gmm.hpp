// eegid/gmm.hpp

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

#include <memory>
#include <numbers>
#include <random>

#include "eegid/features.hpp"

namespace eegid {

/// Diagonal-covariance Gaussian mixture.  Means and variances are K x d.
class DiagGmm {
 public:
  DiagGmm() = default;
  DiagGmm(VectorXd weights, MatrixXd means, MatrixXd vars)
      : weights_(std::move(weights)),
        means_(std::move(means)),
        vars_(std::move(vars)) {
    EEGID_REQUIRE(weights_.size() == means_.rows() &&
                      means_.rows() == vars_.rows() &&
                      means_.cols() == vars_.cols() && weights_.size() >= 1,
                  "inconsistent GMM shapes");
    EEGID_REQUIRE((vars_.array() > 0).all(), "GMM variances must be positive");
    EEGID_REQUIRE((weights_.array() >= 0).all(),
                  "GMM weights must be non-negative");
    Precompute();
  }

  Eigen::Index NumComponents() const { return weights_.size(); }
  Eigen::Index Dim() const { return means_.cols(); }
  const VectorXd& Weights() const { return weights_; }
  const MatrixXd& Means() const { return means_; }
  const MatrixXd& Variances() const { return vars_; }

  /// Per-component joint log-likelihoods log(w_k N(x; m_k, v_k)); frames are
  /// rows of `x`, result is n x K.
  MatrixXd ComponentLogLikes(const Eigen::Ref<const MatrixXd>& x) const {
    EEGID_REQUIRE(x.cols() == Dim(), "frame dimension ", x.cols(),
                  " does not match model dimension ", Dim());
    MatrixXd ll = -0.5 * (x.array().square().matrix() * inv_vars_.transpose());
    ll.noalias() += x * means_inv_vars_.transpose();
    ll.rowwise() += gconst_.transpose();
    return ll;
  }

  /// Log-likelihood of each frame (rows of `x`).
  VectorXd LogLikes(const Eigen::Ref<const MatrixXd>& x) const {
    const MatrixXd ll = ComponentLogLikes(x);
    VectorXd out(ll.rows());
    for (Eigen::Index i = 0; i < ll.rows(); ++i)
      out(i) = LogSumExp(ll.row(i).transpose());
    return out;
  }

  /// Posteriors P(k | x) for each frame; rows sum to one.
  MatrixXd Posteriors(const Eigen::Ref<const MatrixXd>& x,
                      VectorXd* frame_loglikes = nullptr) const {
    MatrixXd ll = ComponentLogLikes(x);
    if (frame_loglikes) frame_loglikes->resize(ll.rows());
    for (Eigen::Index i = 0; i < ll.rows(); ++i) {
      const double lse = LogSumExp(ll.row(i).transpose());
      ll.row(i) = (ll.row(i).array() - lse).exp();
      ll.row(i) /= ll.row(i).sum();
      if (frame_loglikes) (*frame_loglikes)(i) = lse;
    }
    return ll;
  }

  VectorXd FramePosteriors(const Eigen::Ref<const VectorXd>& frame) const {
    const MatrixXd x = frame.transpose();
    return Posteriors(x).row(0).transpose();
  }

  DiagGmm WithMeans(MatrixXd means) const {
    return DiagGmm(weights_, std::move(means), vars_);
  }

  std::uint64_t Fingerprint() const {
    Fnv1a h;
    h.UpdateValue<std::uint64_t>(NumComponents());
    h.UpdateValue<std::uint64_t>(Dim());
    h.Update(weights_);
    h.Update(means_);
    h.Update(vars_);
    return h.Digest();
  }

  friend bool operator==(const DiagGmm& a, const DiagGmm& b) {
    return a.weights_ == b.weights_ && a.means_ == b.means_ &&
           a.vars_ == b.vars_;
  }

 private:
  void Precompute() {
    inv_vars_ = vars_.cwiseInverse();
    means_inv_vars_ = means_.cwiseProduct(inv_vars_);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    gconst_.resize(NumComponents());
    for (Eigen::Index k = 0; k < NumComponents(); ++k) {
      gconst_(k) = std::log(weights_(k)) -
                   0.5 * (static_cast<double>(Dim()) * log2pi +
                          vars_.row(k).array().log().sum() +
                          means_.row(k).dot(means_inv_vars_.row(k)));
    }
  }

  VectorXd weights_;
  MatrixXd means_, vars_;
  MatrixXd inv_vars_, means_inv_vars_;
  VectorXd gconst_;
};

/// The universal background model: a DiagGmm plus how it was trained.
struct Ubm {
  DiagGmm gmm;
  VectorXd variance_floor;
  double floor_factor = 1e-4;
  std::uint32_t iterations = 0;
  Provenance provenance;

  std::uint64_t Fingerprint() const { return gmm.Fingerprint(); }
};

struct UbmOptions {
  int num_components = 64;
  int max_iters = 50;
  int kmeans_iters = 10;
  double tol = 1e-4;  // per-frame log-likelihood improvement
  double floor_factor = 1e-4;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct UbmTrainReport {
  std::vector<double> loglike_per_frame;  // before each M-step
  int reseeded = 0;
  bool converged = false;
};

/// Mergeable EM accumulator.
struct GmmAccumulator {
  VectorXd occupancy;  // K
  MatrixXd first;      // K x d
  MatrixXd second;     // K x d
  double loglike = 0.0;

  GmmAccumulator(Eigen::Index K, Eigen::Index d)
      : occupancy(VectorXd::Zero(K)),
        first(MatrixXd::Zero(K, d)),
        second(MatrixXd::Zero(K, d)) {}

  void Accumulate(const DiagGmm& gmm, const Eigen::Ref<const MatrixXd>& x) {
    VectorXd frame_ll;
    const MatrixXd post = gmm.Posteriors(x, &frame_ll);
    occupancy += post.colwise().sum().transpose();
    first.noalias() += post.transpose() * x;
    second.noalias() += post.transpose() * x.array().square().matrix();
    loglike += frame_ll.sum();
  }

  GmmAccumulator& operator+=(const GmmAccumulator& o) {
    occupancy += o.occupancy;
    first += o.first;
    second += o.second;
    loglike += o.loglike;
    return *this;
  }
};

namespace detail {

inline GmmAccumulator AccumulateSharded(const DiagGmm& gmm,
                                        const Eigen::Ref<const MatrixXd>& x,
                                        int workers) {
  constexpr Eigen::Index kShard = 4096;
  const auto n_shards =
      static_cast<std::size_t>((x.rows() + kShard - 1) / kShard);
  std::vector<GmmAccumulator> parts(
      n_shards, GmmAccumulator(gmm.NumComponents(), gmm.Dim()));
  ParallelFor(n_shards, workers, [&](std::size_t s) {
    const Eigen::Index begin = static_cast<Eigen::Index>(s) * kShard;
    const Eigen::Index len = std::min(kShard, x.rows() - begin);
    parts[s].Accumulate(gmm, x.middleRows(begin, len));
  });
  GmmAccumulator total(gmm.NumComponents(), gmm.Dim());
  for (const auto& p : parts) total += p;
  return total;
}

// k-means++ seeding followed by Lloyd iterations.  Returns centroids and
// hard assignments.
inline MatrixXd KMeansPlusPlus(const Eigen::Ref<const MatrixXd>& x, int K,
                               int iters, std::mt19937_64& rng,
                               std::vector<int>* assign) {
  const Eigen::Index n = x.rows();
  MatrixXd centers(K, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = x.row(pick(rng));
  VectorXd dist2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = dist2.sum();
    Eigen::Index chosen = pick(rng);
    if (total > 0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= dist2(i);
        if (u <= 0) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(k) = x.row(chosen);
    dist2 = dist2.cwiseMin(
        (x.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }
  assign->assign(n, 0);
  for (int it = 0; it <= iters; ++it) {
    const VectorXd cnorm = centers.rowwise().squaredNorm();
    const MatrixXd cross = x * centers.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (cnorm.transpose() - 2.0 * cross.row(i)).minCoeff(&best);
      (*assign)[i] = static_cast<int>(best);
    }
    if (it == iters) break;
    MatrixXd sums = MatrixXd::Zero(K, x.cols());
    VectorXd counts = VectorXd::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row((*assign)[i]) += x.row(i);
      counts((*assign)[i]) += 1.0;
    }
    for (int k = 0; k < K; ++k)
      if (counts(k) > 0) centers.row(k) = sums.row(k) / counts(k);
  }
  return centers;
}

}  // namespace detail

/// Trains a UBM on frames (rows of `x`) by k-means++ initialization and EM.
/// Components whose occupancy collapses are re-seeded from the component
/// with the largest total variance; the count lands in the report.
inline Ubm TrainUbm(const Eigen::Ref<const MatrixXd>& x,
                    const UbmOptions& opts, UbmTrainReport* report = nullptr) {
  const int K = opts.num_components;
  EEGID_REQUIRE(K >= 1, "UBM needs at least one component");
  EEGID_REQUIRE(x.rows() >= 10 * static_cast<Eigen::Index>(K), "UBM with ", K,
                " components needs at least ", 10 * K, " frames, got ",
                x.rows());
  EEGID_REQUIRE(x.allFinite(), "UBM training frames must be finite");
  EEGID_REQUIRE(opts.max_iters >= 0 && opts.floor_factor > 0,
                "invalid UBM options");
  const Eigen::Index d = x.cols();
  const double n = static_cast<double>(x.rows());

  const Eigen::RowVectorXd gmean = x.colwise().mean();
  const Eigen::RowVectorXd gvar =
      ((x.rowwise() - gmean).array().square().colwise().sum() / n).matrix();
  Eigen::RowVectorXd floor = (opts.floor_factor * gvar).cwiseMax(1e-300);

  UbmTrainReport local;
  UbmTrainReport& rep = report ? *report : local;
  rep = {};

  std::mt19937_64 rng(opts.seed);
  VectorXd weights(K);
  MatrixXd means(K, d), vars(K, d);
  if (K == 1) {
    weights(0) = 1.0;
    means.row(0) = gmean;
    vars.row(0) = gvar.cwiseMax(floor);
  } else {
    std::vector<int> assign;
    means = detail::KMeansPlusPlus(x, K, opts.kmeans_iters, rng, &assign);
    VectorXd counts = VectorXd::Zero(K);
    MatrixXd sq = MatrixXd::Zero(K, d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      counts(assign[i]) += 1.0;
      sq.row(assign[i]) += (x.row(i) - means.row(assign[i])).array().square().matrix();
    }
    for (int k = 0; k < K; ++k) {
      weights(k) = std::max(counts(k), 1.0);
      vars.row(k) = counts(k) >= 2 ? Eigen::RowVectorXd(sq.row(k) / counts(k))
                                   : Eigen::RowVectorXd(gvar);
      vars.row(k) = vars.row(k).cwiseMax(floor);
    }
    weights /= weights.sum();
  }

  DiagGmm gmm(weights, means, vars);
  std::uint32_t iters = 0;
  for (int it = 0; it < opts.max_iters; ++it) {
    const GmmAccumulator acc = detail::AccumulateSharded(gmm, x, opts.workers);
    rep.loglike_per_frame.push_back(acc.loglike / n);
    const std::size_t h = rep.loglike_per_frame.size();
    if (h >= 2 &&
        rep.loglike_per_frame[h - 1] - rep.loglike_per_frame[h - 2] < opts.tol) {
      rep.converged = true;
      break;
    }
    ++iters;
    // M-step.  Variances are floored; the floored value still maximizes the
    // auxiliary function under the floor constraint.
    std::vector<int> empty;
    for (int k = 0; k < K; ++k) {
      const double occ = acc.occupancy(k);
      if (occ < 1e-3) {
        empty.push_back(k);
        continue;
      }
      weights(k) = occ / n;
      means.row(k) = acc.first.row(k) / occ;
      vars.row(k) = (acc.second.row(k) / occ -
                     means.row(k).array().square().matrix())
                        .cwiseMax(floor);
    }
    for (int k : empty) {
      Eigen::Index donor;
      VectorXd score = vars.rowwise().sum();
      for (int e : empty) score(e) = -1.0;
      score.maxCoeff(&donor);
      const Eigen::RowVectorXd offset = 0.2 * vars.row(donor).cwiseSqrt();
      means.row(k) = means.row(donor) + offset;
      means.row(donor) -= offset;
      vars.row(k) = vars.row(donor);
      weights(donor) *= 0.5;
      weights(k) = weights(donor);
      ++rep.reseeded;
    }
    weights /= weights.sum();
    gmm = DiagGmm(weights, means, vars);
  }
  if (!rep.converged && opts.max_iters > 0) {
    const GmmAccumulator acc = detail::AccumulateSharded(gmm, x, opts.workers);
    rep.loglike_per_frame.push_back(acc.loglike / n);
  }

  Ubm ubm;
  ubm.gmm = std::move(gmm);
  ubm.variance_floor = floor.transpose();
  ubm.floor_factor = opts.floor_factor;
  ubm.iterations = iters;
  ubm.provenance.seed = opts.seed;
  return ubm;
}

/// Stacks the frame vectors of every channel of every segment.
inline MatrixXd PoolFrames(const std::vector<const FeatureSegment*>& feats) {
  Eigen::Index rows = 0;
  for (const auto* f : feats) rows += f->data.rows();
  EEGID_REQUIRE(!feats.empty(), "no features to pool");
  MatrixXd x(rows, feats.front()->Dim());
  Eigen::Index r = 0;
  for (const auto* f : feats) {
    EEGID_REQUIRE(f->Dim() == x.cols(), "feature dimension mismatch: ",
                  f->Dim(), " vs ", x.cols());
    x.middleRows(r, f->data.rows()) = f->data;
    r += f->data.rows();
  }
  return x;
}

/// Means-only MAP adaptation of a UBM toward one subject's frames.
struct AdaptedModel {
  std::string subject_id;
  std::uint64_t ubm_fingerprint = 0;
  DiagGmm gmm;  // UBM weights and variances, adapted means
};

inline AdaptedModel MapAdapt(const Ubm& ubm,
                             const Eigen::Ref<const MatrixXd>& frames,
                             double relevance, std::string subject_id) {
  EEGID_REQUIRE(relevance >= 0 && std::isfinite(relevance),
                "relevance factor must be >= 0, got ", relevance);
  const DiagGmm& g = ubm.gmm;
  GmmAccumulator acc(g.NumComponents(), g.Dim());
  acc.Accumulate(g, frames);
  MatrixXd means = g.Means();
  for (Eigen::Index k = 0; k < g.NumComponents(); ++k) {
    const double occ = acc.occupancy(k);
    if (occ + relevance > 0)
      means.row(k) = (acc.first.row(k) + relevance * g.Means().row(k)) /
                     (occ + relevance);
  }
  return {std::move(subject_id), ubm.Fingerprint(), g.WithMeans(means)};
}

/// Mean over all C*N frames of log p(x | adapted) - log p(x | UBM).
inline double LlrScore(const Ubm& ubm, const AdaptedModel& model,
                       const FeatureSegment& feat) {
  EEGID_REQUIRE(feat.Dim() == ubm.gmm.Dim(), "feature dimension ", feat.Dim(),
                " does not match UBM dimension ", ubm.gmm.Dim());
  EEGID_REQUIRE(model.ubm_fingerprint == ubm.Fingerprint(),
                "adapted model for '", model.subject_id,
                "' was not derived from this UBM");
  return (model.gmm.LogLikes(feat.data) - ubm.gmm.LogLikes(feat.data)).mean();
}

// ---------------------------------------------------------------------------
// Model files.

inline void WriteUbm(std::ostream& os, const Ubm& ubm) {
  BinaryWriter w(os);
  const auto& g = ubm.gmm;
  w.Magic("GMMM1");
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(g.NumComponents()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(g.Dim()));
  w.PutMatrix(g.Weights());
  w.PutMatrix(g.Means(), true);
  w.PutMatrix(g.Variances(), true);
  w.Put<std::uint64_t>(ubm.provenance.seed);
  w.Put<std::uint32_t>(ubm.iterations);
  w.Put<double>(ubm.floor_factor);
  w.PutMatrix(ubm.variance_floor);
  w.PutProvenance(ubm.provenance);
}

inline Ubm ReadUbm(std::istream& is, const std::string& what) {
  BinaryReader r(is, what);
  r.ExpectMagic("GMMM1");
  const auto K = r.Get<std::uint32_t>();
  const auto d = r.Get<std::uint32_t>();
  if (K == 0 || d == 0 || K > 1u << 16 || d > 1u << 20)
    throw ArtifactError(StrCat(what, ": implausible UBM shape"));
  VectorXd w = r.GetMatrix(K, 1);
  MatrixXd m = r.GetMatrix(K, d, true);
  MatrixXd v = r.GetMatrix(K, d, true);
  Ubm ubm;
  r.Get<std::uint64_t>();  // seed, repeated in the provenance block
  ubm.iterations = r.Get<std::uint32_t>();
  ubm.floor_factor = r.Get<double>();
  ubm.variance_floor = r.GetMatrix(d, 1);
  ubm.provenance = r.GetProvenance();
  r.ExpectEnd();
  try {
    ubm.gmm = DiagGmm(std::move(w), std::move(m), std::move(v));
  } catch (const ValidationError& e) {
    throw ArtifactError(StrCat(what, ": ", e.what()));
  }
  return ubm;
}

inline void SaveUbm(const std::string& path, const Ubm& ubm) {
  auto os = OpenOut(path);
  WriteUbm(os, ubm);
}

inline Ubm LoadUbm(const std::string& path) {
  auto is = OpenIn(path);
  return ReadUbm(is, path);
}

inline void WriteAdapted(std::ostream& os, const AdaptedModel& m) {
  BinaryWriter w(os);
  w.Magic("GMMA1");
  w.PutString(m.subject_id);
  w.Put<std::uint64_t>(m.ubm_fingerprint);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(m.gmm.NumComponents()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(m.gmm.Dim()));
  w.PutMatrix(m.gmm.Means(), true);
}

/// Adapted models store only their means; weights and variances come from
/// the UBM they were adapted from.
inline AdaptedModel ReadAdapted(std::istream& is, const std::string& what,
                                const Ubm& ubm) {
  BinaryReader r(is, what);
  r.ExpectMagic("GMMA1");
  AdaptedModel m;
  m.subject_id = r.GetString();
  m.ubm_fingerprint = r.Get<std::uint64_t>();
  const auto K = r.Get<std::uint32_t>();
  const auto d = r.Get<std::uint32_t>();
  if (m.ubm_fingerprint != ubm.Fingerprint() || K != ubm.gmm.NumComponents() ||
      d != ubm.gmm.Dim())
    throw ArtifactError(StrCat(what, ": adapted model does not belong to UBM ",
                               HexDigest(ubm.Fingerprint())));
  m.gmm = ubm.gmm.WithMeans(r.GetMatrix(K, d, true));
  return m;
}

}  // namespace eegid
