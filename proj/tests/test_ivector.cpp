// tests/test_ivector.cpp

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

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace eegid {
namespace {

TotalVariability RandomTv(std::mt19937_64& g, StatsMode mode, Eigen::Index K,
                          Eigen::Index C, Eigen::Index d, Eigen::Index R) {
  const Eigen::Index blocks = K * (mode == StatsMode::kModified ? C : 1);
  VectorXd sigma(blocks * d);
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    sigma(i) = testing::Uniform(g, 0.2, 3.0);
  return TotalVariability(mode, K, mode == StatsMode::kModified ? C : 1, d,
                          testing::RandomMatrix(g, blocks * d, R), sigma, 0);
}

// w = (I + T' Sigma^-1 N T)^-1 T' Sigma^-1 F with every matrix written out
// densely over the full supervector.
VectorXd DenseIvector(const TotalVariability& tv, const SuffStats& st) {
  const Eigen::Index D = tv.T().rows(), R = tv.Rank(), d = tv.Dim();
  MatrixXd sigma_inv = MatrixXd::Zero(D, D);
  MatrixXd N = MatrixXd::Zero(D, D);
  for (Eigen::Index i = 0; i < D; ++i) {
    sigma_inv(i, i) = 1.0 / tv.Sigma()(i);
    N(i, i) = st.zeroth(i / d);
  }
  const MatrixXd& T = tv.T();
  const MatrixXd L = MatrixXd::Identity(R, R) + T.transpose() * sigma_inv * N * T;
  return L.inverse() * (T.transpose() * sigma_inv * st.first);
}

// K=2, d=2, C=2, R=3, 100 random instances in both statistics modes.
TEST(IvectorExtraction, MatchesDenseConstruction) {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 100; ++trial) {
    for (StatsMode mode : {StatsMode::kBaseline, StatsMode::kModified}) {
      const TotalVariability tv = RandomTv(g, mode, 2, 2, 2, 3);
      const SuffStats st = testing::RandomStats(g, mode, 2, 2, 2);
      const VectorXd w = ExtractIvector(tv, st);
      const VectorXd want = DenseIvector(tv, st);
      EXPECT_LT((w - want).norm() / want.norm(), 1e-10)
          << "trial " << trial << " mode " << ModeName(mode);
    }
  }
}

TEST(IvectorExtraction, ZeroStatisticsGiveZeroVector) {
  std::mt19937_64 g(2);
  const TotalVariability tv = RandomTv(g, StatsMode::kModified, 3, 2, 2, 4);
  SuffStats st = testing::RandomStats(g, StatsMode::kModified, 3, 2, 2);
  st.zeroth.setZero();
  st.first.setZero();
  EXPECT_EQ(ExtractIvector(tv, st), VectorXd::Zero(4));
}

TEST(IvectorExtraction, RejectsMismatchedStatistics) {
  std::mt19937_64 g(3);
  const TotalVariability tv = RandomTv(g, StatsMode::kModified, 2, 2, 2, 3);
  EXPECT_THROW(
      ExtractIvector(tv, testing::RandomStats(g, StatsMode::kBaseline, 2, 2, 2)),
      ValidationError);
  EXPECT_THROW(
      ExtractIvector(tv, testing::RandomStats(g, StatsMode::kModified, 2, 3, 2)),
      ValidationError);
}

// Statistics against a per-frame loop.
TEST(Statistics, MatchNaiveAccumulation) {
  std::mt19937_64 g(4);
  const Ubm ubm = testing::RandomUbm(g, 3, 2);
  const FeatureSegment f = testing::RandomFeatures(g, 2, 7, 2);
  for (StatsMode mode : {StatsMode::kBaseline, StatsMode::kModified}) {
    const SuffStats st = AccumulateStats(ubm, f, mode);
    const Eigen::Index C = mode == StatsMode::kModified ? 2 : 1;
    VectorXd zeroth = VectorXd::Zero(3 * C);
    VectorXd first = VectorXd::Zero(3 * C * 2);
    for (Eigen::Index c = 0; c < 2; ++c)
      for (Eigen::Index n = 0; n < 7; ++n) {
        const VectorXd x = f.Channel(c).row(n).transpose();
        const VectorXd p = ubm.gmm.FramePosteriors(x);
        for (Eigen::Index k = 0; k < 3; ++k) {
          const Eigen::Index b = mode == StatsMode::kModified ? k * 2 + c : k;
          zeroth(b) += p(k);
          first.segment(b * 2, 2) +=
              p(k) * (x - ubm.gmm.Means().row(k).transpose());
        }
      }
    EXPECT_LT((st.zeroth - zeroth).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((st.first - first).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// Property: sum of zeroth-order statistics is N*C (baseline) and N per
// channel (modified), and both modes agree after pooling over channels.
TEST(StatisticsProperty, OccupancyConservation) {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index K = testing::UniformInt(g, 1, 5);
    const Eigen::Index C = testing::UniformInt(g, 1, 4);
    const Eigen::Index N = testing::UniformInt(g, 2, 12);
    const Eigen::Index d = testing::UniformInt(g, 1, 4);
    const Ubm ubm = testing::RandomUbm(g, K, d);
    const FeatureSegment f = testing::RandomFeatures(g, C, N, d);
    const SuffStats base = AccumulateStats(ubm, f, StatsMode::kBaseline);
    const SuffStats mod = AccumulateStats(ubm, f, StatsMode::kModified);
    EXPECT_TRUE((base.zeroth.array() >= 0).all());
    EXPECT_NEAR(base.zeroth.sum(), static_cast<double>(N * C), 1e-9);
    for (Eigen::Index c = 0; c < C; ++c) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < K; ++k) s += mod.zeroth(k * C + c);
      EXPECT_NEAR(s, static_cast<double>(N), 1e-9);
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      EXPECT_NEAR(mod.zeroth.segment(k * C, C).sum(), base.zeroth(k), 1e-9);
      VectorXd pooled = VectorXd::Zero(d);
      for (Eigen::Index c = 0; c < C; ++c)
        pooled += mod.first.segment((k * C + c) * d, d);
      EXPECT_LT((pooled - base.first.segment(k * d, d)).cwiseAbs().maxCoeff(),
                1e-9);
    }
  }
}

// With one channel the baseline and modified pipelines coincide.
TEST(SingleChannel, BaselineAndModifiedCollapse) {
  std::mt19937_64 g(6);
  const MatrixXd x = testing::SampleGmm(g, testing::RandomGmm(g, 3, 2), 900);
  UbmOptions o;
  o.num_components = 3;
  o.seed = 1;
  const Ubm ubm = TrainUbm(x, o);
  std::vector<FeatureSegment> segs;
  for (int s = 0; s < 12; ++s)
    segs.push_back(testing::RandomFeatures(g, 1, 15, 2,
                                           {StrCat("S", s % 3), "ses1", "T1",
                                            static_cast<std::uint32_t>(s)}));
  std::vector<SuffStats> base, mod;
  for (const auto& f : segs) {
    base.push_back(AccumulateStats(ubm, f, StatsMode::kBaseline));
    mod.push_back(AccumulateStats(ubm, f, StatsMode::kModified));
    EXPECT_EQ(base.back().zeroth, mod.back().zeroth);
    EXPECT_EQ(base.back().first, mod.back().first);
  }
  TMatrixOptions to;
  to.rank = 3;
  to.iterations = 4;
  to.seed = 5;
  const TotalVariability tb = TrainTMatrix(ubm, base, to);
  const TotalVariability tm = TrainTMatrix(ubm, mod, to);
  EXPECT_LT((tb.T() - tm.T()).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t i = 0; i < segs.size(); ++i)
    EXPECT_LT((ExtractIvector(tb, base[i]) - ExtractIvector(tm, mod[i]))
                  .cwiseAbs().maxCoeff(),
              1e-12);
}

std::vector<SuffStats> StatsForTraining(std::mt19937_64& g, const Ubm& ubm,
                                        StatsMode mode, int n) {
  std::vector<SuffStats> out;
  for (int s = 0; s < n; ++s) {
    FeatureSegment f = testing::RandomFeatures(g, 2, 20, ubm.gmm.Dim());
    f.data.array() += 0.3 * static_cast<double>(s % 4);
    out.push_back(AccumulateStats(ubm, f, mode));
  }
  return out;
}

// Property: the EM objective never decreases.
TEST(TMatrixTraining, ObjectiveIsMonotone) {
  std::mt19937_64 g(7);
  for (StatsMode mode : {StatsMode::kBaseline, StatsMode::kModified}) {
    const Ubm ubm = testing::RandomUbm(g, 3, 2);
    const auto stats = StatsForTraining(g, ubm, mode, 40);
    TMatrixOptions o;
    o.rank = 4;
    o.iterations = 8;
    o.seed = 2;
    TMatrixReport rep;
    TrainTMatrix(ubm, stats, o, &rep);
    ASSERT_EQ(rep.objective.size(), 9u);
    for (std::size_t i = 1; i < rep.objective.size(); ++i)
      EXPECT_GE(rep.objective[i] - rep.objective[i - 1],
                -1e-9 * std::abs(rep.objective[i]))
          << ModeName(mode) << " iteration " << i;
  }
}

TEST(TMatrixTraining, IndependentOfWorkerCount) {
  std::mt19937_64 g(8);
  const Ubm ubm = testing::RandomUbm(g, 2, 2);
  const auto stats = StatsForTraining(g, ubm, StatsMode::kModified, 37);
  TMatrixOptions o;
  o.rank = 3;
  o.iterations = 3;
  o.seed = 11;
  o.workers = 1;
  const TotalVariability a = TrainTMatrix(ubm, stats, o);
  o.workers = 4;
  const TotalVariability b = TrainTMatrix(ubm, stats, o);
  EXPECT_EQ(a.T(), b.T());
  EXPECT_EQ(a.Fingerprint(), b.Fingerprint());
}

TEST(TMatrixFile, RoundTripIsBitExact) {
  std::mt19937_64 g(9);
  const Ubm ubm = testing::RandomUbm(g, 2, 3);
  const auto stats = StatsForTraining(g, ubm, StatsMode::kModified, 10);
  TMatrixOptions o;
  o.rank = 2;
  o.iterations = 2;
  TotalVariability tv = TrainTMatrix(ubm, stats, o);
  tv.provenance.config_hash = 77;
  std::stringstream ss;
  WriteTotalVariability(ss, tv);
  const TotalVariability back = ReadTotalVariability(ss, "mem");
  EXPECT_EQ(back.T(), tv.T());
  EXPECT_EQ(back.Sigma(), tv.Sigma());
  EXPECT_EQ(back.UbmFingerprint(), ubm.Fingerprint());
  EXPECT_EQ(back.provenance, tv.provenance);
  for (const auto& st : stats)
    EXPECT_EQ(ExtractIvector(back, st), ExtractIvector(tv, st));
  std::stringstream cut(ss.str().substr(0, 40));
  EXPECT_THROW(ReadTotalVariability(cut, "cut"), ArtifactError);
}

TEST(Variants, FeatureConcatStacksChannels) {
  std::mt19937_64 g(10);
  const FeatureSegment f = testing::RandomFeatures(g, 3, 4, 2);
  const FeatureSegment c = VariantFeatureConcat(f);
  ASSERT_EQ(c.channels, 1);
  ASSERT_EQ(c.Dim(), 6);
  for (Eigen::Index n = 0; n < 4; ++n)
    for (Eigen::Index ch = 0; ch < 3; ++ch)
      EXPECT_EQ(c.data.row(n).segment(ch * 2, 2), f.Channel(ch).row(n));
}

TEST(Variants, ScoreFusionIsChannelMean) {
  MatrixXd s(3, 2);
  s << 0.1, 0.4, 0.2, 0.5, 0.6, -0.3;
  const VectorXd fused = VariantScoreFusion(s);
  EXPECT_NEAR(fused(0), 0.3, 1e-15);
  EXPECT_NEAR(fused(1), 0.2, 1e-15);
}

TEST(PoolStats, SumsParts) {
  std::mt19937_64 g(11);
  const SuffStats a = testing::RandomStats(g, StatsMode::kModified, 2, 2, 2);
  const SuffStats b = testing::RandomStats(g, StatsMode::kModified, 2, 2, 2);
  const SuffStats p = PoolStats({&a, &b});
  EXPECT_EQ(p.zeroth, a.zeroth + b.zeroth);
  EXPECT_EQ(p.first, a.first + b.first);
  const SuffStats c = testing::RandomStats(g, StatsMode::kBaseline, 2, 2, 2);
  EXPECT_THROW(PoolStats({&a, &c}), ValidationError);
}

}  // namespace
}  // namespace eegid
