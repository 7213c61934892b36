// tests/test_gmm.cpp

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

#include <chrono>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace eegid {
namespace {

// log N(x; m, diag(v)) evaluated directly.
double NaiveLogGauss(const VectorXd& x, const VectorXd& m, const VectorXd& v) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j)
    s += -0.5 * std::log(2.0 * std::numbers::pi * v(j)) -
         0.5 * (x(j) - m(j)) * (x(j) - m(j)) / v(j);
  return s;
}

double NaiveLogLike(const DiagGmm& g, const VectorXd& x) {
  double p = 0.0;
  for (Eigen::Index k = 0; k < g.NumComponents(); ++k)
    p += g.Weights()(k) * std::exp(NaiveLogGauss(
                              x, g.Means().row(k).transpose(),
                              g.Variances().row(k).transpose()));
  return std::log(p);
}

TEST(DiagGmm, LogLikesMatchNaiveEvaluation) {
  std::mt19937_64 g(1);
  const DiagGmm gmm = testing::RandomGmm(g, 4, 3);
  const MatrixXd x = testing::RandomMatrix(g, 30, 3);
  const VectorXd ll = gmm.LogLikes(x);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    EXPECT_NEAR(ll(i), NaiveLogLike(gmm, x.row(i).transpose()), 1e-10);
}

TEST(DiagGmm, PosteriorsSumToOne) {
  std::mt19937_64 g(2);
  const DiagGmm gmm = testing::RandomGmm(g, 5, 2);
  const MatrixXd x = testing::RandomMatrix(g, 40, 2, 10.0);
  const MatrixXd p = gmm.Posteriors(x);
  EXPECT_TRUE((p.array() >= 0).all());
  EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LT((gmm.FramePosteriors(x.row(3).transpose()) -
             p.row(3).transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DiagGmm, RejectsBadParameters) {
  EXPECT_THROW(DiagGmm(VectorXd::Ones(2), MatrixXd::Zero(2, 3),
                       MatrixXd::Zero(2, 3)),
               ValidationError);
  EXPECT_THROW(DiagGmm(VectorXd::Ones(3), MatrixXd::Zero(2, 3),
                       MatrixXd::Ones(2, 3)),
               ValidationError);
}

// 4 mixtures, 2000 frames: the per-iteration log-likelihood never decreases.
TEST(UbmTraining, EmIsMonotone) {
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 g(seed);
    const DiagGmm truth = testing::RandomGmm(g, 4, 3);
    const MatrixXd x = testing::SampleGmm(g, truth, 2000);
    UbmOptions o;
    o.num_components = 4;
    o.max_iters = 40;
    o.tol = -std::numeric_limits<double>::infinity();
    o.seed = seed;
    UbmTrainReport rep;
    TrainUbm(x, o, &rep);
    ASSERT_GE(rep.loglike_per_frame.size(), 40u);
    for (std::size_t i = 1; i < rep.loglike_per_frame.size(); ++i)
      EXPECT_GE(rep.loglike_per_frame[i] - rep.loglike_per_frame[i - 1], -1e-8)
          << "seed " << seed << " iteration " << i;
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start).count(),
            10.0);
}

TEST(UbmTraining, RecoversWellSeparatedComponents) {
  std::mt19937_64 g(3);
  VectorXd w = VectorXd::Constant(2, 0.5);
  MatrixXd m(2, 1);
  m << -5.0, 5.0;
  const DiagGmm truth(w, m, MatrixXd::Ones(2, 1));
  const MatrixXd x = testing::SampleGmm(g, truth, 4000);
  UbmOptions o;
  o.num_components = 2;
  o.seed = 1;
  const Ubm ubm = TrainUbm(x, o);
  VectorXd means = ubm.gmm.Means().col(0);
  std::sort(means.data(), means.data() + 2);
  EXPECT_NEAR(means(0), -5.0, 0.1);
  EXPECT_NEAR(means(1), 5.0, 0.1);
  EXPECT_NEAR(ubm.gmm.Weights()(0), 0.5, 0.05);
}

TEST(UbmTraining, SingleComponentIsMoments) {
  std::mt19937_64 g(4);
  const MatrixXd x = testing::RandomMatrix(g, 500, 3, 2.0);
  UbmOptions o;
  o.num_components = 1;
  const Ubm ubm = TrainUbm(x, o);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::RowVectorXd var =
      (x.rowwise() - mean).array().square().colwise().mean();
  EXPECT_LT((ubm.gmm.Means().row(0) - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ubm.gmm.Variances().row(0) - var).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(UbmTraining, VarianceFloorHolds) {
  std::mt19937_64 g(5);
  MatrixXd x = testing::RandomMatrix(g, 400, 2);
  x.topRows(200).col(1).setConstant(3.0);  // a degenerate cluster
  UbmOptions o;
  o.num_components = 4;
  o.floor_factor = 1e-2;
  o.seed = 2;
  const Ubm ubm = TrainUbm(x, o);
  for (Eigen::Index k = 0; k < 4; ++k)
    for (Eigen::Index j = 0; j < 2; ++j)
      EXPECT_GE(ubm.gmm.Variances()(k, j), ubm.variance_floor(j));
}

TEST(UbmTraining, IndependentOfWorkerCount) {
  std::mt19937_64 g(6);
  const DiagGmm truth = testing::RandomGmm(g, 3, 2);
  const MatrixXd x = testing::SampleGmm(g, truth, 1500);
  UbmOptions o;
  o.num_components = 3;
  o.seed = 9;
  o.workers = 1;
  const Ubm a = TrainUbm(x, o);
  o.workers = 3;
  const Ubm b = TrainUbm(x, o);
  EXPECT_EQ(a.gmm, b.gmm);
}

TEST(UbmTraining, RejectsTooFewFrames) {
  UbmOptions o;
  o.num_components = 8;
  EXPECT_THROW(TrainUbm(MatrixXd::Zero(20, 2), o), ValidationError);
}

TEST(MapAdapt, MatchesClosedForm) {
  std::mt19937_64 g(7);
  const Ubm ubm = testing::RandomUbm(g, 3, 2);
  const MatrixXd x = testing::RandomMatrix(g, 50, 2, 2.0);
  const double r = 16.0;
  const AdaptedModel m = MapAdapt(ubm, x, r, "S1");
  // Naive posteriors.
  for (Eigen::Index k = 0; k < 3; ++k) {
    double occ = 0.0;
    VectorXd first = VectorXd::Zero(2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const VectorXd xi = x.row(i).transpose();
      const double pk =
          ubm.gmm.Weights()(k) *
          std::exp(NaiveLogGauss(xi, ubm.gmm.Means().row(k).transpose(),
                                 ubm.gmm.Variances().row(k).transpose()) -
                   NaiveLogLike(ubm.gmm, xi));
      occ += pk;
      first += pk * xi;
    }
    const VectorXd want =
        (first + r * ubm.gmm.Means().row(k).transpose()) / (occ + r);
    EXPECT_LT((m.gmm.Means().row(k).transpose() - want).cwiseAbs().maxCoeff(),
              1e-10);
  }
  EXPECT_EQ(m.gmm.Weights(), ubm.gmm.Weights());
  EXPECT_EQ(m.gmm.Variances(), ubm.gmm.Variances());
}

TEST(MapAdapt, RelevanceLimits) {
  std::mt19937_64 g(8);
  const Ubm ubm = testing::RandomUbm(g, 1, 3);
  const MatrixXd x = testing::RandomMatrix(g, 100, 3);
  const AdaptedModel ml = MapAdapt(ubm, x, 0.0, "S1");
  EXPECT_LT((ml.gmm.Means().row(0) - x.colwise().mean()).cwiseAbs().maxCoeff(),
            1e-12);
  const AdaptedModel prior = MapAdapt(ubm, x, 1e15, "S1");
  EXPECT_LT((prior.gmm.Means() - ubm.gmm.Means()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(MapAdapt(ubm, x, -1.0, "S1"), ValidationError);
}

TEST(LlrScore, MeanFrameLogLikelihoodRatio) {
  std::mt19937_64 g(9);
  const Ubm ubm = testing::RandomUbm(g, 3, 2);
  const FeatureSegment f = testing::RandomFeatures(g, 2, 20, 2);
  const AdaptedModel m = MapAdapt(ubm, f.data, 4.0, "S1");
  double want = 0.0;
  for (Eigen::Index i = 0; i < f.data.rows(); ++i) {
    const VectorXd xi = f.data.row(i).transpose();
    want += NaiveLogLike(m.gmm, xi) - NaiveLogLike(ubm.gmm, xi);
  }
  want /= static_cast<double>(f.data.rows());
  EXPECT_NEAR(LlrScore(ubm, m, f), want, 1e-10);
  // A model adapted to the segment itself scores above the UBM.
  EXPECT_GT(LlrScore(ubm, m, f), 0.0);
  const Ubm other = testing::RandomUbm(g, 3, 2);
  EXPECT_THROW(LlrScore(other, m, f), ValidationError);
}

TEST(GmmFiles, RoundTripIsBitExact) {
  std::mt19937_64 g(10);
  const MatrixXd x = testing::SampleGmm(g, testing::RandomGmm(g, 3, 2), 600);
  UbmOptions o;
  o.num_components = 3;
  o.seed = 4;
  Ubm ubm = TrainUbm(x, o);
  ubm.provenance.config_hash = 0x1234;
  std::stringstream ss;
  WriteUbm(ss, ubm);
  const Ubm back = ReadUbm(ss, "mem");
  EXPECT_EQ(back.gmm, ubm.gmm);
  EXPECT_EQ(back.provenance, ubm.provenance);
  EXPECT_EQ(back.Fingerprint(), ubm.Fingerprint());

  const AdaptedModel m = MapAdapt(ubm, x.topRows(100), 16.0, "S7");
  std::stringstream sa;
  WriteAdapted(sa, m);
  const AdaptedModel mb = ReadAdapted(sa, "mem", back);
  EXPECT_EQ(mb.gmm, m.gmm);
  EXPECT_EQ(mb.subject_id, "S7");
  std::stringstream sb(sa.str());
  EXPECT_THROW(ReadAdapted(sb, "mem", testing::RandomUbm(g, 3, 2)),
               ArtifactError);
}

TEST(GmmFiles, TruncatedFileIsArtifactError) {
  std::mt19937_64 g(11);
  std::stringstream ss;
  WriteUbm(ss, testing::RandomUbm(g, 2, 2));
  std::stringstream cut(ss.str().substr(0, 30));
  EXPECT_THROW(ReadUbm(cut, "cut"), ArtifactError);
}

}  // namespace
}  // namespace eegid
