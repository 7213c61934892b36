// tests/test_xvector.cpp

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

// d=4, h1=6, h2=5, e=3, two subjects, two channels, five frames.
TEST(XvectorGradient, MatchesCentralDifferences) {
  for (StatsMode mode : {StatsMode::kBaseline, StatsMode::kModified})
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto c = testing::MakeGradCheckCase(mode, seed);
      EXPECT_LT(testing::GradCheckMaxRelError(c, 1e-3), 1e-4)
          << ModeName(mode) << " seed " << seed;
    }
}

TEST(XvectorGradient, DuplicatedSampleEqualsSingleSample) {
  const auto c = testing::MakeGradCheckCase(StatsMode::kModified, 4);
  const std::vector<LabeledSegment> one = {c.batch[0]};
  const std::vector<LabeledSegment> two = {c.batch[0], c.batch[0]};
  const XvecParams a = Backward(c.net, one);
  const XvecParams b = Backward(c.net, two);
  for (std::size_t k = 0; k < a.Tensors().size(); ++k)
    EXPECT_LT((*a.Tensors()[k] - *b.Tensors()[k]).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(XvectorGradient, SaturatedCorrectClassVanishes) {
  auto c = testing::MakeGradCheckCase(StatsMode::kBaseline, 5);
  c.net.params.bo(0, 0) = 200.0;
  c.net.params.bo(1, 0) = -200.0;
  const std::vector<LabeledSegment> batch = {{&c.segments[0], 0}};
  double loss = -1.0;
  const XvecParams g = Backward(c.net, batch, &loss);
  EXPECT_LT(loss, 1e-100);
  for (const auto* t : g.Tensors()) EXPECT_LT(t->cwiseAbs().maxCoeff(), 1e-100);
}

// Pooling against a direct per-channel loop.
TEST(XvectorForward, PoolingMatchesLoop) {
  const auto c = testing::MakeGradCheckCase(StatsMode::kModified, 6);
  const FeatureSegment& f = c.segments[1];
  const XvecTrace t = ForwardTrace(c.net, f);
  const auto& p = c.net.params;
  for (Eigen::Index ch = 0; ch < 2; ++ch) {
    VectorXd sum = VectorXd::Zero(5), sq = VectorXd::Zero(5);
    for (Eigen::Index n = 0; n < 5; ++n) {
      VectorXd x = f.Channel(ch).row(n).transpose();
      x = (x - c.net.input_mean).cwiseQuotient(c.net.input_scale);
      const VectorXd a1 = (p.w1 * x + p.b1.col(0)).cwiseMax(0.0);
      const VectorXd a2 = (p.w2 * a1 + p.b2.col(0)).cwiseMax(0.0);
      sum += a2;
      sq += a2.cwiseProduct(a2);
    }
    const VectorXd mean = sum / 5.0;
    const VectorXd var = sq / 5.0 - mean.cwiseProduct(mean);
    EXPECT_LT((t.pooled.segment(10 * ch, 5) - mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((t.pooled.segment(10 * ch + 5, 5) -
               (var.array() + kPoolVarianceEpsilon).matrix())
                  .cwiseAbs().maxCoeff(),
              1e-12);
  }
  EXPECT_LT((t.embedding - (p.we * t.pooled + p.be.col(0))).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_EQ(ExtractXvector(c.net, f), t.embedding);
}

// With one channel both modes build the same network.
TEST(XvectorForward, SingleChannelModesCoincide) {
  std::mt19937_64 g(7);
  XvecShape s;
  s.input_dim = 3;
  s.hidden1 = 5;
  s.hidden2 = 4;
  s.channels = 1;
  s.embed_dim = 2;
  s.num_classes = 3;
  s.mode = StatsMode::kBaseline;
  const XvecNet a = XvecNet::Init(s, 9);
  s.mode = StatsMode::kModified;
  const XvecNet b = XvecNet::Init(s, 9);
  EXPECT_EQ(a.params, b.params);
  const FeatureSegment f = testing::RandomFeatures(g, 1, 6, 3);
  EXPECT_EQ(Forward(a, f).logits, Forward(b, f).logits);
}

TEST(XvectorForward, RejectsBadInput) {
  std::mt19937_64 g(8);
  const auto c = testing::MakeGradCheckCase(StatsMode::kModified, 8);
  EXPECT_THROW(ExtractXvector(c.net, testing::RandomFeatures(g, 3, 5, 4)),
               ValidationError);
  EXPECT_THROW(ExtractXvector(c.net, testing::RandomFeatures(g, 2, 1, 4)),
               ValidationError);
  EXPECT_THROW(ExtractXvector(c.net, testing::RandomFeatures(g, 2, 5, 3)),
               ValidationError);
}

struct Toy {
  std::vector<FeatureSegment> train, val;
  std::vector<const FeatureSegment*> TrainPtrs() const {
    std::vector<const FeatureSegment*> out;
    for (const auto& f : train) out.push_back(&f);
    return out;
  }
  std::vector<const FeatureSegment*> ValPtrs() const {
    std::vector<const FeatureSegment*> out;
    for (const auto& f : val) out.push_back(&f);
    return out;
  }
};

// Three subjects whose frames differ by a subject-specific offset.
Toy MakeToy(std::uint64_t seed) {
  std::mt19937_64 g(seed);
  Toy t;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 8; ++i) {
      FeatureSegment f = testing::RandomFeatures(
          g, 2, 6, 4, {StrCat("S", s), "ses1", "T1", static_cast<std::uint32_t>(i)});
      f.data.col(s).array() += 2.0;
      (i < 6 ? t.train : t.val).push_back(std::move(f));
    }
  return t;
}

XvecShape ToyShape(StatsMode mode) {
  XvecShape s;
  s.mode = mode;
  s.input_dim = 4;
  s.hidden1 = 10;
  s.hidden2 = 8;
  s.channels = 2;
  s.embed_dim = 4;
  s.num_classes = 3;
  return s;
}

TEST(XvectorTraining, LossDecreases) {
  const Toy toy = MakeToy(1);
  for (StatsMode mode : {StatsMode::kBaseline, StatsMode::kModified}) {
    TrainConfig cfg;
    cfg.batch_size = 6;
    cfg.epochs = 30;
    cfg.patience = 30;
    cfg.learning_rate = 1e-2;
    cfg.seed = 3;
    XvecTrainReport rep;
    const XvecNet net = TrainXvector(XvecNet::Init(ToyShape(mode), 2),
                                     toy.TrainPtrs(), toy.ValPtrs(), cfg, &rep);
    ASSERT_FALSE(rep.val_loss.empty());
    EXPECT_LT(rep.train_loss.back(), 0.5 * rep.initial_loss) << ModeName(mode);
    EXPECT_EQ(net.classes, (std::vector<std::string>{"S0", "S1", "S2"}));
    EXPECT_GE(rep.best_epoch, 0);
  }
}

TEST(XvectorTraining, EarlyStoppingKeepsBestValidationEpoch) {
  const Toy toy = MakeToy(2);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 40;
  cfg.patience = 2;
  cfg.learning_rate = 5e-2;
  cfg.seed = 1;
  XvecTrainReport rep;
  TrainXvector(XvecNet::Init(ToyShape(StatsMode::kModified), 4), toy.TrainPtrs(),
               toy.ValPtrs(), cfg, &rep);
  ASSERT_GE(rep.best_epoch, 0);
  const double best = rep.val_loss[static_cast<std::size_t>(rep.best_epoch)];
  for (double v : rep.val_loss) EXPECT_GE(v, best);
  EXPECT_LE(static_cast<int>(rep.val_loss.size()),
            rep.best_epoch + 1 + cfg.patience);
}

TEST(XvectorTraining, DeterministicAcrossWorkerCounts) {
  const Toy toy = MakeToy(3);
  TrainConfig cfg;
  cfg.batch_size = 5;
  cfg.epochs = 4;
  cfg.seed = 8;
  cfg.workers = 1;
  const XvecNet a = TrainXvector(XvecNet::Init(ToyShape(StatsMode::kModified), 1),
                                 toy.TrainPtrs(), toy.ValPtrs(), cfg);
  cfg.workers = 3;
  const XvecNet b = TrainXvector(XvecNet::Init(ToyShape(StatsMode::kModified), 1),
                                 toy.TrainPtrs(), toy.ValPtrs(), cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.Fingerprint(), b.Fingerprint());
}

TEST(XvectorTraining, RejectsClassCountMismatch) {
  const Toy toy = MakeToy(4);
  XvecShape s = ToyShape(StatsMode::kBaseline);
  s.num_classes = 5;
  EXPECT_THROW(TrainXvector(XvecNet::Init(s, 1), toy.TrainPtrs(), toy.ValPtrs(),
                            TrainConfig{}),
               ValidationError);
}

TEST(XvectorFile, RoundTripIsBitExact) {
  const Toy toy = MakeToy(5);
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 2;
  XvecNet net = TrainXvector(XvecNet::Init(ToyShape(StatsMode::kModified), 3),
                             toy.TrainPtrs(), toy.ValPtrs(), cfg);
  net.provenance.config_hash = 99;
  std::stringstream ss;
  WriteXvector(ss, net);
  const XvecNet back = ReadXvector(ss, "mem");
  EXPECT_EQ(back.params, net.params);
  EXPECT_EQ(back.shape, net.shape);
  EXPECT_EQ(back.classes, net.classes);
  EXPECT_EQ(back.Fingerprint(), net.Fingerprint());
  for (const auto& f : toy.val)
    EXPECT_EQ(ExtractXvector(back, f), ExtractXvector(net, f));
  std::stringstream cut(ss.str().substr(0, ss.str().size() / 2));
  EXPECT_THROW(ReadXvector(cut, "cut"), ArtifactError);
}

}  // namespace
}  // namespace eegid
