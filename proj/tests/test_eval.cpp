// tests/test_eval.cpp

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

ScoreTable RandomTable(std::mt19937_64& g, Eigen::Index rows, Eigen::Index cols,
                       bool integer_scores) {
  ScoreTable t;
  for (Eigen::Index j = 0; j < cols; ++j) t.subjects.push_back(StrCat("S", j));
  t.scores.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    t.truth.push_back(testing::UniformInt(g, 0, static_cast<int>(cols) - 1));
    t.rows.push_back({t.subjects[t.truth.back()], "ses3", "T1",
                      static_cast<std::uint32_t>(i)});
    for (Eigen::Index j = 0; j < cols; ++j)
      t.scores(i, j) = integer_scores
                           ? static_cast<double>(testing::UniformInt(g, 0, 9))
                           : testing::Uniform(g, -1.0, 1.0);
    t.scores(i, t.truth.back()) += 0.3;
  }
  return t;
}

void SplitScores(const ScoreTable& t, std::vector<double>& tg,
                 std::vector<double>& nt) {
  for (Eigen::Index i = 0; i < t.scores.rows(); ++i)
    for (Eigen::Index j = 0; j < t.scores.cols(); ++j)
      (j == t.truth[i] ? tg : nt).push_back(t.scores(i, j));
}

// 1000-score tables, continuous and heavily tied, against brute force.
TEST(Eer, MatchesExhaustiveEnumeration) {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 100; ++trial) {
    const bool ties = trial % 2 == 1;
    const ScoreTable t = RandomTable(g, 100, 10, ties);
    std::vector<double> tg, nt;
    SplitScores(t, tg, nt);
    EXPECT_NEAR(EqualErrorRate(t), testing::ExhaustiveEer(tg, nt), 1e-9)
        << "trial " << trial;
  }
}

TEST(Eer, PerfectSeparationIsExactlyZero) {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreTable t = RandomTable(g, 50, 20, false);
    for (Eigen::Index i = 0; i < 50; ++i) t.scores(i, t.truth[i]) = 2.0 + i;
    EXPECT_EQ(EqualErrorRate(t), 0.0);
  }
}

TEST(Eer, FullyInvertedIsOne) {
  EXPECT_EQ(EqualErrorRate({0.0, 0.1}, {0.5, 0.7}), 1.0);
}

TEST(Eer, HandComputedInterpolation) {
  // (FAR, FRR) at 0.1, 0.3, 0.4: (1, 0) (0.5, 0) (0, 0.5); crossing at 0.25.
  EXPECT_DOUBLE_EQ(EqualErrorRate({0.3, 0.4}, {0.1, 0.3}), 0.25);
  // At 0.3 the operating point is (0.5, 0.5) exactly.
  EXPECT_DOUBLE_EQ(EqualErrorRate({0.2, 0.4}, {0.1, 0.3}), 0.5);
}

TEST(Eer, SameDistributionIsNearHalf) {
  std::mt19937_64 g(3);
  std::vector<double> tg, nt;
  for (int i = 0; i < 5000; ++i) {
    tg.push_back(testing::Uniform(g, 0, 1));
    nt.push_back(testing::Uniform(g, 0, 1));
  }
  EXPECT_NEAR(EqualErrorRate(tg, nt), 0.5, 0.05);
}

TEST(Eer, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(EqualErrorRate({}, {0.1}), ValidationError);
  ScoreTable t;
  t.subjects = {"A", "B"};
  t.truth = {0};
  t.rows = {{"A", "s", "T", 0}};
  t.scores = MatrixXd::Zero(1, 2);
  t.scores(0, 1) = std::nan("");
  EXPECT_THROW(EqualErrorRate(t), ValidationError);
}

// Rank-1 against a direct loop, ties resolved to the lowest column.
TEST(Rank1, MatchesLoopWithFirstMaxTies) {
  std::mt19937_64 g(4);
  for (int trial = 0; trial < 50; ++trial) {
    const ScoreTable t = RandomTable(g, 40, 5, true);
    int correct = 0;
    for (Eigen::Index i = 0; i < 40; ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < 5; ++j)
        if (t.scores(i, j) > t.scores(i, best)) best = j;
      correct += best == t.truth[i];
    }
    EXPECT_DOUBLE_EQ(Rank1Accuracy(t), correct / 40.0);
  }
  ScoreTable tie;
  tie.subjects = {"A", "B"};
  tie.rows = {{"B", "s", "T", 0}};
  tie.truth = {1};
  tie.scores = MatrixXd::Ones(1, 2);
  EXPECT_EQ(Rank1Accuracy(tie), 0.0);
}

TEST(ScoreTableCsv, RoundTripIsExact) {
  std::mt19937_64 g(5);
  const ScoreTable t = RandomTable(g, 12, 4, false);
  std::stringstream ss;
  WriteScoreTableCsv(ss, t, 0xfeed);
  std::uint64_t hash = 0;
  const ScoreTable back = ReadScoreTableCsv(ss, "mem", &hash);
  EXPECT_EQ(hash, 0xfeedu);
  EXPECT_EQ(back.scores, t.scores);
  EXPECT_EQ(back.truth, t.truth);
  EXPECT_EQ(back.subjects, t.subjects);
  EXPECT_EQ(back.rows, t.rows);
  std::stringstream bad("segment,true_subject,A\n");
  EXPECT_THROW(ReadScoreTableCsv(bad, "bad", nullptr), ArtifactError);
}

TEST(Report, CsvHasOneLinePerResult) {
  EvalReport r;
  r.protocol = "session-disjoint";
  r.system = "ivector-modified";
  r.accuracy = 0.95;
  r.eer = 0.02;
  r.n_trials = 40;
  std::stringstream ss;
  WriteReportCsv(ss, {r, r});
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) ++n;
  EXPECT_EQ(n, 3);
}

}  // namespace
}  // namespace eegid
