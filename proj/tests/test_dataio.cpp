// tests/test_dataio.cpp

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

#include <filesystem>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace eegid {
namespace {

using testing::RandomMatrix;

Recording MakeRecording(std::mt19937_64& g, Eigen::Index C, Eigen::Index T,
                        double fs = 250.0) {
  Recording r{"S1", "ses1", "T1", fs, RandomMatrix(g, C, T)};
  // Float-representable samples.
  r.samples = r.samples.cast<float>().cast<double>();
  return r;
}

TEST(Segmentation, CountsAndDropsRemainder) {
  std::mt19937_64 g(1);
  const Recording rec = MakeRecording(g, 3, 250 * 47);
  const auto segs = SegmentRecording(rec, 15.0);
  ASSERT_EQ(segs.size(), 3u);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    EXPECT_EQ(segs[i].labels.index, i);
    EXPECT_EQ(segs[i].samples.cols(), 3750);
    EXPECT_EQ(segs[i].samples, rec.samples.middleCols(3750 * i, 3750));
  }
}

TEST(Segmentation, ShortRecordingYieldsNothing) {
  std::mt19937_64 g(2);
  EXPECT_TRUE(SegmentRecording(MakeRecording(g, 2, 100), 15.0).empty());
  EXPECT_THROW(SegmentRecording(MakeRecording(g, 2, 100), 0.0), ValidationError);
}

TEST(RecordingFile, RoundTripIsExact) {
  std::mt19937_64 g(3);
  const Recording rec = MakeRecording(g, 4, 1000);
  std::stringstream ss;
  WriteRecording(ss, rec);
  const Recording back = ReadRecording(ss, "mem");
  EXPECT_EQ(back.samples, rec.samples);
  EXPECT_EQ(back.subject_id, rec.subject_id);
  EXPECT_EQ(back.sample_rate_hz, rec.sample_rate_hz);
}

TEST(RecordingFile, CorruptInputsAreArtifactErrors) {
  std::mt19937_64 g(4);
  std::stringstream ss;
  WriteRecording(ss, MakeRecording(g, 2, 50));
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(ReadRecording(truncated, "t"), ArtifactError);
  bytes[0] = 'X';
  std::stringstream bad_magic(bytes);
  EXPECT_THROW(ReadRecording(bad_magic, "m"), ArtifactError);
  EXPECT_THROW(LoadRecording("/nonexistent/file.mcsr"), ArtifactError);
}

TEST(RecordingValidation, RejectsNonFinite) {
  std::mt19937_64 g(5);
  Recording rec = MakeRecording(g, 2, 10);
  rec.samples(1, 3) = std::nan("");
  EXPECT_THROW(rec.Validate(), ValidationError);
}

Manifest MakeManifest(int subjects, int sessions, int tasks) {
  std::vector<ManifestRow> rows;
  for (int s = 0; s < subjects; ++s)
    for (int j = 0; j < sessions; ++j)
      for (int t = 0; t < tasks; ++t)
        rows.push_back({SynthSubjectId(s), SynthSessionId(j), SynthTaskId(t),
                        StrCat("r", s, j, t)});
  return Manifest(rows);
}

TEST(Manifest, ThreeSessionsTrainOnTwo) {
  const Manifest m = MakeManifest(2, 3, 1);
  EXPECT_EQ(m.Role("S1", "ses1"), SessionRole::kTrain);
  EXPECT_EQ(m.Role("S1", "ses2"), SessionRole::kTrain);
  EXPECT_EQ(m.Role("S1", "ses3"), SessionRole::kHeldOut);
}

TEST(Manifest, TenSessionsHaveValidation) {
  const Manifest m = MakeManifest(1 + 1, 10, 1);
  int train = 0, val = 0, test = 0;
  for (int j = 0; j < 10; ++j) {
    switch (m.Role("S1", SynthSessionId(j))) {
      case SessionRole::kTrain: ++train; break;
      case SessionRole::kValidation: ++val; break;
      case SessionRole::kTest: ++test; break;
      case SessionRole::kHeldOut: FAIL();
    }
  }
  EXPECT_EQ(train, 6);
  EXPECT_EQ(val, 1);
  EXPECT_EQ(test, 3);
}

TEST(Manifest, HeldOutSessionsSplitBySegmentOrder) {
  const Manifest m = MakeManifest(1 + 1, 3, 2);
  std::vector<SegmentLabels> segs;
  for (int t = 0; t < 2; ++t)
    for (std::uint32_t i = 0; i < 5; ++i)
      segs.push_back({"S1", "ses3", SynthTaskId(t), i});
  const auto splits = m.SegmentSplits(segs);
  // 10 segments: the first 2 (task T1, index 0 and 1) validate.
  for (std::size_t i = 0; i < segs.size(); ++i)
    EXPECT_EQ(splits[i], i < 2 ? Split::kValidation : Split::kTest) << i;
}

TEST(Manifest, RejectsSingleSessionSubjects) {
  EXPECT_THROW(MakeManifest(2, 1, 1), ValidationError);
}

// Property: for any session count, train and test never share a session and
// every subject keeps at least one train and one test segment.
TEST(ManifestProperty, SplitsAreSessionDisjoint) {
  std::mt19937_64 g(6);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_ses = testing::UniformInt(g, 2, 12);
    const int n_tasks = testing::UniformInt(g, 1, 3);
    const int n_seg = testing::UniformInt(g, 1, 6);
    const Manifest m = MakeManifest(2, n_ses, n_tasks);
    std::vector<SegmentLabels> segs;
    for (int j = 0; j < n_ses; ++j)
      for (int t = 0; t < n_tasks; ++t)
        for (int i = 0; i < n_seg; ++i)
          segs.push_back({"S2", SynthSessionId(j), SynthTaskId(t),
                          static_cast<std::uint32_t>(i)});
    const auto splits = m.SegmentSplits(segs);
    std::set<std::string> train_ses, test_ses;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (splits[i] == Split::kTrain) train_ses.insert(segs[i].session_id);
      if (splits[i] == Split::kTest) test_ses.insert(segs[i].session_id);
    }
    ASSERT_FALSE(train_ses.empty());
    ASSERT_FALSE(test_ses.empty()) << n_ses << " sessions";
    for (const auto& s : train_ses) ASSERT_FALSE(test_ses.contains(s));
  }
}

TEST(ManifestFile, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "eegid_manifest";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.csv").string();
  const Manifest m = MakeManifest(3, 2, 2);
  SaveManifest(path, m);
  const Manifest back = LoadManifest(path);
  ASSERT_EQ(back.Rows().size(), m.Rows().size());
  for (std::size_t i = 0; i < m.Rows().size(); ++i) {
    ManifestRow want = m.Rows()[i];
    want.path = (dir / want.path).string();
    EXPECT_EQ(back.Rows()[i], want);
  }
  {
    std::ofstream os(path);
    os << "subject_id,session_id,task_id,path\nS1,ses1\n";
  }
  EXPECT_THROW(LoadManifest(path), ValidationError);
}

TEST(Synthetic, DeterministicForSeed) {
  SynthSpec spec;
  spec.n_subjects = 2;
  spec.n_sessions = 2;
  spec.n_tasks = 1;
  spec.session_duration_s = 4.0;
  const Corpus a = GenerateSyntheticCorpus(spec, 11);
  const Corpus b = GenerateSyntheticCorpus(spec, 11);
  const Corpus c = GenerateSyntheticCorpus(spec, 12);
  ASSERT_EQ(a.recordings.size(), 4u);
  for (std::size_t i = 0; i < a.recordings.size(); ++i) {
    EXPECT_EQ(a.recordings[i].samples, b.recordings[i].samples);
    EXPECT_NE(a.recordings[i].samples, c.recordings[i].samples);
    EXPECT_EQ(a.recordings[i].NumSamples(), 1000);
    EXPECT_EQ(a.recordings[i].NumChannels(), 9);
  }
  EXPECT_EQ(a.manifest.Rows(), b.manifest.Rows());
}

TEST(Synthetic, SaveAndLoadCorpus) {
  SynthSpec spec;
  spec.n_subjects = 2;
  spec.n_sessions = 2;
  spec.n_tasks = 1;
  spec.session_duration_s = 2.0;
  const Corpus a = GenerateSyntheticCorpus(spec, 1);
  const auto dir = std::filesystem::temp_directory_path() / "eegid_corpus";
  std::filesystem::remove_all(dir);
  SaveCorpus(dir.string(), a);
  const Corpus b = LoadCorpus((dir / "manifest.csv").string());
  ASSERT_EQ(b.recordings.size(), a.recordings.size());
  for (std::size_t i = 0; i < a.recordings.size(); ++i)
    EXPECT_EQ(b.recordings[i].samples, a.recordings[i].samples);
}

TEST(Synthetic, RejectsBadSpec) {
  SynthSpec spec;
  spec.n_sessions = 1;
  EXPECT_THROW(GenerateSyntheticCorpus(spec, 1), ValidationError);
  spec = {};
  spec.noise_sd = 0.0;
  EXPECT_THROW(GenerateSyntheticCorpus(spec, 1), ValidationError);
}

TEST(SegmentKey, RoundTrip) {
  const SegmentLabels l{"S10", "ses2", "T3", 17};
  EXPECT_EQ(SegmentLabels::FromKey(l.Key()), l);
  EXPECT_THROW(SegmentLabels::FromKey("garbage"), ValidationError);
}

}  // namespace
}  // namespace eegid
