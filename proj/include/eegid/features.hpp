// eegid/features.hpp

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

#include <numbers>

#include "eegid/dataio.hpp"

namespace eegid {

struct Band {
  double low_hz = 3.0;
  double high_hz = 30.0;
  friend bool operator==(const Band&, const Band&) = default;
};

/// Per-channel PSD spectrogram of one segment.  Frame vectors are stored as
/// rows of a (C*N) x d matrix, channel-major: row c*N + n is frame n of
/// channel c.
struct FeatureSegment {
  SegmentLabels labels;
  Eigen::Index channels = 0;
  Eigen::Index frames = 0;
  double frame_len_ms = 0.0;
  Band band;
  MatrixXd data;  // (channels*frames) x dim

  Eigen::Index Dim() const { return data.cols(); }
  Eigen::Index NumFrameVectors() const { return data.rows(); }

  auto Channel(Eigen::Index c) const {
    return data.middleRows(c * frames, frames);
  }
  auto Channel(Eigen::Index c) { return data.middleRows(c * frames, frames); }
};

inline Eigen::Index FrameSamples(double frame_len_ms, double sample_rate_hz) {
  return static_cast<Eigen::Index>(
      std::llround(frame_len_ms * 1e-3 * sample_rate_hz));
}

/// DFT bin indices j (frequency j*fs/L) inside [low, high], both inclusive.
inline std::vector<Eigen::Index> BandBins(Eigen::Index frame_samples,
                                          double sample_rate_hz, Band band) {
  std::vector<Eigen::Index> bins;
  const double step = sample_rate_hz / static_cast<double>(frame_samples);
  const double tol = 1e-9 * step;
  for (Eigen::Index j = 0; j <= frame_samples / 2; ++j) {
    const double f = static_cast<double>(j) * step;
    if (f >= band.low_hz - tol && f <= band.high_hz + tol) bins.push_back(j);
  }
  return bins;
}

/// Raw one-sided periodogram per non-overlapping rectangular frame:
/// P_j = c_j |X_j|^2 / L^2 with c_j = 2 except at DC and Nyquist, so the
/// bins of a full-band request sum to the frame's mean power.
inline FeatureSegment ComputePsd(const Segment& seg, double frame_len_ms,
                                 Band band) {
  const Eigen::Index L = FrameSamples(frame_len_ms, seg.sample_rate_hz);
  EEGID_REQUIRE(L >= 2, "frame of ", frame_len_ms, " ms at ",
                seg.sample_rate_hz, " Hz has fewer than 2 samples");
  const double nyquist = seg.sample_rate_hz / 2.0;
  EEGID_REQUIRE(band.low_hz > 0 && band.low_hz < band.high_hz &&
                    band.high_hz <= nyquist,
                "band [", band.low_hz, ", ", band.high_hz,
                "] Hz must satisfy 0 < low < high <= ", nyquist);
  EEGID_REQUIRE(seg.samples.allFinite(), "segment ", seg.labels.Key(),
                " has non-finite samples");
  const auto bins = BandBins(L, seg.sample_rate_hz, band);
  EEGID_REQUIRE(!bins.empty(), "band [", band.low_hz, ", ", band.high_hz,
                "] Hz contains no DFT bin at frame length ", L);

  const auto d = static_cast<Eigen::Index>(bins.size());
  MatrixXd cos_t(L, d), sin_t(L, d);
  VectorXd scale(d);
  for (Eigen::Index b = 0; b < d; ++b) {
    const Eigen::Index j = bins[b];
    for (Eigen::Index n = 0; n < L; ++n) {
      // Reduce j*n mod L first so the angle stays exact for long frames.
      const double ang = 2.0 * std::numbers::pi *
                         static_cast<double>((j * n) % L) /
                         static_cast<double>(L);
      cos_t(n, b) = std::cos(ang);
      sin_t(n, b) = std::sin(ang);
    }
    const bool edge = j == 0 || (L % 2 == 0 && j == L / 2);
    scale(b) = (edge ? 1.0 : 2.0) / static_cast<double>(L * L);
  }

  FeatureSegment out;
  out.labels = seg.labels;
  out.channels = seg.samples.rows();
  out.frames = seg.samples.cols() / L;
  out.frame_len_ms = frame_len_ms;
  out.band = band;
  out.data.resize(out.channels * out.frames, d);
  for (Eigen::Index c = 0; c < out.channels; ++c) {
    for (Eigen::Index n = 0; n < out.frames; ++n) {
      const auto frame = seg.samples.row(c).segment(n * L, L);
      const Eigen::RowVectorXd re = frame * cos_t;
      const Eigen::RowVectorXd im = frame * sin_t;
      out.data.row(c * out.frames + n) =
          (re.array().square() + im.array().square()) * scale.transpose().array();
    }
  }
  return out;
}

/// Per-segment, per-dimension mean/variance normalization.  Optional; the
/// default pipeline models raw power.
inline void NormalizeMeanVariance(FeatureSegment& f) {
  const Eigen::RowVectorXd mean = f.data.colwise().mean();
  f.data.rowwise() -= mean;
  const Eigen::RowVectorXd sd =
      (f.data.array().square().colwise().mean()).sqrt().max(1e-12);
  f.data.array().rowwise() /= sd.array();
}

/// Keeps the listed channels, in the given order.
inline FeatureSegment SelectChannels(const FeatureSegment& f,
                                     const std::vector<int>& channels) {
  FeatureSegment out = f;
  out.channels = static_cast<Eigen::Index>(channels.size());
  out.data.resize(out.channels * f.frames, f.Dim());
  for (std::size_t i = 0; i < channels.size(); ++i) {
    EEGID_REQUIRE(channels[i] >= 0 && channels[i] < f.channels, "channel ",
                  channels[i], " out of range (segment has ", f.channels, ")");
    out.Channel(static_cast<Eigen::Index>(i)) = f.Channel(channels[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature files ("MCFT1").

inline void WriteFeatures(std::ostream& os, const FeatureSegment& f) {
  BinaryWriter w(os);
  w.Magic("MCFT1");
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(f.channels));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(f.frames));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(f.Dim()));
  w.Put<double>(f.frame_len_ms);
  w.Put<double>(f.band.low_hz);
  w.Put<double>(f.band.high_hz);
  w.PutString(f.labels.subject_id);
  w.PutString(f.labels.session_id);
  w.PutString(f.labels.task_id);
  w.Put<std::uint32_t>(f.labels.index);
  for (Eigen::Index r = 0; r < f.data.rows(); ++r)
    for (Eigen::Index k = 0; k < f.data.cols(); ++k)
      w.Put<float>(static_cast<float>(f.data(r, k)));
}

inline FeatureSegment ReadFeatures(std::istream& is, const std::string& what) {
  BinaryReader r(is, what);
  r.ExpectMagic("MCFT1");
  FeatureSegment f;
  f.channels = r.Get<std::uint32_t>();
  f.frames = r.Get<std::uint32_t>();
  const auto d = r.Get<std::uint32_t>();
  f.frame_len_ms = r.Get<double>();
  f.band.low_hz = r.Get<double>();
  f.band.high_hz = r.Get<double>();
  f.labels.subject_id = r.GetString();
  f.labels.session_id = r.GetString();
  f.labels.task_id = r.GetString();
  f.labels.index = r.Get<std::uint32_t>();
  if (f.channels == 0 || d == 0 ||
      static_cast<double>(f.channels) * f.frames * d > 1e9)
    throw ArtifactError(StrCat(what, ": implausible feature shape"));
  f.data.resize(f.channels * f.frames, d);
  for (Eigen::Index i = 0; i < f.data.rows(); ++i)
    for (Eigen::Index k = 0; k < f.data.cols(); ++k) f.data(i, k) = r.Get<float>();
  r.ExpectEnd();
  return f;
}

inline void SaveFeatures(const std::string& path, const FeatureSegment& f) {
  auto os = OpenOut(path);
  WriteFeatures(os, f);
}

inline FeatureSegment LoadFeatures(const std::string& path) {
  auto is = OpenIn(path);
  return ReadFeatures(is, path);
}

}  // namespace eegid
