// eegid/common.hpp

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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written natively");

namespace eegid {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::string_view kToolVersion = "eegid 1.0.0";

// Bad input, bad arguments, precondition violations.  CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, corrupt or mismatched model/feature files.  CLI exit code 3.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during training (divergence, non-SPD system).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename... Args>
std::string StrCat(Args&&... args) {
  std::ostringstream oss;
  oss << std::setprecision(17);
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

#define EEGID_REQUIRE(cond, ...)                                 \
  do {                                                           \
    if (!(cond)) throw ::eegid::ValidationError(                 \
        ::eegid::StrCat(__VA_ARGS__));                           \
  } while (0)

/// Labels shared by segments, features and embeddings.  `index` is the
/// position of the segment within its recording.
struct SegmentLabels {
  std::string subject_id;
  std::string session_id;
  std::string task_id;
  std::uint32_t index = 0;

  friend bool operator==(const SegmentLabels&, const SegmentLabels&) = default;
  friend auto operator<=>(const SegmentLabels&, const SegmentLabels&) = default;

  std::string Key() const {
    return StrCat(subject_id, "/", session_id, "/", task_id, "#", index);
  }

  // Inverse of Key().
  static SegmentLabels FromKey(const std::string& key) {
    const auto a = key.find('/');
    const auto b = a == std::string::npos ? a : key.find('/', a + 1);
    const auto h = key.rfind('#');
    if (a == std::string::npos || b == std::string::npos ||
        h == std::string::npos || h < b)
      throw ValidationError(StrCat("malformed segment key '", key, "'"));
    SegmentLabels l{key.substr(0, a), key.substr(a + 1, b - a - 1),
                    key.substr(b + 1, h - b - 1), 0};
    l.index = static_cast<std::uint32_t>(std::stoul(key.substr(h + 1)));
    return l;
  }
};

// 64-bit FNV-1a.  Used for config hashes and model fingerprints.
class Fnv1a {
 public:
  void Update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void Update(std::string_view s) { Update(s.data(), s.size()); }
  template <typename T>
    requires std::is_arithmetic_v<T>
  void UpdateValue(T v) { Update(&v, sizeof(v)); }
  void Update(const Eigen::Ref<const MatrixXd>& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) UpdateValue(m(i, j));
  }
  std::uint64_t Digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string HexDigest(std::uint64_t h) {
  std::ostringstream oss;
  oss << std::hex << std::setw(16) << std::setfill('0') << h;
  return oss.str();
}

/// Provenance attached to every persisted artifact.
struct Provenance {
  std::string tool_version{kToolVersion};
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// ---------------------------------------------------------------------------
// Little-endian binary streams.

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void Magic(std::string_view magic) { os_.write(magic.data(), magic.size()); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void Put(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }

  void PutString(std::string_view s) {
    Put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), s.size());
  }

  // Column-major when `row_major` is false.
  void PutMatrix(const Eigen::Ref<const MatrixXd>& m, bool row_major = false) {
    if (row_major) {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) Put<double>(m(i, j));
    } else {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) Put<double>(m(i, j));
    }
  }

  void PutProvenance(const Provenance& p) {
    PutString(p.tool_version);
    Put<std::uint64_t>(p.config_hash);
    Put<std::uint64_t>(p.seed);
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string what)
      : is_(is), what_(std::move(what)) {}

  void ExpectMagic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    is_.read(got.data(), got.size());
    if (!is_ || got != magic)
      throw ArtifactError(StrCat(what_, ": bad magic, expected '", magic,
                                 "' (is this the right kind of file?)"));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T Get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is_) throw ArtifactError(StrCat(what_, ": truncated file"));
    return v;
  }

  std::string GetString() {
    const auto n = Get<std::uint32_t>();
    if (n > (1u << 24)) throw ArtifactError(StrCat(what_, ": corrupt string"));
    std::string s(n, '\0');
    is_.read(s.data(), n);
    if (!is_) throw ArtifactError(StrCat(what_, ": truncated file"));
    return s;
  }

  MatrixXd GetMatrix(Eigen::Index rows, Eigen::Index cols,
                     bool row_major = false) {
    MatrixXd m(rows, cols);
    if (row_major) {
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Get<double>();
    } else {
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = Get<double>();
    }
    return m;
  }

  Provenance GetProvenance() {
    Provenance p;
    p.tool_version = GetString();
    p.config_hash = Get<std::uint64_t>();
    p.seed = Get<std::uint64_t>();
    return p;
  }

  void ExpectEnd() {
    if (is_.peek() != std::char_traits<char>::eof())
      throw ArtifactError(StrCat(what_, ": trailing bytes"));
  }

 private:
  std::istream& is_;
  std::string what_;
};

inline std::ofstream OpenOut(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ArtifactError(StrCat("cannot open '", path, "' for writing"));
  return os;
}

inline std::ifstream OpenIn(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw ArtifactError(StrCat("cannot open '", path,
                               "' (missing upstream artifact?)"));
  return is;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.  Results must be
// written to per-index slots; callers reduce in index order so the outcome is
// independent of the worker count.
inline void ParallelFor(std::size_t n, int workers,
                        const std::function<void(std::size_t)>& fn) {
  const std::size_t w =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline bool AllFinite(const Eigen::Ref<const MatrixXd>& m) {
  return m.allFinite();
}

// log(sum(exp(v))) without overflow.
inline double LogSumExp(const Eigen::Ref<const VectorXd>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace eegid
