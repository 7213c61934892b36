// eegid/xvector.hpp

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

//
// Statistics-pooling embedding network.  Two frame-level affine+ReLU layers
// (kernel width one, shared across channels and frames), mean/variance
// pooling (per channel in modified mode, over all channels in baseline mode),
// an embedding layer whose pre-activation output is the x-vector, and a
// softmax classifier over training subjects.

#pragma once

#include <array>
#include <iostream>
#include <map>
#include <numeric>
#include <random>

#include "eegid/ivector.hpp"

namespace eegid {

struct XvecShape {
  StatsMode mode = StatsMode::kModified;
  Eigen::Index input_dim = 9;
  Eigen::Index hidden1 = 1024;
  Eigen::Index hidden2 = 512;
  Eigen::Index channels = 9;
  Eigen::Index embed_dim = 160;
  Eigen::Index num_classes = 30;

  Eigen::Index PoolGroups() const {
    return mode == StatsMode::kModified ? channels : 1;
  }
  Eigen::Index PooledDim() const { return 2 * hidden2 * PoolGroups(); }

  friend bool operator==(const XvecShape&, const XvecShape&) = default;
};

inline constexpr double kPoolVarianceEpsilon = 1e-8;

/// Parameter tensors, in a fixed order shared by gradients and optimizer
/// state.  Biases are single-column matrices.
struct XvecParams {
  MatrixXd w1, b1, w2, b2, we, be, wo, bo;

  static constexpr std::array<const char*, 8> kNames = {
      "w1", "b1", "w2", "b2", "embed.w", "embed.b", "out.w", "out.b"};

  std::array<MatrixXd*, 8> Tensors() {
    return {&w1, &b1, &w2, &b2, &we, &be, &wo, &bo};
  }
  std::array<const MatrixXd*, 8> Tensors() const {
    return {&w1, &b1, &w2, &b2, &we, &be, &wo, &bo};
  }

  static XvecParams ZerosLike(const XvecParams& p) {
    XvecParams z;
    auto dst = z.Tensors();
    auto src = p.Tensors();
    for (std::size_t i = 0; i < dst.size(); ++i)
      *dst[i] = MatrixXd::Zero(src[i]->rows(), src[i]->cols());
    return z;
  }

  XvecParams& operator+=(const XvecParams& o) {
    auto dst = Tensors();
    auto src = o.Tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
    return *this;
  }

  friend bool operator==(const XvecParams& a, const XvecParams& b) {
    auto x = a.Tensors();
    auto y = b.Tensors();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i]->rows() != y[i]->rows() || x[i]->cols() != y[i]->cols() ||
          *x[i] != *y[i])
        return false;
    return true;
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 64;
  int epochs = 30;
  int patience = 5;
  std::uint64_t seed = 0;
  int workers = 1;

  void Validate() const {
    EEGID_REQUIRE(learning_rate >= 0 && std::isfinite(learning_rate),
                  "learning rate must be >= 0");
    EEGID_REQUIRE(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
                  "Adam betas must lie in [0, 1)");
    EEGID_REQUIRE(epsilon > 0, "Adam epsilon must be positive");
    EEGID_REQUIRE(batch_size >= 1, "batch size must be >= 1");
    EEGID_REQUIRE(epochs >= 1, "need at least one epoch");
    EEGID_REQUIRE(patience >= 1, "patience must be >= 1");
  }
};

struct XvecNet {
  XvecShape shape;
  XvecParams params;
  // Fixed input standardization fitted on the training frames (identity for
  // an untrained net).  Not a trainable parameter.
  VectorXd input_mean;
  VectorXd input_scale;
  std::vector<std::string> classes;  // subject id per output unit
  TrainConfig train_config;
  Provenance provenance;

  std::uint64_t Fingerprint() const {
    Fnv1a h;
    h.UpdateValue(static_cast<std::uint8_t>(shape.mode));
    for (const auto* t : params.Tensors()) h.Update(*t);
    h.Update(input_mean);
    h.Update(input_scale);
    return h.Digest();
  }

  /// He-normal weights, zero biases.
  static XvecNet Init(const XvecShape& s, std::uint64_t seed) {
    EEGID_REQUIRE(s.input_dim >= 1 && s.hidden1 >= 1 && s.hidden2 >= 1 &&
                      s.channels >= 1 && s.embed_dim >= 1 && s.num_classes >= 1,
                  "x-vector layer sizes must be positive");
    XvecNet net;
    net.shape = s;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    auto he = [&](Eigen::Index rows, Eigen::Index cols) {
      const double sd = std::sqrt(2.0 / static_cast<double>(cols));
      MatrixXd m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = sd * gauss(rng);
      return m;
    };
    auto& p = net.params;
    p.w1 = he(s.hidden1, s.input_dim);
    p.b1 = MatrixXd::Zero(s.hidden1, 1);
    p.w2 = he(s.hidden2, s.hidden1);
    p.b2 = MatrixXd::Zero(s.hidden2, 1);
    p.we = he(s.embed_dim, s.PooledDim());
    p.be = MatrixXd::Zero(s.embed_dim, 1);
    p.wo = he(s.num_classes, s.embed_dim);
    p.bo = MatrixXd::Zero(s.num_classes, 1);
    net.input_mean = VectorXd::Zero(s.input_dim);
    net.input_scale = VectorXd::Ones(s.input_dim);
    for (Eigen::Index i = 0; i < s.num_classes; ++i)
      net.classes.push_back(StrCat("class", i));
    net.provenance.seed = seed;
    return net;
  }
};

/// Intermediate values of one forward pass, kept for backprop.
struct XvecTrace {
  MatrixXd x;       // standardized input, (C*N) x d
  MatrixXd z1, a1;  // (C*N) x h1
  MatrixXd z2, a2;  // (C*N) x h2
  VectorXd pooled;  // PooledDim
  VectorXd embedding;  // pre-activation
  VectorXd hidden;     // ReLU(embedding)
  VectorXd logits;
  Eigen::Index frames = 0;
};

namespace detail {

inline MatrixXd Relu(const MatrixXd& z) { return z.cwiseMax(0.0); }

inline void CheckInput(const XvecNet& net, const FeatureSegment& f) {
  EEGID_REQUIRE(f.Dim() == net.shape.input_dim, "feature dimension ", f.Dim(),
                " does not match x-vector input dimension ",
                net.shape.input_dim);
  EEGID_REQUIRE(f.frames >= 2, "statistics pooling needs at least 2 frames, "
                               "segment ", f.labels.Key(), " has ", f.frames);
  if (net.shape.mode == StatsMode::kModified)
    EEGID_REQUIRE(f.channels == net.shape.channels, "segment has ", f.channels,
                  " channels, modified x-vector expects ", net.shape.channels);
}

}  // namespace detail

inline XvecTrace ForwardTrace(const XvecNet& net, const FeatureSegment& f) {
  detail::CheckInput(net, f);
  const auto& p = net.params;
  XvecTrace t;
  t.frames = f.frames;
  t.x = (f.data.rowwise() - net.input_mean.transpose()).array().rowwise() /
        net.input_scale.transpose().array();
  t.z1 = t.x * p.w1.transpose();
  t.z1.rowwise() += p.b1.col(0).transpose();
  t.a1 = detail::Relu(t.z1);
  t.z2 = t.a1 * p.w2.transpose();
  t.z2.rowwise() += p.b2.col(0).transpose();
  t.a2 = detail::Relu(t.z2);

  const Eigen::Index groups = net.shape.PoolGroups();
  const Eigen::Index rows = t.a2.rows() / groups;
  const Eigen::Index h2 = net.shape.hidden2;
  t.pooled.resize(2 * h2 * groups);
  for (Eigen::Index g = 0; g < groups; ++g) {
    const auto block = t.a2.middleRows(g * rows, rows);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    const Eigen::RowVectorXd var =
        (block.rowwise() - mean).array().square().colwise().mean();
    t.pooled.segment(2 * h2 * g, h2) = mean.transpose();
    t.pooled.segment(2 * h2 * g + h2, h2) =
        var.transpose().array() + kPoolVarianceEpsilon;
  }
  t.embedding = p.we * t.pooled + p.be.col(0);
  t.hidden = t.embedding.cwiseMax(0.0);
  t.logits = p.wo * t.hidden + p.bo.col(0);
  return t;
}

struct XvecOutput {
  VectorXd logits;
  VectorXd embedding;
};

inline XvecOutput Forward(const XvecNet& net, const FeatureSegment& f) {
  auto t = ForwardTrace(net, f);
  return {std::move(t.logits), std::move(t.embedding)};
}

/// The x-vector: the embedding layer's pre-activation output.
inline VectorXd ExtractXvector(const XvecNet& net, const FeatureSegment& f) {
  return ForwardTrace(net, f).embedding;
}

inline double CrossEntropy(const VectorXd& logits, Eigen::Index label) {
  return LogSumExp(logits) - logits(label);
}

/// Adds the gradient of `weight * CE(sample)` to `grad`; returns the loss.
inline double BackwardSample(const XvecNet& net, const FeatureSegment& f,
                             Eigen::Index label, double weight,
                             XvecParams& grad) {
  EEGID_REQUIRE(label >= 0 && label < net.shape.num_classes, "label ", label,
                " out of range");
  const auto& p = net.params;
  const XvecTrace t = ForwardTrace(net, f);
  const double lse = LogSumExp(t.logits);
  VectorXd dlogits = (t.logits.array() - lse).exp();
  dlogits(label) -= 1.0;
  dlogits *= weight;

  grad.wo.noalias() += dlogits * t.hidden.transpose();
  grad.bo.col(0) += dlogits;
  VectorXd dz_e = p.wo.transpose() * dlogits;
  dz_e = (t.embedding.array() > 0).select(dz_e, 0.0);
  grad.we.noalias() += dz_e * t.pooled.transpose();
  grad.be.col(0) += dz_e;
  const VectorXd dpooled = p.we.transpose() * dz_e;

  // d mean/dx_i = 1/M;  d var/dx_i = 2 (x_i - mean) / M.
  const Eigen::Index groups = net.shape.PoolGroups();
  const Eigen::Index rows = t.a2.rows() / groups;
  const Eigen::Index h2 = net.shape.hidden2;
  const double inv_m = 1.0 / static_cast<double>(rows);
  MatrixXd dz2(t.a2.rows(), h2);
  for (Eigen::Index g = 0; g < groups; ++g) {
    const auto block = t.a2.middleRows(g * rows, rows);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    const Eigen::RowVectorXd dmean =
        dpooled.segment(2 * h2 * g, h2).transpose() * inv_m;
    const Eigen::RowVectorXd dvar =
        dpooled.segment(2 * h2 * g + h2, h2).transpose() * (2.0 * inv_m);
    MatrixXd da = (block.rowwise() - mean).array().rowwise() * dvar.array();
    da.rowwise() += dmean;
    dz2.middleRows(g * rows, rows) = da;
  }
  dz2 = (t.z2.array() > 0).select(dz2, 0.0);
  grad.w2.noalias() += dz2.transpose() * t.a1;
  grad.b2.col(0) += dz2.colwise().sum().transpose();
  MatrixXd dz1 = dz2 * p.w2;
  dz1 = (t.z1.array() > 0).select(dz1, 0.0);
  grad.w1.noalias() += dz1.transpose() * t.x;
  grad.b1.col(0) += dz1.colwise().sum().transpose();
  return weight * (lse - t.logits(label));
}

struct LabeledSegment {
  const FeatureSegment* feat;
  Eigen::Index label;
};

/// Gradients of the mean cross-entropy over `batch`.
inline XvecParams Backward(const XvecNet& net,
                           const std::vector<LabeledSegment>& batch,
                           double* loss = nullptr) {
  EEGID_REQUIRE(!batch.empty(), "empty batch");
  XvecParams grad = XvecParams::ZerosLike(net.params);
  const double w = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& s : batch) total += BackwardSample(net, *s.feat, s.label, w, grad);
  if (loss) *loss = total;
  return grad;
}

inline double MeanLoss(const XvecNet& net,
                       const std::vector<LabeledSegment>& data) {
  double total = 0.0;
  for (const auto& s : data)
    total += CrossEntropy(ForwardTrace(net, *s.feat).logits, s.label);
  return total / static_cast<double>(data.size());
}

struct XvecTrainReport {
  std::vector<double> train_loss;  // mean over the epoch's batches
  std::vector<double> val_loss;
  int best_epoch = -1;
  double initial_loss = 0.0;
};

/// Adam update: m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2;
/// p -= lr * m_hat / (sqrt(v_hat) + eps).
class Adam {
 public:
  Adam(const XvecParams& like, const TrainConfig& cfg)
      : cfg_(cfg), m_(XvecParams::ZerosLike(like)), v_(XvecParams::ZerosLike(like)) {}

  void Step(XvecParams& params, const XvecParams& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    auto p = params.Tensors();
    auto g = grad.Tensors();
    auto m = m_.Tensors();
    auto v = v_.Tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
      *m[i] = cfg_.beta1 * *m[i] + (1.0 - cfg_.beta1) * *g[i];
      *v[i] = cfg_.beta2 * *v[i] +
              (1.0 - cfg_.beta2) * g[i]->array().square().matrix();
      p[i]->array() -= cfg_.learning_rate * (m[i]->array() / c1) /
                       ((v[i]->array() / c2).sqrt() + cfg_.epsilon);
    }
  }

 private:
  TrainConfig cfg_;
  XvecParams m_, v_;
  int t_ = 0;
};

/// Mini-batch Adam on mean cross-entropy.  Training samples are put in a
/// canonical order (by labels) and then shuffled from the seed each epoch,
/// so results do not depend on input order.  Returns the parameters with
/// the best validation loss (training loss when no validation data).
inline XvecNet TrainXvector(XvecNet net,
                            std::vector<const FeatureSegment*> train,
                            std::vector<const FeatureSegment*> val,
                            const TrainConfig& cfg,
                            XvecTrainReport* report = nullptr) {
  cfg.Validate();
  EEGID_REQUIRE(!train.empty(), "no training segments");
  std::vector<std::string> classes;
  for (const auto* f : train) classes.push_back(f->labels.subject_id);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  EEGID_REQUIRE(classes.size() >= 2, "x-vector training needs >= 2 subjects");
  EEGID_REQUIRE(static_cast<Eigen::Index>(classes.size()) ==
                    net.shape.num_classes,
                "network has ", net.shape.num_classes, " outputs but training "
                "data has ", classes.size(), " subjects");
  net.classes = classes;
  net.train_config = cfg;

  auto by_labels = [](const FeatureSegment* a, const FeatureSegment* b) {
    return a->labels < b->labels;
  };
  std::stable_sort(train.begin(), train.end(), by_labels);
  std::stable_sort(val.begin(), val.end(), by_labels);

  // Input standardization from training frames.
  {
    const MatrixXd frames = PoolFrames(train);
    net.input_mean = frames.colwise().mean().transpose();
    net.input_scale =
        ((frames.rowwise() - net.input_mean.transpose()).array().square()
             .colwise().mean().sqrt().transpose()).max(1e-12);
  }

  auto label_of = [&](const std::string& id) -> Eigen::Index {
    auto it = std::lower_bound(classes.begin(), classes.end(), id);
    if (it == classes.end() || *it != id) return -1;
    return it - classes.begin();
  };
  std::vector<LabeledSegment> train_set, val_set;
  for (const auto* f : train) train_set.push_back({f, label_of(f->labels.subject_id)});
  for (const auto* f : val) {
    const auto l = label_of(f->labels.subject_id);
    if (l >= 0) val_set.push_back({f, l});
  }
  const auto& monitor = val_set.empty() ? train_set : val_set;

  XvecTrainReport local;
  XvecTrainReport& rep = report ? *report : local;
  rep = {};
  rep.initial_loss = MeanLoss(net, train_set);

  std::mt19937_64 rng(cfg.seed);
  Adam adam(net.params, cfg);
  XvecNet best = net;
  double best_loss = MeanLoss(net, monitor);
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t n = end - start;
      // Per-sample gradients in fixed slots, reduced in order.
      std::vector<XvecParams> parts(n, XvecParams::ZerosLike(net.params));
      std::vector<double> losses(n);
      const double w = 1.0 / static_cast<double>(n);
      ParallelFor(n, cfg.workers, [&](std::size_t i) {
        const auto& s = train_set[order[start + i]];
        losses[i] = BackwardSample(net, *s.feat, s.label, w, parts[i]);
      });
      XvecParams grad = std::move(parts[0]);
      double loss = losses[0];
      for (std::size_t i = 1; i < n; ++i) {
        grad += parts[i];
        loss += losses[i];
      }
      if (!std::isfinite(loss))
        throw NumericError(StrCat("x-vector training diverged (loss ", loss,
                                  ") in epoch ", epoch));
      adam.Step(net.params, grad);
      epoch_loss += loss;
      ++batches;
    }
    rep.train_loss.push_back(epoch_loss / batches);
    const double mon = MeanLoss(net, monitor);
    if (!std::isfinite(mon))
      throw NumericError(StrCat("x-vector training diverged in epoch ", epoch));
    if (!val_set.empty()) rep.val_loss.push_back(mon);
    if (mon < best_loss) {
      best_loss = mon;
      best = net;
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  best.provenance.seed = cfg.seed;
  return best;
}

// ---------------------------------------------------------------------------
// Model file ("XVEC1").

inline void WriteXvector(std::ostream& os, const XvecNet& net) {
  BinaryWriter w(os);
  const auto& s = net.shape;
  w.Magic("XVEC1");
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(s.mode));
  for (auto v : {s.input_dim, s.hidden1, s.hidden2, s.channels, s.embed_dim,
                 s.num_classes})
    w.Put<std::uint32_t>(static_cast<std::uint32_t>(v));
  for (const auto* t : net.params.Tensors()) w.PutMatrix(*t, true);
  w.PutMatrix(net.input_mean);
  w.PutMatrix(net.input_scale);
  for (const auto& c : net.classes) w.PutString(c);
  const auto& c = net.train_config;
  w.Put<double>(c.learning_rate);
  w.Put<double>(c.beta1);
  w.Put<double>(c.beta2);
  w.Put<double>(c.epsilon);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(c.batch_size));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(c.epochs));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(c.patience));
  w.Put<std::uint64_t>(c.seed);
  w.PutProvenance(net.provenance);
}

inline XvecNet ReadXvector(std::istream& is, const std::string& what) {
  BinaryReader r(is, what);
  r.ExpectMagic("XVEC1");
  XvecNet net;
  auto& s = net.shape;
  const auto mode = r.Get<std::uint8_t>();
  if (mode > 1) throw ArtifactError(StrCat(what, ": bad pooling mode"));
  s.mode = static_cast<StatsMode>(mode);
  for (auto* v : {&s.input_dim, &s.hidden1, &s.hidden2, &s.channels,
                  &s.embed_dim, &s.num_classes}) {
    *v = r.Get<std::uint32_t>();
    if (*v == 0 || *v > (1 << 20))
      throw ArtifactError(StrCat(what, ": implausible layer size"));
  }
  auto& p = net.params;
  p.w1 = r.GetMatrix(s.hidden1, s.input_dim, true);
  p.b1 = r.GetMatrix(s.hidden1, 1, true);
  p.w2 = r.GetMatrix(s.hidden2, s.hidden1, true);
  p.b2 = r.GetMatrix(s.hidden2, 1, true);
  p.we = r.GetMatrix(s.embed_dim, s.PooledDim(), true);
  p.be = r.GetMatrix(s.embed_dim, 1, true);
  p.wo = r.GetMatrix(s.num_classes, s.embed_dim, true);
  p.bo = r.GetMatrix(s.num_classes, 1, true);
  net.input_mean = r.GetMatrix(s.input_dim, 1);
  net.input_scale = r.GetMatrix(s.input_dim, 1);
  for (Eigen::Index i = 0; i < s.num_classes; ++i)
    net.classes.push_back(r.GetString());
  auto& c = net.train_config;
  c.learning_rate = r.Get<double>();
  c.beta1 = r.Get<double>();
  c.beta2 = r.Get<double>();
  c.epsilon = r.Get<double>();
  c.batch_size = static_cast<int>(r.Get<std::uint32_t>());
  c.epochs = static_cast<int>(r.Get<std::uint32_t>());
  c.patience = static_cast<int>(r.Get<std::uint32_t>());
  c.seed = r.Get<std::uint64_t>();
  net.provenance = r.GetProvenance();
  r.ExpectEnd();
  return net;
}

inline void SaveXvector(const std::string& path, const XvecNet& net) {
  auto os = OpenOut(path);
  WriteXvector(os, net);
}

inline XvecNet LoadXvector(const std::string& path) {
  auto is = OpenIn(path);
  return ReadXvector(is, path);
}

}  // namespace eegid
