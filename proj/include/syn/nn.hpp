#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "syn/common.hpp"
#include "syn/rng.hpp"

namespace syn::nn {

// ---------------------------------------------------------------------------
// Parameters

struct Parameter {
  std::string name;
  Mat value;
};

struct ParamStore {
  std::vector<Parameter> params;

  int add(const std::string& name, Mat value) {
    params.push_back({name, std::move(value)});
    return int(params.size()) - 1;
  }
  Mat& operator[](int i) { return params[i].value; }
  const Mat& operator[](int i) const { return params[i].value; }
  int size() const { return int(params.size()); }

  int64_t count() const {
    int64_t n = 0;
    for (const Parameter& p : params) n += p.value.size();
    return n;
  }
};

// Orthogonal(-style) init: QR of a Gaussian draw, scaled by gain.
inline Mat orthogonal(int rows, int cols, double gain, Rng& rng) {
  int r = std::max(rows, cols), c = std::min(rows, cols);
  Mat a(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Mat q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  Eigen::MatrixXd rmat = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (int j = 0; j < c; ++j)
    if (rmat(j, j) < 0) q.col(j) = -q.col(j);
  if (rows < cols) return gain * Mat(q.transpose());
  return gain * q;
}

// ---------------------------------------------------------------------------
// Tape-based reverse-mode autodiff on row-major matrices.

class Tape {
 public:
  using BackFn = std::function<void(Tape&)>;

  int push(Mat value) {
    values_.push_back(std::move(value));
    grads_.emplace_back();
    backs_.emplace_back();
#ifndef NDEBUG
    check(values_.back().allFinite(), "non-finite value in tape node " +
                                          std::to_string(values_.size() - 1));
#endif
    return int(values_.size()) - 1;
  }
  void set_back(int id, BackFn fn) { backs_[id] = std::move(fn); }

  // Leaf bound to a parameter; gradients are gathered on backward().
  int leaf(const ParamStore& store, int param_idx) {
    int id = push(store[param_idx]);
    param_nodes_.push_back({id, param_idx});
    return id;
  }

  const Mat& val(int id) const { return values_[id]; }
  bool has_grad(int id) const { return grads_[id].size() != 0; }
  Mat& grad(int id) {
    if (grads_[id].size() == 0)
      grads_[id] = Mat::Zero(values_[id].rows(), values_[id].cols());
    return grads_[id];
  }

  // Reverse sweep from a scalar (1x1) loss node. Accumulation follows the
  // fixed reverse program order, so gradients are bit-reproducible.
  void backward(int loss) {
    check(values_[loss].size() == 1, "loss must be scalar");
    grad(loss)(0, 0) = 1.0;
    for (int id = loss; id >= 0; --id)
      if (backs_[id] && has_grad(id)) backs_[id](*this);
  }

  // Per-parameter gradients (zero matrices where a parameter was unused).
  std::vector<Mat> param_grads(const ParamStore& store) {
    std::vector<Mat> out(store.size());
    for (int i = 0; i < store.size(); ++i)
      out[i] = Mat::Zero(store[i].rows(), store[i].cols());
    for (auto [node, pidx] : param_nodes_)
      if (has_grad(node)) out[pidx] += grad(node);
    return out;
  }

 private:
  std::vector<Mat> values_;
  std::vector<Mat> grads_;
  std::vector<BackFn> backs_;
  std::vector<std::pair<int, int>> param_nodes_;
};

// --- primitive ops ----------------------------------------------------------

inline int constant(Tape& t, Mat v) { return t.push(std::move(v)); }

inline int matmul(Tape& t, int a, int b) {
  int id = t.push(t.val(a) * t.val(b));
  t.set_back(id, [id, a, b](Tape& t2) {
    t2.grad(a) += t2.grad(id) * t2.val(b).transpose();
    t2.grad(b) += t2.val(a).transpose() * t2.grad(id);
  });
  return id;
}

// Row-independent product: each output row is computed from its input row
// alone, so per-point features are bit-identical under permutation,
// duplication, or batch-size changes. Slower than the blocked product;
// meant for per-point encoders, not trunk GEMMs.
inline int matmul_rows(Tape& t, int a, int b) {
  const Mat& x = t.val(a);
  const Mat& w = t.val(b);
  Mat v(x.rows(), w.cols());
  for (int i = 0; i < x.rows(); ++i) v.row(i).noalias() = x.row(i) * w;
  int id = t.push(std::move(v));
  t.set_back(id, [id, a, b](Tape& t2) {
    t2.grad(a) += t2.grad(id) * t2.val(b).transpose();
    t2.grad(b) += t2.val(a).transpose() * t2.grad(id);
  });
  return id;
}

inline int add(Tape& t, int a, int b) {
  int id = t.push(t.val(a) + t.val(b));
  t.set_back(id, [id, a, b](Tape& t2) {
    t2.grad(a) += t2.grad(id);
    t2.grad(b) += t2.grad(id);
  });
  return id;
}

inline int sub(Tape& t, int a, int b) {
  int id = t.push(t.val(a) - t.val(b));
  t.set_back(id, [id, a, b](Tape& t2) {
    t2.grad(a) += t2.grad(id);
    t2.grad(b) -= t2.grad(id);
  });
  return id;
}

// Row-vector bias broadcast over all rows of a.
inline int add_rowvec(Tape& t, int a, int b) {
  check(t.val(b).rows() == 1, "bias must be a row vector");
  Mat v = t.val(a);
  v.rowwise() += t.val(b).row(0);
  int id = t.push(std::move(v));
  t.set_back(id, [id, a, b](Tape& t2) {
    t2.grad(a) += t2.grad(id);
    t2.grad(b) += t2.grad(id).colwise().sum();
  });
  return id;
}

// Row-vector broadcast elementwise product (e.g. sigma * noise rows).
inline int mul_rowvec(Tape& t, int a, int b) {
  check(t.val(b).rows() == 1, "broadcast factor must be a row vector");
  Mat v = t.val(a).array().rowwise() * t.val(b).array().row(0);
  int id = t.push(std::move(v));
  t.set_back(id, [id, a, b](Tape& t2) {
    t2.grad(a).array() += t2.grad(id).array().rowwise() *
                          t2.val(b).array().row(0);
    t2.grad(b).array().row(0) +=
        (t2.grad(id).array() * t2.val(a).array()).colwise().sum();
  });
  return id;
}

inline int cmul(Tape& t, int a, int b) {
  int id = t.push(Mat(t.val(a).array() * t.val(b).array()));
  t.set_back(id, [id, a, b](Tape& t2) {
    t2.grad(a).array() += t2.grad(id).array() * t2.val(b).array();
    t2.grad(b).array() += t2.grad(id).array() * t2.val(a).array();
  });
  return id;
}

inline int scale(Tape& t, int a, double s) {
  int id = t.push(Mat(s * t.val(a)));
  t.set_back(id, [id, a, s](Tape& t2) { t2.grad(a) += s * t2.grad(id); });
  return id;
}

inline int add_scalar(Tape& t, int a, double s) {
  int id = t.push(Mat(t.val(a).array() + s));
  t.set_back(id, [id, a](Tape& t2) { t2.grad(a) += t2.grad(id); });
  return id;
}

inline int elu(Tape& t, int a) {
  Mat v = t.val(a).unaryExpr(
      [](double x) { return x > 0 ? x : std::expm1(x); });
  int id = t.push(std::move(v));
  t.set_back(id, [id, a](Tape& t2) {
    t2.grad(a).array() +=
        t2.grad(id).array() *
        t2.val(a).unaryExpr([](double x) { return x > 0 ? 1.0 : std::exp(x); })
            .array();
  });
  return id;
}

inline int exp_op(Tape& t, int a) {
  int id = t.push(Mat(t.val(a).array().exp()));
  t.set_back(id, [id, a](Tape& t2) {
    t2.grad(a).array() += t2.grad(id).array() * t2.val(id).array();
  });
  return id;
}

inline int log_op(Tape& t, int a) {
  int id = t.push(Mat(t.val(a).array().log()));
  t.set_back(id, [id, a](Tape& t2) {
    t2.grad(a).array() += t2.grad(id).array() / t2.val(a).array();
  });
  return id;
}

inline int square(Tape& t, int a) {
  int id = t.push(Mat(t.val(a).array().square()));
  t.set_back(id, [id, a](Tape& t2) {
    t2.grad(a).array() += 2.0 * t2.grad(id).array() * t2.val(a).array();
  });
  return id;
}

// Elementwise clamp; zero gradient outside [lo, hi] (pass-through inside).
inline int clamp_op(Tape& t, int a, double lo, double hi) {
  int id = t.push(Mat(t.val(a).array().max(lo).min(hi)));
  t.set_back(id, [id, a, lo, hi](Tape& t2) {
    t2.grad(a).array() +=
        t2.grad(id).array() *
        t2.val(a).unaryExpr([lo, hi](double x) {
            return (x >= lo && x <= hi) ? 1.0 : 0.0;
          }).array();
  });
  return id;
}

// Elementwise minimum; subgradient goes to the smaller input (a on ties).
inline int minimum(Tape& t, int a, int b) {
  int id = t.push(Mat(t.val(a).array().min(t.val(b).array())));
  t.set_back(id, [id, a, b](Tape& t2) {
    Eigen::ArrayXXd take_a =
        (t2.val(a).array() <= t2.val(b).array()).cast<double>();
    t2.grad(a).array() += t2.grad(id).array() * take_a;
    t2.grad(b).array() += t2.grad(id).array() * (1.0 - take_a);
  });
  return id;
}

inline int sum(Tape& t, int a) {
  Mat v(1, 1);
  v(0, 0) = t.val(a).sum();
  int id = t.push(std::move(v));
  t.set_back(id, [id, a](Tape& t2) {
    t2.grad(a).array() += t2.grad(id)(0, 0);
  });
  return id;
}

inline int mean(Tape& t, int a) {
  return scale(t, sum(t, a), 1.0 / double(t.val(a).size()));
}

// Sum along each row -> column vector (n x 1).
inline int rowsum(Tape& t, int a) {
  int id = t.push(Mat(t.val(a).rowwise().sum()));
  t.set_back(id, [id, a](Tape& t2) {
    t2.grad(a).array().colwise() += t2.grad(id).col(0).array();
  });
  return id;
}

inline int concat_cols(Tape& t, int a, int b) {
  check(t.val(a).rows() == t.val(b).rows(), "concat_cols: row mismatch");
  Mat v(t.val(a).rows(), t.val(a).cols() + t.val(b).cols());
  v << t.val(a), t.val(b);
  int id = t.push(std::move(v));
  t.set_back(id, [id, a, b](Tape& t2) {
    int ca = int(t2.val(a).cols());
    t2.grad(a) += t2.grad(id).leftCols(ca);
    t2.grad(b) += t2.grad(id).rightCols(t2.val(b).cols());
  });
  return id;
}

// Column-wise max over rows -> (1 x C); ties resolve to the lowest row
// index, and the gradient flows only to the argmax entries.
inline int maxpool_rows(Tape& t, int a, std::vector<int>* argmax = nullptr) {
  const Mat& x = t.val(a);
  check(x.rows() > 0, "maxpool over an empty set");
  Mat v(1, x.cols());
  std::vector<int> idx(x.cols());
  for (int c = 0; c < x.cols(); ++c) {
    int best = 0;
    for (int r = 1; r < x.rows(); ++r)
      if (x(r, c) > x(best, c)) best = r;
    idx[c] = best;
    v(0, c) = x(best, c);
  }
  if (argmax) *argmax = idx;
  int id = t.push(std::move(v));
  t.set_back(id, [id, a, idx](Tape& t2) {
    Mat& g = t2.grad(a);
    for (int c = 0; c < g.cols(); ++c) g(idx[c], c) += t2.grad(id)(0, c);
  });
  return id;
}

// ---------------------------------------------------------------------------
// Layers

struct Dense {
  int w = -1;  // (in x out)
  int b = -1;  // (1 x out)
};

inline Dense make_dense(ParamStore& store, const std::string& name, int in,
                        int out, double gain, Rng& rng) {
  Dense d;
  d.w = store.add(name + ".w", orthogonal(in, out, gain, rng));
  d.b = store.add(name + ".b", Mat::Zero(1, out));
  return d;
}

inline int dense_forward(Tape& t, const ParamStore& store, const Dense& d,
                         int x) {
  return add_rowvec(t, matmul(t, x, t.leaf(store, d.w) * 0 + t.leaf(store, d.w)),
                    t.leaf(store, d.b));
}

struct Mlp {
  std::vector<Dense> layers;
  bool rowwise = false;  // per-row products for exact set invariances

  static Mlp create(ParamStore& store, const std::string& name, int in,
                    const std::vector<int>& widths, Rng& rng,
                    double last_gain = 1.0) {
    Mlp m;
    int prev = in;
    for (size_t i = 0; i < widths.size(); ++i) {
      double gain = (i + 1 == widths.size()) ? last_gain : 1.0;
      m.layers.push_back(make_dense(store, name + ".l" + std::to_string(i),
                                    prev, widths[i], gain, rng));
      prev = widths[i];
    }
    return m;
  }

  // elu between layers; `final_activation` controls the last one.
  int forward(Tape& t, const ParamStore& store, int x,
              bool final_activation = true) const {
    for (size_t i = 0; i < layers.size(); ++i) {
      int prod = rowwise ? matmul_rows(t, x, t.leaf(store, layers[i].w))
                         : matmul(t, x, t.leaf(store, layers[i].w));
      x = add_rowvec(t, prod, t.leaf(store, layers[i].b));
      if (final_activation || i + 1 < layers.size()) x = elu(t, x);
    }
    return x;
  }
};

// ---------------------------------------------------------------------------
// PointNet: shared per-point MLP (6 -> 64 -> 128 -> c_out), elementwise max.

struct PointNet {
  Mlp mlp;
  int c_out = 128;

  static PointNet create(ParamStore& store, const std::string& name, Rng& rng,
                         int c_out = 128) {
    PointNet p;
    p.c_out = c_out;
    p.mlp = Mlp::create(store, name, 6, {64, 128, c_out}, rng);
    p.mlp.rowwise = true;
    return p;
  }

  // points: N x 6 (xyz + one-hot). Returns the pooled latent node (1 x
  // c_out) and, optionally, the maximizing point index per channel.
  int forward(Tape& t, const ParamStore& store, const Mat& points,
              std::vector<int>* argmax = nullptr) const {
    check(points.rows() > 0, "PointNet input cloud is empty");
    check(points.cols() == 6, "PointNet expects xyz + one-hot rows");
    int x = constant(t, points);
    x = mlp.forward(t, store, x, /*final_activation=*/true);
    return maxpool_rows(t, x, argmax);
  }
};

// ---------------------------------------------------------------------------
// Adam

struct Adam {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step_count = 0;
  std::vector<Mat> m, v;

  explicit Adam(double lr_ = 1e-4) : lr(lr_) {}

  void step(ParamStore& store, const std::vector<Mat>& grads) {
    check(int(grads.size()) == store.size(), "Adam: gradient count mismatch");
    if (m.empty()) {
      for (int i = 0; i < store.size(); ++i) {
        m.push_back(Mat::Zero(store[i].rows(), store[i].cols()));
        v.push_back(Mat::Zero(store[i].rows(), store[i].cols()));
      }
    }
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, double(step_count));
    double bc2 = 1.0 - std::pow(beta2, double(step_count));
    for (int i = 0; i < store.size(); ++i) {
      check(grads[i].rows() == store[i].rows() &&
                grads[i].cols() == store[i].cols(),
            "Adam: shape mismatch for " + store.params[i].name);
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i].array() =
          beta2 * v[i].array() + (1.0 - beta2) * grads[i].array().square();
      store[i].array() -=
          lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
    }
  }
};

// Global gradient-norm clipping; returns the pre-clip norm.
inline double clip_grad_norm(std::vector<Mat>& grads, double max_norm) {
  double sq = 0;
  for (const Mat& g : grads) sq += g.squaredNorm();
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    double s = max_norm / norm;
    for (Mat& g : grads) g *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Gaussian policy + value heads over a feature trunk.

constexpr double kLogStdInit = -1.0;
constexpr double kLogStdLo = -5.0;
constexpr double kLogStdHi = 2.0;

struct GaussianHead {
  Dense mean;
  int log_std = -1;  // (1 x act_dim), state independent
  Dense value;

  static GaussianHead create(ParamStore& store, const std::string& name,
                             int feat, int act_dim, Rng& rng) {
    GaussianHead h;
    h.mean = make_dense(store, name + ".mean", feat, act_dim, 0.01, rng);
    h.log_std = store.add(name + ".log_std",
                          Mat::Constant(1, act_dim, kLogStdInit));
    h.value = make_dense(store, name + ".value", feat, 1, 1.0, rng);
    return h;
  }
};

struct PolicyEval {
  int mean = -1;     // node, (B x act)
  int log_std = -1;  // node, (1 x act) after clamping
  int value = -1;    // node, (B x 1)
};

inline PolicyEval head_forward(Tape& t, const ParamStore& store,
                               const GaussianHead& h, int feat) {
  PolicyEval e;
  e.mean = add_rowvec(t, matmul(t, feat, t.leaf(store, h.mean.w)),
                      t.leaf(store, h.mean.b));
  e.log_std = clamp_op(t, t.leaf(store, h.log_std), kLogStdLo, kLogStdHi);
  e.value = add_rowvec(t, matmul(t, feat, t.leaf(store, h.value.w)),
                       t.leaf(store, h.value.b));
  return e;
}

// Differentiable diagonal-Gaussian log density of `actions` (constant)
// under the evaluated policy; returns a (B x 1) node.
inline int gaussian_log_prob(Tape& t, const PolicyEval& e, const Mat& actions) {
  int act = constant(t, actions);
  int diff = sub(t, act, e.mean);
  int inv_var = exp_op(t, scale(t, e.log_std, -2.0));  // (1 x d)
  int quad = rowsum(t, mul_rowvec(t, square(t, diff), inv_var));  // (B x 1)
  int sum_log_std = sum(t, e.log_std);  // (1 x 1)
  double d = double(actions.cols());
  int lp = scale(t, quad, -0.5);
  lp = add_scalar(t, lp, -0.5 * d * std::log(2.0 * M_PI));
  // Broadcast the summed log-std across the batch.
  int ones = constant(t, Mat::Ones(actions.rows(), 1));
  lp = sub(t, lp, matmul(t, ones, sum_log_std));
  return lp;
}

// Sample with reparametrized noise (fixed rng); no_grad convenience.
inline Mat gaussian_sample(const Mat& mean, const Mat& log_std, Rng& rng) {
  Mat out(mean.rows(), mean.cols());
  for (int i = 0; i < mean.rows(); ++i)
    for (int j = 0; j < mean.cols(); ++j)
      out(i, j) = mean(i, j) + std::exp(std::clamp(log_std(0, j), kLogStdLo,
                                                   kLogStdHi)) *
                                   rng.normal();
  return out;
}

inline double gaussian_log_prob_scalar(const VecX& action, const VecX& mean,
                                       const VecX& log_std) {
  double lp = -0.5 * double(action.size()) * std::log(2.0 * M_PI);
  for (int j = 0; j < action.size(); ++j) {
    double ls = std::clamp(log_std[j], kLogStdLo, kLogStdHi);
    double z = (action[j] - mean[j]) / std::exp(ls);
    lp += -0.5 * z * z - ls;
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Policy assemblies

// Oracle teacher: dense trunk over the privileged observation.
struct TeacherPolicy {
  Mlp trunk;
  GaussianHead head;
  int obs_dim = 0;

  static TeacherPolicy create(ParamStore& store, int obs_dim, int act_dim,
                              Rng& rng) {
    TeacherPolicy p;
    p.obs_dim = obs_dim;
    p.trunk = Mlp::create(store, "teacher.trunk", obs_dim, {512, 256, 128}, rng);
    p.head = GaussianHead::create(store, "teacher.head", 128, act_dim, rng);
    return p;
  }

  PolicyEval forward(Tape& t, const ParamStore& store, const Mat& obs) const {
    check(obs.cols() == obs_dim, "teacher observation width mismatch");
    int feat = trunk.forward(t, store, constant(t, obs));
    return head_forward(t, store, head, feat);
  }
};

// Point-cloud student: PointNet latent joined with a proprio branch.
struct StudentPolicy {
  PointNet pnet;
  Mlp proprio;
  Mlp trunk;
  GaussianHead head;
  int proprio_dim = 0;

  static StudentPolicy create(ParamStore& store, int proprio_dim, int act_dim,
                              Rng& rng, int c_out = 128) {
    StudentPolicy p;
    p.proprio_dim = proprio_dim;
    p.pnet = PointNet::create(store, "student.pnet", rng, c_out);
    p.proprio = Mlp::create(store, "student.proprio", proprio_dim, {128}, rng);
    p.trunk = Mlp::create(store, "student.trunk", c_out + 128, {256, 128}, rng);
    p.head = GaussianHead::create(store, "student.head", 128, act_dim, rng);
    return p;
  }

  // clouds: one (N_i x 6) matrix per batch row of `proprio`.
  PolicyEval forward(Tape& t, const ParamStore& store,
                     const std::vector<Mat>& clouds, const Mat& proprio_obs,
                     std::vector<std::vector<int>>* argmax = nullptr) const {
    check(int(clouds.size()) == proprio_obs.rows(),
          "one cloud per proprio row required");
    check(proprio_obs.cols() == proprio_dim, "student proprio width mismatch");
    if (argmax) argmax->resize(clouds.size());
    int latents = -1;
    for (size_t i = 0; i < clouds.size(); ++i) {
      int l = pnet.forward(t, store, clouds[i],
                           argmax ? &(*argmax)[i] : nullptr);
      latents = (i == 0) ? l : [&] {
        // Stack pooled rows into a (B x c_out) node.
        int id = t.push([&] {
          Mat v(t.val(latents).rows() + 1, t.val(l).cols());
          v << t.val(latents), t.val(l);
          return v;
        }());
        int prev = latents;
        t.set_back(id, [id, prev, l](Tape& t2) {
          t2.grad(prev) += t2.grad(id).topRows(t2.val(prev).rows());
          t2.grad(l) += t2.grad(id).bottomRows(1);
        });
        return id;
      }();
    }
    int pr = proprio.forward(t, store, constant(t, proprio_obs));
    int feat = trunk.forward(t, store, concat_cols(t, latents, pr));
    return head_forward(t, store, head, feat);
  }
};

// Cloud points + one-hot labels as the (N x 6) PointNet input.
template <typename Cloud>
inline Mat cloud_input(const Cloud& cloud) {
  Mat m(cloud.points.rows(), 6);
  m << cloud.points, cloud.labels;
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, JSON header (names/shapes/meta), LE float64 payload.

constexpr char kCkptMagic[8] = {'S', 'Y', 'N', 'C', 'K', 'P', 'T', '1'};

inline void save_checkpoint(const ParamStore& store, const std::string& path,
                            const nlohmann::json& meta = {}) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  nlohmann::json header;
  header["meta"] = meta;
  header["params"] = nlohmann::json::array();
  for (const Parameter& p : store.params)
    header["params"].push_back({{"name", p.name},
                                {"rows", p.value.rows()},
                                {"cols", p.value.cols()}});
  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write checkpoint: " + path);
  out.write(kCkptMagic, 8);
  uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), std::streamsize(hs.size()));
  for (const Parameter& p : store.params)
    out.write(reinterpret_cast<const char*>(p.value.data()),
              std::streamsize(sizeof(double) * size_t(p.value.size())));
  check(out.good(), "short write on checkpoint: " + path);
}

inline nlohmann::json load_checkpoint(ParamStore& store,
                                      const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  check(in.good() && std::memcmp(magic, kCkptMagic, 8) == 0,
        "bad checkpoint magic: " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  nlohmann::json header = nlohmann::json::parse(hs);
  const auto& plist = header.at("params");
  check(int(plist.size()) == store.size(),
        "checkpoint parameter count mismatch: " + path);
  for (int i = 0; i < store.size(); ++i) {
    const auto& e = plist[size_t(i)];
    check(e.at("name").get<std::string>() == store.params[i].name,
          "checkpoint parameter name mismatch at index " + std::to_string(i));
    int rows = e.at("rows").get<int>(), cols = e.at("cols").get<int>();
    check(rows == store[i].rows() && cols == store[i].cols(),
          "checkpoint shape mismatch for " + store.params[i].name);
    in.read(reinterpret_cast<char*>(store[i].data()),
            std::streamsize(sizeof(double) * size_t(store[i].size())));
  }
  check(bool(in), "truncated checkpoint: " + path);
  return header.at("meta");
}

}  // namespace syn::nn
