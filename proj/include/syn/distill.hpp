#pragma once

#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "syn/rl.hpp"

namespace syn {

// ---------------------------------------------------------------------------
// Symmetric Chamfer distance

inline double chamfer_distance(const Mat& a, const Mat& b) {
  check(a.rows() > 0 && b.rows() > 0, "Chamfer needs nonempty clouds");
  check(a.cols() == 3 && b.cols() == 3, "Chamfer operates on xyz clouds");
  double fwd = 0, bwd = 0;
  for (int i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < b.rows(); ++j)
      best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    fwd += best;
  }
  for (int j = 0; j < b.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < a.rows(); ++i)
      best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    bwd += best;
  }
  return fwd / double(a.rows()) + bwd / double(b.rows());
}

// Tape op: Chamfer between a reconstruction node y (M x 3) and a fixed
// target cloud x (N x 3). The nearest-neighbor assignment is held fixed in
// the backward pass, which is the exact gradient almost everywhere.
inline int chamfer_op(nn::Tape& t, int y, const Mat& x) {
  const Mat& yv = t.val(y);
  check(x.cols() == 3 && yv.cols() == 3, "Chamfer operates on xyz clouds");
  int n = int(x.rows()), m = int(yv.rows());
  std::vector<int> nn_xy(n), nn_yx(m);
  double fwd = 0, bwd = 0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      double d = (x.row(i) - yv.row(j)).squaredNorm();
      if (d < best) best = d, nn_xy[i] = j;
    }
    fwd += best;
  }
  for (int j = 0; j < m; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      double d = (x.row(i) - yv.row(j)).squaredNorm();
      if (d < best) best = d, nn_yx[j] = i;
    }
    bwd += best;
  }
  int id = t.push(Mat::Constant(1, 1, fwd / n + bwd / m));
  t.set_back(id, [id, y, x, nn_xy, nn_yx, n, m](nn::Tape& t2) {
    double g = t2.grad(id)(0, 0);
    const Mat& yv2 = t2.val(y);
    Mat& gy = t2.grad(y);
    for (int i = 0; i < n; ++i)
      gy.row(nn_xy[i]) += g * 2.0 / n * (yv2.row(nn_xy[i]) - x.row(i));
    for (int j = 0; j < m; ++j)
      gy.row(j) += g * 2.0 / m * (yv2.row(j) - x.row(nn_yx[j]));
  });
  return id;
}

// ---------------------------------------------------------------------------
// Shape-embedding autoencoder: per-point MLP encoder pooled to f (32), MLP
// decoder back to a fixed-size reconstruction cloud.

constexpr int kShapePoints = 128;  // M canonical surface samples per object

struct ShapeEmbedConfig {
  int epochs = 300;
  double lr = 1e-3;
  int points = kShapePoints;

  void validate() const {
    check(epochs > 0 && lr > 0 && points > 0, "shape config must be positive");
  }
};

struct ShapeEmbeddingModel {
  nn::Mlp encoder;  // per-point 3 -> 64 -> 64 -> 32, max-pooled
  nn::Mlp decoder;  // 32 -> 256 -> 3*M

  static ShapeEmbeddingModel create(nn::ParamStore& store, Rng& rng,
                                    int points = kShapePoints) {
    ShapeEmbeddingModel m;
    m.encoder = nn::Mlp::create(store, "shape.enc", 3, {64, 64, kShapeEmbedding},
                                rng);
    m.encoder.rowwise = true;
    m.decoder = nn::Mlp::create(store, "shape.dec", kShapeEmbedding,
                                {256, 3 * points}, rng);
    return m;
  }

  int encode(nn::Tape& t, const nn::ParamStore& store, const Mat& cloud) const {
    check(cloud.cols() == 3, "shape encoder expects xyz clouds");
    int x = encoder.forward(t, store, nn::constant(t, cloud));
    return nn::maxpool_rows(t, x);  // 1 x 32
  }

  // Returns the reconstruction as an (M x 3) node.
  int decode(nn::Tape& t, const nn::ParamStore& store, int f) const {
    int flat = decoder.forward(t, store, f, /*final_activation=*/false);
    int m = int(t.val(flat).cols()) / 3;
    int id = t.push([&] {
      Mat v(m, 3);
      for (int i = 0; i < m; ++i)
        for (int c = 0; c < 3; ++c) v(i, c) = t.val(flat)(0, 3 * i + c);
      return v;
    }());
    t.set_back(id, [id, flat, m](nn::Tape& t2) {
      for (int i = 0; i < m; ++i)
        for (int c = 0; c < 3; ++c)
          t2.grad(flat)(0, 3 * i + c) += t2.grad(id)(i, c);
    });
    return id;
  }
};

struct ShapeEmbeddings {
  std::map<std::string, VecX> table;  // object id -> frozen f
  double initial_chamfer = 0;         // mean over objects at initialization
  double final_chamfer = 0;

  const VecX& at(const std::string& id) const {
    auto it = table.find(id);
    check(it != table.end(), "no shape embedding for object: " + id);
    return it->second;
  }
};

inline Mat canonical_cloud(const ObjectSpec& spec, int points, Rng& rng) {
  std::vector<Vec3> pts = sample_surface(spec.render, points, rng);
  Mat m(int(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) m.row(int(i)) = pts[i].transpose();
  return m;
}

inline ShapeEmbeddings train_shape_embeddings(
    const std::vector<const ObjectSpec*>& objects, const ShapeEmbedConfig& cfg,
    uint64_t seed) {
  cfg.validate();
  check(objects.size() >= 2, "shape embedding training needs >= 2 objects");
  Rng root(seed);
  Rng init_rng = root.fork(1);
  Rng sample_rng = root.fork(2);
  Rng order_rng = root.fork(3);

  std::vector<Mat> clouds;
  for (const ObjectSpec* o : objects)
    clouds.push_back(canonical_cloud(*o, cfg.points, sample_rng));

  nn::ParamStore store;
  ShapeEmbeddingModel model =
      ShapeEmbeddingModel::create(store, init_rng, cfg.points);
  nn::Adam opt(cfg.lr);

  auto mean_chamfer = [&] {
    double sum = 0;
    for (const Mat& c : clouds) {
      nn::Tape t;
      int y = model.decode(t, store, model.encode(t, store, c));
      sum += chamfer_distance(t.val(y), c);
    }
    return sum / double(clouds.size());
  };

  ShapeEmbeddings out;
  out.initial_chamfer = mean_chamfer();

  std::vector<int> order(clouds.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[order_rng.uniform_index(i + 1)]);
    for (int idx : order) {
      nn::Tape t;
      int loss =
          chamfer_op(t, model.decode(t, store, model.encode(t, store, clouds[idx])),
                     clouds[idx]);
      check(std::isfinite(t.val(loss)(0, 0)), "non-finite Chamfer loss");
      t.backward(loss);
      auto grads = t.param_grads(store);
      nn::clip_grad_norm(grads, 1.0);
      opt.step(store, grads);
    }
  }
  out.final_chamfer = mean_chamfer();

  for (size_t i = 0; i < objects.size(); ++i) {
    nn::Tape t;
    int f = model.encode(t, store, clouds[i]);
    out.table[objects[i]->name] = t.val(f).row(0).transpose();
  }
  return out;
}

inline ShapeEmbeddings train_shape_embeddings(const ObjectCatalog& catalog,
                                              const ShapeEmbedConfig& cfg,
                                              uint64_t seed) {
  std::vector<const ObjectSpec*> objects;
  for (const auto& [id, spec] : catalog) objects.push_back(&spec);
  return train_shape_embeddings(objects, cfg, seed);
}

inline void save_embeddings(const ShapeEmbeddings& e, const std::string& path) {
  nlohmann::json j;
  j["initial_chamfer"] = e.initial_chamfer;
  j["final_chamfer"] = e.final_chamfer;
  for (const auto& [id, f] : e.table)
    j["table"][id] = std::vector<double>(f.data(), f.data() + f.size());
  std::ofstream out(path);
  check(out.good(), "cannot write embeddings: " + path);
  out << j.dump(1) << "\n";
}

inline ShapeEmbeddings load_embeddings(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot read embeddings: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  ShapeEmbeddings e;
  e.initial_chamfer = j.at("initial_chamfer").get<double>();
  e.final_chamfer = j.at("final_chamfer").get<double>();
  for (const auto& [id, arr] : j.at("table").items()) {
    auto v = arr.get<std::vector<double>>();
    check(int(v.size()) == kShapeEmbedding, "embedding width mismatch");
    e.table[id] = Eigen::Map<const VecX>(v.data(), v.size());
  }
  return e;
}

// Per-episode f for an env: mean of the frozen embeddings of the bodies in
// play (they share one object id except in the double-ball task, where both
// bodies are the same object anyway).
inline std::function<VecX(const Env&)> make_shape_embed_fn(
    const ShapeEmbeddings& table) {
  return [&table](const Env& env) {
    VecX f = VecX::Zero(kShapeEmbedding);
    for (const RigidBody& b : env.world().bodies) f += table.at(b.object_id);
    return VecX(f / double(env.world().bodies.size()));
  };
}

// ---------------------------------------------------------------------------
// Teacher dataset

struct TransitionRecord {
  VecX proprio;  // stacked student frames + k
  Mat cloud;     // N x 6, xyz + one-hot source labels
  VecX action;   // deterministic teacher mean, clamped to [-1, 1]
  int episode = 0;
  int step = 0;
  std::string task;
};

struct Dataset {
  std::vector<TransitionRecord> records;
};

inline void save_dataset(const Dataset& ds, const std::string& index_path) {
  std::ofstream idx(index_path);
  std::ofstream blob(index_path + ".blob", std::ios::binary);
  check(idx.good() && blob.good(), "cannot write dataset: " + index_path);
  uint64_t offset = 0;
  auto put = [&](const double* p, uint64_t n) {
    blob.write(reinterpret_cast<const char*>(p),
               std::streamsize(n * sizeof(double)));
    uint64_t at = offset;
    offset += n;
    return at;
  };
  for (const TransitionRecord& r : ds.records) {
    nlohmann::json j;
    j["episode"] = r.episode;
    j["step"] = r.step;
    j["task"] = r.task;
    j["action"] =
        std::vector<double>(r.action.data(), r.action.data() + r.action.size());
    j["proprio_offset"] = put(r.proprio.data(), uint64_t(r.proprio.size()));
    j["proprio_len"] = r.proprio.size();
    j["cloud_offset"] = put(r.cloud.data(), uint64_t(r.cloud.size()));
    j["cloud_rows"] = r.cloud.rows();
    j["cloud_cols"] = r.cloud.cols();
    idx << j.dump() << "\n";
  }
}

inline Dataset load_dataset(const std::string& index_path) {
  std::ifstream idx(index_path);
  std::ifstream blob(index_path + ".blob", std::ios::binary);
  check(idx.good() && blob.good(), "cannot read dataset: " + index_path);
  Dataset ds;
  auto get = [&](double* p, uint64_t off, uint64_t n) {
    blob.seekg(std::streamoff(off * sizeof(double)));
    blob.read(reinterpret_cast<char*>(p), std::streamsize(n * sizeof(double)));
    check(blob.good(), "dataset blob truncated: " + index_path);
  };
  for (std::string line; std::getline(idx, line);) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    TransitionRecord r;
    r.episode = j.at("episode").get<int>();
    r.step = j.at("step").get<int>();
    r.task = j.at("task").get<std::string>();
    auto act = j.at("action").get<std::vector<double>>();
    r.action = Eigen::Map<const VecX>(act.data(), long(act.size()));
    r.proprio.resize(j.at("proprio_len").get<long>());
    get(r.proprio.data(), j.at("proprio_offset").get<uint64_t>(),
        uint64_t(r.proprio.size()));
    r.cloud.resize(j.at("cloud_rows").get<long>(),
                   j.at("cloud_cols").get<long>());
    get(r.cloud.data(), j.at("cloud_offset").get<uint64_t>(),
        uint64_t(r.cloud.size()));
    ds.records.push_back(std::move(r));
  }
  return ds;
}

// Deterministic teacher action: the Gaussian mean, clamped to the action box.
inline VecX teacher_mean_action(const nn::TeacherPolicy& policy,
                                const nn::ParamStore& store, const VecX& obs) {
  nn::Tape t;
  Mat o(1, obs.size());
  o.row(0) = obs.transpose();
  nn::PolicyEval e = policy.forward(t, store, o);
  return t.val(e.mean).row(0).transpose().cwiseMax(-1.0).cwiseMin(1.0);
}

struct DistillConfig {
  int n_envs = 64;
  int steps_per_iter = 200;   // student steps per DAgger iteration
  int minibatch = 1024;
  int epochs = 400;           // BC cap; stops early on a held-out plateau
  double lr = 5e-5;
  int dataset_size = 200000;  // paper: 5,120,000
  int dagger_iters = 4;
  int dagger_epochs = 20;     // retraining passes per aggregation
  double holdout_frac = 0.1;
  double plateau_tol = 1e-5;  // stop when held-out MSE improves less than this
  int plateau_patience = 5;

  void validate() const {
    check(n_envs > 0 && steps_per_iter > 0 && minibatch > 0 && epochs > 0 &&
              lr > 0 && dataset_size > 0 && dagger_iters >= 0,
          "distill config must be positive");
  }
};

inline Dataset collect_teacher_dataset(const nn::TeacherPolicy& teacher,
                                       const nn::ParamStore& teacher_store,
                                       const TaskSpec& task,
                                       const ObjectCatalog& catalog,
                                       const HandModel& model,
                                       EnvConfig env_cfg, int n,
                                       int n_envs, uint64_t seed,
                                       std::function<VecX(const Env&)> embed =
                                           nullptr) {
  check(n > 0 && n_envs > 0, "dataset collection needs positive sizes");
  env_cfg.build_clouds = true;
  Rng root(seed);
  std::vector<Env> envs;
  std::vector<Rng> cloud_rngs;
  envs.reserve(n_envs);
  for (int e = 0; e < n_envs; ++e) {
    envs.emplace_back(task, &catalog, &model, env_cfg,
                      root.fork(100 + uint64_t(e)), embed);
    cloud_rngs.push_back(root.fork(10000 + uint64_t(e)));
  }
  std::vector<int> episode(n_envs, 0);

  Dataset ds;
  ds.records.reserve(n);
  while (int(ds.records.size()) < n) {
    for (int e = 0; e < n_envs && int(ds.records.size()) < n; ++e) {
      VecX action = teacher_mean_action(teacher, teacher_store,
                                        envs[e].teacher_obs().vec);
      StudentObservation so = envs[e].student_obs(cloud_rngs[e]);
      TransitionRecord r;
      r.proprio = so.proprio;
      r.cloud = nn::cloud_input(so.cloud);
      r.action = action;
      r.episode = episode[e];
      r.step = envs[e].step_count();
      r.task = task.name;
      ds.records.push_back(std::move(r));
      if (envs[e].step(action).done) {
        envs[e].reset_episode();
        ++episode[e];
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Behavior cloning

inline double student_mse(const nn::StudentPolicy& student,
                          const nn::ParamStore& store,
                          const Dataset& ds, const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  double sum = 0;
  for (int i : idx) {
    nn::Tape t;
    Mat proprio(1, ds.records[i].proprio.size());
    proprio.row(0) = ds.records[i].proprio.transpose();
    nn::PolicyEval e =
        student.forward(t, store, {ds.records[i].cloud}, proprio);
    sum += (t.val(e.mean).row(0).transpose() - ds.records[i].action)
               .squaredNorm() /
           double(ds.records[i].action.size());
  }
  return sum / double(idx.size());
}

struct BcResult {
  std::vector<double> train_loss;    // per epoch
  std::vector<double> holdout_loss;  // per epoch
};

inline BcResult bc_train(nn::StudentPolicy& student, nn::ParamStore& store,
                         const Dataset& ds, const DistillConfig& cfg,
                         Rng& rng, nn::Adam* opt_in = nullptr,
                         int max_epochs = -1) {
  cfg.validate();
  check(!ds.records.empty(), "BC needs a nonempty dataset");
  int n = int(ds.records.size());
  int n_hold = std::min(n - 1, int(cfg.holdout_frac * n));
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(all[i], all[rng.uniform_index(uint64_t(i) + 1)]);
  std::vector<int> hold(all.begin(), all.begin() + n_hold);
  std::vector<int> train(all.begin() + n_hold, all.end());

  nn::Adam local(cfg.lr);
  nn::Adam& opt = opt_in ? *opt_in : local;
  int epochs = max_epochs > 0 ? max_epochs : cfg.epochs;
  BcResult out;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = train.size() - 1; i > 0; --i)
      std::swap(train[i], train[rng.uniform_index(i + 1)]);
    double epoch_loss = 0;
    int batches = 0;
    for (size_t start = 0; start < train.size();
         start += size_t(cfg.minibatch)) {
      size_t stop = std::min(train.size(), start + size_t(cfg.minibatch));
      nn::Tape t;
      std::vector<Mat> clouds;
      Mat proprio(long(stop - start), ds.records[0].proprio.size());
      Mat target(long(stop - start), ds.records[0].action.size());
      for (size_t i = start; i < stop; ++i) {
        const TransitionRecord& r = ds.records[train[i]];
        clouds.push_back(r.cloud);
        proprio.row(long(i - start)) = r.proprio.transpose();
        target.row(long(i - start)) = r.action.transpose();
      }
      nn::PolicyEval e = student.forward(t, store, clouds, proprio);
      int err = nn::sub(t, e.mean, nn::constant(t, target));
      int loss = nn::mean(t, nn::square(t, err));
      double lv = t.val(loss)(0, 0);
      check(std::isfinite(lv), "non-finite BC loss");
      t.backward(loss);
      auto grads = t.param_grads(store);
      nn::clip_grad_norm(grads, 1.0);
      opt.lr = cfg.lr;
      opt.step(store, grads);
      epoch_loss += lv;
      ++batches;
    }
    out.train_loss.push_back(epoch_loss / std::max(1, batches));
    out.holdout_loss.push_back(student_mse(student, store, ds, hold));
    double h = hold.empty() ? out.train_loss.back() : out.holdout_loss.back();
    if (h < best - cfg.plateau_tol) {
      best = h;
      stale = 0;
    } else if (++stale >= cfg.plateau_patience) {
      break;
    }
    log_debug("bc epoch %d train %.6f holdout %.6f", epoch,
              out.train_loss.back(), out.holdout_loss.back());
  }
  return out;
}

// ---------------------------------------------------------------------------
// DAgger: pure student rollouts labeled by the teacher, aggregated into the
// retained BC dataset.

inline void dagger_train(nn::StudentPolicy& student, nn::ParamStore& store,
                         const nn::TeacherPolicy& teacher,
                         const nn::ParamStore& teacher_store,
                         const TaskSpec& task, const ObjectCatalog& catalog,
                         const HandModel& model, EnvConfig env_cfg,
                         Dataset& dataset, const DistillConfig& cfg,
                         uint64_t seed,
                         std::function<VecX(const Env&)> embed = nullptr) {
  cfg.validate();
  env_cfg.build_clouds = true;
  Rng root(seed);
  Rng train_rng = root.fork(1);
  std::vector<Env> envs;
  std::vector<Rng> cloud_rngs;
  for (int e = 0; e < cfg.n_envs; ++e) {
    envs.emplace_back(task, &catalog, &model, env_cfg,
                      root.fork(200 + uint64_t(e)), embed);
    cloud_rngs.push_back(root.fork(20000 + uint64_t(e)));
  }
  std::vector<int> episode(cfg.n_envs, 0);
  nn::Adam opt(cfg.lr);

  for (int iter = 0; iter < cfg.dagger_iters; ++iter) {
    for (int s = 0; s < cfg.steps_per_iter; ++s) {
      for (int e = 0; e < cfg.n_envs; ++e) {
        StudentObservation so = envs[e].student_obs(cloud_rngs[e]);
        TransitionRecord r;
        r.proprio = so.proprio;
        r.cloud = nn::cloud_input(so.cloud);
        r.action = teacher_mean_action(teacher, teacher_store,
                                       envs[e].teacher_obs().vec);
        r.episode = episode[e];
        r.step = envs[e].step_count();
        r.task = task.name;
        dataset.records.push_back(std::move(r));

        // Student drives the rollout; the teacher only labels it.
        nn::Tape t;
        Mat proprio(1, so.proprio.size());
        proprio.row(0) = so.proprio.transpose();
        nn::PolicyEval ev =
            student.forward(t, store, {dataset.records.back().cloud}, proprio);
        VecX a = t.val(ev.mean).row(0).transpose().cwiseMax(-1.0).cwiseMin(1.0);
        if (envs[e].step(a).done) {
          envs[e].reset_episode();
          ++episode[e];
        }
      }
    }
    bc_train(student, store, dataset, cfg, train_rng, &opt, cfg.dagger_epochs);
    log_info("dagger iter %d dataset %zu", iter, dataset.records.size());
  }
}

}  // namespace syn
