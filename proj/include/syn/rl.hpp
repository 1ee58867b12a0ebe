#pragma once

#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "syn/nn.hpp"
#include "syn/synesthesia.hpp"
#include "syn/tasks.hpp"

namespace syn {

// ---------------------------------------------------------------------------
// Environment wrapper: one episode owner, deterministic per seed.

struct EnvConfig {
  ControlConfig control;
  ContactParams contact;
  RewardConfig reward;
  // Control period = dt_sim * substeps = 0.1 s. A body held by two stiff
  // contacts sits at the explicit stability boundary for dt 0.005
  // (sqrt(2 k_n w) dt ~ 2) and sustains a period-2 bounce that pumps spin;
  // halving dt moves every observed contact stack inside the boundary.
  double dt_sim = 0.0025;
  int substeps = 40;
  bool build_clouds = false;
  CameraSpec camera = make_default_camera();
  // Instrumentation hooks: `script` mutates the world between the physics
  // update and the reward/rotation accounting; `kinematic` skips the
  // dynamics entirely so scripted motion is measured exactly.
  std::function<void(WorldState&, int)> script;
  bool kinematic = false;
};

class Env {
 public:
  Env(TaskSpec task, const ObjectCatalog* catalog, const HandModel* model,
      EnvConfig cfg, Rng rng,
      std::function<VecX(const Env&)> shape_embed = nullptr)
      : task_(std::move(task)),
        catalog_(catalog),
        model_(model),
        cfg_(std::move(cfg)),
        rng_(rng),
        refs_(hand_sphere_refs(*model)),
        shape_embed_(std::move(shape_embed)) {
    reset_episode();
  }

  void reset_episode() {
    world_ = reset(task_, *catalog_, *model_, rng_);
    cache_ = make_cloud_cache(*model_, rng_);
    o_t_ = read_tactile(world_, cfg_.contact).binary;
    hist_.clear();
    hist_.push(world_, o_t_);
    step_count_ = 0;
    stats_ = EpisodeStats{};
    twist_accum_ = 0.0;
    f_ = shape_embed_ ? shape_embed_(*this) : VecX::Zero(kShapeEmbedding);
    check(f_.size() == kShapeEmbedding, "shape embedding must have 32 entries");
  }

  struct StepResult {
    double reward = 0.0;
    bool done = false;
    Termination term = Termination::running;
    RewardComponents components;
  };

  StepResult step(const VecX& action) {
    WorldState prev = world_;
    apply_action(world_.hand, action, *model_, cfg_.control, step_count_);
    StepOutput so;
    if (!cfg_.kinematic)
      so = step_world(world_, *model_, refs_, cfg_.control, cfg_.contact,
                      cfg_.dt_sim, cfg_.substeps);
    if (cfg_.script) cfg_.script(world_, step_count_);
    ++step_count_;
    o_t_ = read_tactile(world_, cfg_.contact).binary;
    RewardComponents rc = compute_reward(prev, world_, so.mean_torque, so.dq,
                                         cfg_.reward, task_, *model_);
    Termination term =
        check_termination(world_, task_, cfg_.reward, step_count_);
    hist_.push(world_, o_t_);

    stats_.crr += rc.total;
    double twist = 0.0;
    for (size_t i = 0; i < world_.bodies.size(); ++i)
      twist += rotation_delta(prev.bodies[i].pose, world_.bodies[i].pose,
                              task_.axis) /
               double(world_.bodies.size());
    twist_accum_ += twist;
    stats_.ttf = step_count_ * cfg_.dt_sim * cfg_.substeps;
    stats_.cra = std::abs(twist_accum_) / (2.0 * M_PI);
    stats_.fell = term == Termination::fell;

    StepResult out;
    out.reward = rc.total;
    out.done = term != Termination::running;
    out.term = term;
    out.components = rc;
    return out;
  }

  TeacherObservation teacher_obs() const {
    return build_teacher_observation(hist_, task_.axis, f_);
  }

  StudentObservation student_obs(Rng& cloud_rng) const {
    check(cfg_.build_clouds, "this env was created without cloud support");
    auto poses = forward_kinematics(*model_, world_.hand_base, world_.hand.q);
    Mat camera = build_camera_cloud(world_, *model_, cfg_.camera, cloud_rng);
    Mat augmented = build_augmented_cloud(*model_, poses, cache_);
    Mat tactile = build_tactile_cloud(*model_, poses, o_t_, cache_);
    LabeledPointCloud cloud =
        fuse(camera, augmented, tactile, poses[model_->palm_link]);
    return build_student_observation(hist_, task_.axis, std::move(cloud));
  }

  const WorldState& world() const { return world_; }
  const TaskSpec& task() const { return task_; }
  const HandModel& model() const { return *model_; }
  const EnvConfig& config() const { return cfg_; }
  const EpisodeStats& stats() const { return stats_; }
  const VecX& tactile() const { return o_t_; }
  const ObsHistory& history() const { return hist_; }
  const CloudSampleCache& cloud_cache() const { return cache_; }
  int step_count() const { return step_count_; }
  int teacher_obs_dim() const {
    int per_frame = 3 * kNumJoints + 9 * int(world_.bodies.size());
    return kFrameStack * per_frame + 3 + kShapeEmbedding;
  }

 private:
  TaskSpec task_;
  const ObjectCatalog* catalog_;
  const HandModel* model_;
  EnvConfig cfg_;
  Rng rng_;
  std::vector<HandSphereRef> refs_;
  std::function<VecX(const Env&)> shape_embed_;

  WorldState world_;
  CloudSampleCache cache_;
  ObsHistory hist_;
  VecX o_t_;
  VecX f_;
  EpisodeStats stats_;
  double twist_accum_ = 0.0;
  int step_count_ = 0;
};

// Static block split over worker threads. Each index is processed exactly
// once; results must be written to index-owned slots so the schedule cannot
// change the outcome.
template <typename Fn>
inline void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// PPO

struct PPOConfig {
  int n_envs = 128;
  int rollout_steps = 16;
  int minibatch_size = 512;
  bool minibatch_is_count = false;  // alternate reading of the table entry
  int mini_epochs = 4;              // optimization passes per rollout
  int epochs = 300;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double entropy_coef = 0.0;
  double critic_coef = 5.0;
  double kl_threshold = 0.02;
  double max_grad_norm = 1.0;
  double lr = 1e-4;
  bool normalize_advantages = true;
  int checkpoint_every = 100;
  int threads = 1;  // env stepping only; the optimizer stays single-threaded

  void validate() const {
    check(gamma > 0 && gamma <= 1, "gamma out of range");
    check(lambda > 0 && lambda <= 1, "lambda out of range");
    check(clip > 0, "clip must be positive");
    check(n_envs > 0 && rollout_steps > 0, "rollout dimensions must be positive");
  }
};

struct RolloutBuffer {
  int steps = 0, envs = 0;
  Mat obs;        // (steps*envs) x obs_dim, index t*envs + e
  Mat actions;    // (steps*envs) x act_dim
  Mat rewards;    // steps x envs
  Mat dones;      // steps x envs, 1.0 where the episode ended at t
  Mat values;     // steps x envs
  Mat log_probs;  // steps x envs
  VecX bootstrap; // envs, V(s_T)
  VecX advantages, returns;  // steps*envs after compute_gae

  void resize(int t, int n, int obs_dim, int act_dim) {
    steps = t;
    envs = n;
    obs.resize(t * n, obs_dim);
    actions.resize(t * n, act_dim);
    rewards.resize(t, n);
    dones.resize(t, n);
    values.resize(t, n);
    log_probs.resize(t, n);
    bootstrap.resize(n);
    advantages.resize(t * n);
    returns.resize(t * n);
  }
};

// delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t
// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}; returns = A + V.
inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  Mat adv(buf.steps, buf.envs);
  VecX next_adv = VecX::Zero(buf.envs);
  for (int t = buf.steps - 1; t >= 0; --t) {
    for (int e = 0; e < buf.envs; ++e) {
      double not_done = 1.0 - buf.dones(t, e);
      double v_next = (t + 1 < buf.steps) ? buf.values(t + 1, e)
                                          : buf.bootstrap[e];
      double delta =
          buf.rewards(t, e) + gamma * v_next * not_done - buf.values(t, e);
      next_adv[e] = delta + gamma * lambda * not_done * next_adv[e];
      adv(t, e) = next_adv[e];
    }
  }
  for (int t = 0; t < buf.steps; ++t)
    for (int e = 0; e < buf.envs; ++e) {
      buf.advantages[t * buf.envs + e] = adv(t, e);
      buf.returns[t * buf.envs + e] = adv(t, e) + buf.values(t, e);
    }
}

inline void normalize_advantages(VecX& adv) {
  double mean = adv.mean();
  double var = (adv.array() - mean).square().sum() / double(adv.size());
  adv = (adv.array() - mean) / (std::sqrt(var) + 1e-8);
}

// Band rule around the KL target.
inline double adapt_lr(double kl, double lr, double kl_threshold) {
  if (kl > 2.0 * kl_threshold) return std::max(lr / 1.5, 1e-6);
  if (kl < 0.5 * kl_threshold) return std::min(lr * 1.5, 1e-2);
  return lr;
}

// Clipped-surrogate + value loss for one minibatch; returns the loss node.
// Exposed separately so its gradient can be checked against analytic
// policy-gradient oracles.
template <typename Policy>
inline int ppo_minibatch_loss(nn::Tape& t, const Policy& policy,
                              const nn::ParamStore& store, const Mat& obs,
                              const Mat& actions, const VecX& logp_old,
                              const VecX& adv, const VecX& ret,
                              const PPOConfig& cfg,
                              double* approx_kl = nullptr) {
  using namespace nn;
  PolicyEval e = policy.forward(t, store, obs);
  int logp_new = gaussian_log_prob(t, e, actions);  // (B x 1)
  int ratio = exp_op(t, sub(t, logp_new, constant(t, Mat(logp_old))));
  int adv_c = constant(t, Mat(adv));
  int surr1 = cmul(t, ratio, adv_c);
  int surr2 = cmul(t, clamp_op(t, ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv_c);
  int actor = scale(t, mean(t, minimum(t, surr1, surr2)), -1.0);
  int verr = sub(t, e.value, constant(t, Mat(ret)));
  int critic = scale(t, mean(t, square(t, verr)), cfg.critic_coef);
  int loss = add(t, actor, critic);
  if (approx_kl)
    *approx_kl = (logp_old - t.val(logp_new).col(0)).mean();
  return loss;
}

struct TrainStats {
  double actor_loss = 0, value_loss = 0, kl = 0, grad_norm = 0, lr = 0;
};

template <typename Policy>
inline TrainStats ppo_update(RolloutBuffer& buf, nn::ParamStore& store,
                             const Policy& policy, nn::Adam& opt,
                             const PPOConfig& cfg, Rng& rng) {
  using namespace nn;
  cfg.validate();
  int total = buf.steps * buf.envs;
  if (cfg.normalize_advantages) normalize_advantages(buf.advantages);
  int mb = cfg.minibatch_is_count
               ? std::max(1, total / std::max(1, cfg.minibatch_size))
               : std::min(cfg.minibatch_size, total);

  VecX logp_flat(total);
  for (int t = 0; t < buf.steps; ++t)
    for (int e = 0; e < buf.envs; ++e)
      logp_flat[t * buf.envs + e] = buf.log_probs(t, e);

  TrainStats stats;
  stats.lr = opt.lr;
  int n_batches = 0;
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);

  for (int pass = 0; pass < cfg.mini_epochs; ++pass) {
    for (int i = total - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_index(uint64_t(i) + 1)]);
    for (int start = 0; start + mb <= total; start += mb) {
      Mat obs(mb, buf.obs.cols()), act(mb, buf.actions.cols());
      VecX lp(mb), adv(mb), ret(mb);
      for (int i = 0; i < mb; ++i) {
        int src = order[start + i];
        obs.row(i) = buf.obs.row(src);
        act.row(i) = buf.actions.row(src);
        lp[i] = logp_flat[src];
        adv[i] = buf.advantages[src];
        ret[i] = buf.returns[src];
      }
      Tape t;
      double kl = 0;
      int loss =
          ppo_minibatch_loss(t, policy, store, obs, act, lp, adv, ret, cfg, &kl);
      double loss_val = t.val(loss)(0, 0);
      check(std::isfinite(loss_val),
            "non-finite PPO loss (pass " + std::to_string(pass) + ", batch " +
                std::to_string(n_batches) + ")");
      t.backward(loss);
      auto grads = t.param_grads(store);
      stats.grad_norm += clip_grad_norm(grads, cfg.max_grad_norm);
      opt.lr = stats.lr;
      opt.step(store, grads);
      stats.kl += kl;
      stats.actor_loss += loss_val;
      ++n_batches;
    }
  }
  if (n_batches > 0) {
    stats.kl /= n_batches;
    stats.actor_loss /= n_batches;
    stats.grad_norm /= n_batches;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Teacher training loop

struct CurvePoint {
  int epoch = 0;
  double crr_mean = 0, crr_std = 0, ttf_mean = 0, kl = 0, lr = 0;
};

inline void save_curve_csv(const std::vector<CurvePoint>& curve,
                           const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot write learning curve: " + path);
  out << "epoch,crr_mean,crr_std,ttf_mean,kl,lr\n";
  for (const CurvePoint& p : curve)
    out << p.epoch << "," << p.crr_mean << "," << p.crr_std << ","
        << p.ttf_mean << "," << p.kl << "," << p.lr << "\n";
}

struct TeacherTrainResult {
  nn::ParamStore store;
  nn::TeacherPolicy policy;
  std::vector<CurvePoint> curve;
  double random_crr = 0.0;  // epoch-0 baseline from the untrained policy
};

inline TeacherTrainResult train_teacher(
    const TaskSpec& task, const ObjectCatalog& catalog, const HandModel& model,
    const EnvConfig& env_cfg, const PPOConfig& cfg, uint64_t seed,
    const std::string& out_dir = "",
    std::function<VecX(const Env&)> shape_embed = nullptr) {
  cfg.validate();
  Rng root(seed);
  Rng policy_rng = root.fork(1);
  Rng update_rng = root.fork(2);
  Rng action_rng = root.fork(3);

  std::vector<Env> envs;
  envs.reserve(cfg.n_envs);
  for (int e = 0; e < cfg.n_envs; ++e)
    envs.emplace_back(task, &catalog, &model, env_cfg,
                      root.fork(100 + uint64_t(e)), shape_embed);

  int obs_dim = envs[0].teacher_obs_dim();
  TeacherTrainResult result;
  result.policy =
      nn::TeacherPolicy::create(result.store, obs_dim, kNumJoints, policy_rng);
  nn::Adam opt(cfg.lr);
  double lr = cfg.lr;

  // Random-policy baseline: one full episode per env with the untrained
  // policy. Short training rollouts rarely contain a finished episode at
  // epoch 0, so the baseline needs its own pass; dedicated env and action
  // streams keep the training trajectories untouched.
  {
    std::vector<Env> base;
    std::vector<Rng> arng;
    base.reserve(cfg.n_envs);
    for (int e = 0; e < cfg.n_envs; ++e) {
      base.emplace_back(task, &catalog, &model, env_cfg,
                        root.fork(50000 + uint64_t(e)), shape_embed);
      arng.push_back(root.fork(60000 + uint64_t(e)));
    }
    std::vector<double> crr(cfg.n_envs, 0.0);
    parallel_for(cfg.n_envs, cfg.threads, [&](int e) {
      while (true) {
        nn::Tape tape;
        Mat obs = base[e].teacher_obs().vec.transpose();
        nn::PolicyEval ev = result.policy.forward(tape, result.store, obs);
        Mat a = nn::gaussian_sample(tape.val(ev.mean), tape.val(ev.log_std),
                                    arng[e]);
        if (base[e].step(a.row(0).transpose()).done) break;
      }
      crr[e] = base[e].stats().crr;
    });
    result.random_crr =
        std::accumulate(crr.begin(), crr.end(), 0.0) / double(cfg.n_envs);
    log_info("random-policy baseline crr %.3f over %d episodes",
             result.random_crr, cfg.n_envs);
  }

  RolloutBuffer buf;
  buf.resize(cfg.rollout_steps, cfg.n_envs, obs_dim, kNumJoints);

  std::vector<double> ep_crr, ep_ttf;  // episodes finished this epoch
  double last_crr = 0, last_crr_std = 0, last_ttf = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ep_crr.clear();
    ep_ttf.clear();
    for (int t = 0; t < cfg.rollout_steps; ++t) {
      Mat obs(cfg.n_envs, obs_dim);
      for (int e = 0; e < cfg.n_envs; ++e)
        obs.row(e) = envs[e].teacher_obs().vec.transpose();
      nn::Tape tape;
      nn::PolicyEval ev = result.policy.forward(tape, result.store, obs);
      Mat mean = tape.val(ev.mean);
      Mat log_std = tape.val(ev.log_std);
      Mat actions = nn::gaussian_sample(mean, log_std, action_rng);

      for (int e = 0; e < cfg.n_envs; ++e) {
        buf.obs.row(t * cfg.n_envs + e) = obs.row(e);
        buf.actions.row(t * cfg.n_envs + e) = actions.row(e);
        buf.values(t, e) = tape.val(ev.value)(e, 0);
        buf.log_probs(t, e) = nn::gaussian_log_prob_scalar(
            actions.row(e).transpose(), mean.row(e).transpose(),
            log_std.row(0).transpose());
      }
      // Each env owns its state and RNG, so stepping parallelizes without
      // changing any trajectory; stats are gathered in env order afterwards.
      std::vector<Env::StepResult> results(cfg.n_envs);
      std::vector<EpisodeStats> finished(cfg.n_envs);
      parallel_for(cfg.n_envs, cfg.threads, [&](int e) {
        results[e] = envs[e].step(actions.row(e).transpose());
        if (results[e].done) {
          finished[e] = envs[e].stats();
          envs[e].reset_episode();
        }
      });
      for (int e = 0; e < cfg.n_envs; ++e) {
        buf.rewards(t, e) = results[e].reward;
        buf.dones(t, e) = results[e].done ? 1.0 : 0.0;
        if (results[e].done) {
          ep_crr.push_back(finished[e].crr);
          ep_ttf.push_back(finished[e].ttf);
        }
      }
    }
    {
      Mat obs(cfg.n_envs, obs_dim);
      for (int e = 0; e < cfg.n_envs; ++e)
        obs.row(e) = envs[e].teacher_obs().vec.transpose();
      nn::Tape tape;
      nn::PolicyEval ev = result.policy.forward(tape, result.store, obs);
      buf.bootstrap = tape.val(ev.value).col(0);
    }

    compute_gae(buf, cfg.gamma, cfg.lambda);
    opt.lr = lr;
    TrainStats stats =
        ppo_update(buf, result.store, result.policy, opt, cfg, update_rng);
    lr = adapt_lr(stats.kl, lr, cfg.kl_threshold);

    if (!ep_crr.empty()) {
      double m = std::accumulate(ep_crr.begin(), ep_crr.end(), 0.0) /
                 double(ep_crr.size());
      double var = 0;
      for (double c : ep_crr) var += (c - m) * (c - m);
      last_crr = m;
      last_crr_std = std::sqrt(var / double(ep_crr.size()));
      last_ttf = std::accumulate(ep_ttf.begin(), ep_ttf.end(), 0.0) /
                 double(ep_ttf.size());
    }
    result.curve.push_back(
        {epoch, last_crr, last_crr_std, last_ttf, stats.kl, stats.lr});
    log_debug("epoch %d crr %.3f kl %.5f lr %.2e", epoch, last_crr, stats.kl,
              stats.lr);

    if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0)
      nn::save_checkpoint(result.store,
                          out_dir + "/teacher_" + std::to_string(epoch + 1) +
                              ".ckpt",
                          {{"epoch", epoch + 1}, {"task", task.name}});
  }
  if (!out_dir.empty()) {
    nn::save_checkpoint(result.store, out_dir + "/teacher_final.ckpt",
                        {{"epoch", cfg.epochs}, {"task", task.name}});
    save_curve_csv(result.curve, out_dir + "/teacher_curve.csv");
  }
  return result;
}

}  // namespace syn
