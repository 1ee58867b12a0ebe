#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "syn/physics.hpp"
#include "syn/rng.hpp"

namespace syn {

enum class TaskKind { wheel_wrench, double_ball, multi_object };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::multi_object;
  Vec3 axis = Vec3::UnitZ();          // rotation axis k, unit norm
  std::vector<std::string> objects;   // candidate object names in the catalog
  int episode_len = 500;              // control steps
  double pos_jitter = 0.005;          // m, uniform in x and y
  double yaw_jitter = 0.2;            // rad, uniform about z

  void validate() const {
    check(std::abs(axis.norm() - 1.0) < 1e-9, "task axis must be unit norm");
    check(episode_len > 0, "episode_len must be positive");
    check(!objects.empty(), "task needs at least one object");
  }
};

struct RewardConfig {
  double c1 = 1.0;      // r_rot
  double c2 = -0.1;     // r_vel
  double c3 = 0.1;      // r_dist
  double c4 = -0.0003;  // r_torq
  double c5 = -0.0003;  // r_work
  double c6 = 0.0;      // r_ctrl
  double fall_distance = 0.1;  // m
  double fall_penalty = 50.0;
  double rot_clip = 0.05;      // rad/step
  double dist_scale = 50.0;    // 1/m
};

struct EpisodeStats {
  double crr = 0.0;   // cumulative reward
  double cra = 0.0;   // revolutions about the task axis
  double ttf = 0.0;   // seconds until fall or timeout
  bool fell = false;
};

enum class Termination { running, fell, timeout };

// ---------------------------------------------------------------------------
// Episode lifecycle

inline WorldState reset(const TaskSpec& task, const ObjectCatalog& catalog,
                        const HandModel& model, Rng& rng) {
  task.validate();
  WorldState w;
  w.hand = HandState{};  // canonical open pose: q = target = 0

  Vec3 jitter(rng.uniform(-task.pos_jitter, task.pos_jitter),
              rng.uniform(-task.pos_jitter, task.pos_jitter), 0.0);
  double yaw = rng.uniform(-task.yaw_jitter, task.yaw_jitter);
  auto place = [&](const ObjectSpec& spec, const Vec3& shift) {
    RigidBody b = RigidBody::from_spec(spec);
    b.pose.translation = spec.spawn_offset + shift + jitter;
    b.pose.rotation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    w.bodies.push_back(b);
  };

  auto spec_of = [&](const std::string& name) -> const ObjectSpec& {
    auto it = catalog.find(name);
    check(it != catalog.end(), "unknown object in task: " + name);
    return it->second;
  };

  if (task.kind == TaskKind::double_ball) {
    const ObjectSpec& ball = spec_of(task.objects.front());
    check(ball.collision.spheres.size() == 1, "double_ball needs a sphere");
    double r = ball.collision.spheres[0].radius;
    place(ball, Vec3(0, r + 0.0005, 0));
    place(ball, Vec3(0, -(r + 0.0005), 0));
  } else {
    size_t pick = task.objects.size() > 1
                      ? rng.uniform_index(task.objects.size())
                      : 0;
    place(spec_of(task.objects[pick]), Vec3::Zero());
  }

  // Lift until nothing starts interpenetrating: a deep initial overlap in
  // the stiff contact springs would launch the object during the settle.
  auto refs = hand_sphere_refs(model);
  auto poses = forward_kinematics(model, w.hand_base, w.hand.q);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> lift(w.bodies.size(), 0.0);
    for (const Contact& c : detect_contacts(w, refs, poses))
      if (c.overlap > 5e-4)
        lift[c.body_a] = std::max(lift[c.body_a], c.overlap + 1e-4);
    bool any = false;
    for (size_t i = 0; i < w.bodies.size(); ++i) {
      if (lift[i] <= 0.0) continue;
      w.bodies[i].pose.translation.z() += lift[i];
      any = true;
    }
    if (!any) break;
  }

  // Settle before the first observation; dt matches the control-period
  // integration so the first step sees no timestep discontinuity.
  ControlConfig cfg;
  ContactParams p;
  step_world(w, model, cfg, p, 0.0025, 40);
  w.time = 0.0;
  return w;
}

// Signed twist of the relative rotation about unit axis k (swing-twist).
inline double rotation_delta(const RigidTransform& prev,
                             const RigidTransform& cur, const Vec3& k) {
  Quat rel = cur.rotation * prev.rotation.conjugate();
  double w = rel.w();
  double d = rel.vec().dot(k);
  if (w < 0) {  // shortest representation
    w = -w;
    d = -d;
  }
  if (std::abs(w) < 1e-15 && std::abs(d) < 1e-15) return 0.0;
  return 2.0 * std::atan2(d, w);
}

struct RewardComponents {
  double r_rot = 0, r_vel = 0, r_dist = 0, r_torq = 0, r_work = 0, r_ctrl = 0;
  bool fell = false;
  double total = 0;
};

inline Termination check_termination(const WorldState& world,
                                     const TaskSpec& task,
                                     const RewardConfig& cfg, int step) {
  Vec3 hand_center = world.hand_base.translation;  // palm link origin
  for (const RigidBody& b : world.bodies)
    if ((b.pose.translation - hand_center).norm() > cfg.fall_distance)
      return Termination::fell;
  if (step >= task.episode_len) return Termination::timeout;
  return Termination::running;
}

inline RewardComponents compute_reward(const WorldState& prev,
                                       const WorldState& cur, const VecX& tau,
                                       const VecX& dq, const RewardConfig& cfg,
                                       const TaskSpec& task,
                                       const HandModel& model) {
  check(prev.bodies.size() == cur.bodies.size(),
        "reward needs a consistent world pair");
  RewardComponents out;
  double n = double(cur.bodies.size());

  for (size_t i = 0; i < cur.bodies.size(); ++i) {
    out.r_rot += rotation_delta(prev.bodies[i].pose, cur.bodies[i].pose,
                                task.axis) / n;
    out.r_vel += cur.bodies[i].linvel.norm() / n;
  }
  out.r_rot = std::clamp(out.r_rot, -cfg.rot_clip, cfg.rot_clip);

  auto poses = forward_kinematics(model, cur.hand_base, cur.hand.q);
  int pairs = 0;
  for (size_t f = 0; f < model.fingertip_links.size(); ++f) {
    Vec3 tip = poses[model.fingertip_links[f]].apply(model.fingertip_offsets[f]);
    for (const RigidBody& b : cur.bodies) {
      double d = std::numeric_limits<double>::infinity();
      for (const Sphere& s : b.collision.spheres)
        d = std::min(d, (tip - b.pose.apply(s.center)).norm() - s.radius);
      out.r_dist += std::exp(-cfg.dist_scale * std::max(0.0, d));
      ++pairs;
    }
  }
  out.r_dist /= double(pairs);

  out.r_torq = tau.squaredNorm();
  out.r_work = (tau.array() * dq.array()).abs().sum();
  out.r_ctrl = (cur.hand.target - cur.hand.q).squaredNorm();

  Vec3 hand_center = cur.hand_base.translation;
  for (const RigidBody& b : cur.bodies)
    if ((b.pose.translation - hand_center).norm() > cfg.fall_distance)
      out.fell = true;

  out.total = cfg.c1 * out.r_rot + cfg.c2 * out.r_vel + cfg.c3 * out.r_dist +
              cfg.c4 * out.r_torq + cfg.c5 * out.r_work + cfg.c6 * out.r_ctrl -
              (out.fell ? cfg.fall_penalty : 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Task catalog: JSON file keyed by task name.

using TaskCatalog = std::map<std::string, TaskSpec>;

inline TaskCatalog make_default_tasks() {
  TaskCatalog tasks;
  auto add = [&tasks](TaskSpec t) { tasks[t.name] = std::move(t); };

  TaskSpec wrench;
  wrench.name = "wheel_wrench_z";
  wrench.kind = TaskKind::wheel_wrench;
  wrench.axis = Vec3::UnitZ();
  wrench.objects = {"wrench"};
  add(wrench);

  TaskSpec balls;
  balls.name = "double_ball_z";
  balls.kind = TaskKind::double_ball;
  balls.axis = Vec3::UnitZ();
  balls.objects = {"small_ball"};
  add(balls);

  for (auto [suffix, axis] : {std::pair{"x", Vec3(Vec3::UnitX())},
                              {"y", Vec3::UnitY()},
                              {"z", Vec3::UnitZ()}}) {
    TaskSpec t;
    t.name = std::string("multi_object_") + suffix;
    t.kind = TaskKind::multi_object;
    t.axis = axis;
    t.objects = multi_object_set();
    add(t);
  }
  return tasks;
}

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::wheel_wrench: return "wheel_wrench";
    case TaskKind::double_ball: return "double_ball";
    case TaskKind::multi_object: return "multi_object";
  }
  fail("bad task kind");
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "wheel_wrench") return TaskKind::wheel_wrench;
  if (s == "double_ball") return TaskKind::double_ball;
  if (s == "multi_object") return TaskKind::multi_object;
  fail("unknown task kind: " + s);
}

inline void save_tasks(const TaskCatalog& tasks, const std::string& path) {
  nlohmann::json j;
  for (const auto& [name, t] : tasks) {
    j[name] = {{"kind", to_string(t.kind)},
               {"axis", {t.axis.x(), t.axis.y(), t.axis.z()}},
               {"objects", t.objects},
               {"episode_len", t.episode_len},
               {"pos_jitter", t.pos_jitter},
               {"yaw_jitter", t.yaw_jitter}};
  }
  std::ofstream out(path);
  check(out.good(), "cannot write task catalog: " + path);
  out << j.dump(1) << "\n";
}

inline TaskCatalog load_tasks(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open task catalog: " + path);
  nlohmann::json j;
  in >> j;
  TaskCatalog tasks;
  for (auto& [name, e] : j.items()) {
    TaskSpec t;
    t.name = name;
    t.kind = task_kind_from_string(e.at("kind").get<std::string>());
    auto a = e.at("axis");
    t.axis = Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    t.objects = e.at("objects").get<std::vector<std::string>>();
    t.episode_len = e.at("episode_len").get<int>();
    t.pos_jitter = e.at("pos_jitter").get<double>();
    t.yaw_jitter = e.at("yaw_jitter").get<double>();
    t.validate();
    tasks[name] = std::move(t);
  }
  return tasks;
}

}  // namespace syn
