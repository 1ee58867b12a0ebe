#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "syn/analysis.hpp"

namespace syn {

// Whole-run configuration: one JSON file drives every pipeline stage. Unknown
// keys are rejected so a typo never silently falls back to a default.
struct RunConfig {
  std::string task = "multi_object_z";
  uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;  // 0 = hardware concurrency
  SensingConfig sensing;
  ControlConfig control;
  ContactParams contact;
  RewardConfig reward;
  PPOConfig ppo;
  DistillConfig distill;
  CameraSpec camera;
  double dt_sim = EnvConfig{}.dt_sim;
  int substeps = EnvConfig{}.substeps;

  void validate() const {
    check(threads >= 0, "threads must be non-negative");
    check(dt_sim > 0 && substeps > 0, "sim step must be positive");
    check(!out_dir.empty(), "out_dir must not be empty");
    sensing.validate();
    ppo.validate();
    distill.validate();
    camera.validate();
  }

  EnvConfig env_config() const {
    EnvConfig e;
    e.control = control;
    e.contact = contact;
    e.reward = reward;
    e.dt_sim = dt_sim;
    e.substeps = substeps;
    e.camera = camera;
    return e;
  }
};

namespace detail {

// Pulls known keys out of a JSON object and complains about the rest, so
// every from-JSON function gets unknown-key rejection for free.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string section)
      : j_(j), section_(std::move(section)) {
    check(j.is_object(), "config section " + section_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail("config key " + section_ + "." + key + ": " + e.what());
    }
  }

  void get_vec3(const char* key, Vec3& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    check(it->is_array() && it->size() == 3,
          "config key " + section_ + "." + key + " must be a 3-array");
    out = Vec3((*it)[0].get<double>(), (*it)[1].get<double>(),
               (*it)[2].get<double>());
  }

  // Per-joint gain vectors accept either a scalar (broadcast) or a full
  // 16-array, since the defaults are uniform and overrides usually are too.
  void get_joint_vec(const char* key, VecX& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_number()) {
      out = VecX::Constant(kNumJoints, it->get<double>());
      return;
    }
    check(it->is_array() && int(it->size()) == kNumJoints,
          "config key " + section_ + "." + key + " must be a scalar or a " +
              std::to_string(kNumJoints) + "-array");
    out.resize(kNumJoints);
    for (int i = 0; i < kNumJoints; ++i) out[i] = (*it)[i].get<double>();
  }

  void get_transform(const char* key, RigidTransform& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    FieldReader r(*it, section_ + "." + key);
    Eigen::Vector4d q(out.rotation.w(), out.rotation.x(), out.rotation.y(),
                      out.rotation.z());
    auto qit = it->find("rotation_wxyz");
    r.seen_.insert("rotation_wxyz");
    if (qit != it->end()) {
      check(qit->is_array() && qit->size() == 4,
            "rotation_wxyz must be a 4-array");
      for (int i = 0; i < 4; ++i) q[i] = (*qit)[i].get<double>();
    }
    out.rotation = Quat(q[0], q[1], q[2], q[3]);
    r.get_vec3("translation", out.translation);
    r.finish();
  }

  void get_aabb(const char* key, Aabb& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    FieldReader r(*it, section_ + "." + key);
    r.get_vec3("lo", out.lo);
    r.get_vec3("hi", out.hi);
    r.finish();
  }

  void finish() const {
    for (auto& [key, value] : j_.items()) {
      (void)value;
      check(seen_.count(key) > 0,
            "unknown config key: " + section_ + "." + key);
    }
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

inline nlohmann::json vec3_json(const Vec3& v) {
  return {v.x(), v.y(), v.z()};
}

inline nlohmann::json joint_vec_json(const VecX& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace detail

// --- per-section serialization --------------------------------------------

inline nlohmann::json to_json(const SensingConfig& c) {
  return {{"touch", c.touch},
          {"camera_cloud", c.camera_cloud},
          {"augmented_cloud", c.augmented_cloud},
          {"synesthesia_cloud", c.synesthesia_cloud}};
}

inline void from_json_into(const nlohmann::json& j, SensingConfig& c,
                           const std::string& sec) {
  detail::FieldReader r(j, sec);
  r.get("touch", c.touch);
  r.get("camera_cloud", c.camera_cloud);
  r.get("augmented_cloud", c.augmented_cloud);
  r.get("synesthesia_cloud", c.synesthesia_cloud);
  r.finish();
}

inline nlohmann::json to_json(const ControlConfig& c) {
  return {{"eta", c.eta},
          {"kp", detail::joint_vec_json(c.kp)},
          {"kd", detail::joint_vec_json(c.kd)},
          {"qdot_max", c.qdot_max},
          {"action_scale", c.action_scale},
          {"ema_zero_start", c.ema_zero_start}};
}

inline void from_json_into(const nlohmann::json& j, ControlConfig& c,
                           const std::string& sec) {
  detail::FieldReader r(j, sec);
  r.get("eta", c.eta);
  r.get_joint_vec("kp", c.kp);
  r.get_joint_vec("kd", c.kd);
  r.get("qdot_max", c.qdot_max);
  r.get("action_scale", c.action_scale);
  r.get("ema_zero_start", c.ema_zero_start);
  r.finish();
}

inline nlohmann::json to_json(const ContactParams& c) {
  return {{"k_n", c.k_n},   {"c_n", c.c_n}, {"mu", c.mu},
          {"k_t", c.k_t},   {"c_s", c.c_s}, {"theta_th", c.theta_th}};
}

inline void from_json_into(const nlohmann::json& j, ContactParams& c,
                           const std::string& sec) {
  detail::FieldReader r(j, sec);
  r.get("k_n", c.k_n);
  r.get("c_n", c.c_n);
  r.get("mu", c.mu);
  r.get("k_t", c.k_t);
  r.get("c_s", c.c_s);
  r.get("theta_th", c.theta_th);
  r.finish();
}

inline nlohmann::json to_json(const RewardConfig& c) {
  return {{"c1", c.c1},
          {"c2", c.c2},
          {"c3", c.c3},
          {"c4", c.c4},
          {"c5", c.c5},
          {"c6", c.c6},
          {"fall_distance", c.fall_distance},
          {"fall_penalty", c.fall_penalty},
          {"rot_clip", c.rot_clip},
          {"dist_scale", c.dist_scale}};
}

inline void from_json_into(const nlohmann::json& j, RewardConfig& c,
                           const std::string& sec) {
  detail::FieldReader r(j, sec);
  r.get("c1", c.c1);
  r.get("c2", c.c2);
  r.get("c3", c.c3);
  r.get("c4", c.c4);
  r.get("c5", c.c5);
  r.get("c6", c.c6);
  r.get("fall_distance", c.fall_distance);
  r.get("fall_penalty", c.fall_penalty);
  r.get("rot_clip", c.rot_clip);
  r.get("dist_scale", c.dist_scale);
  r.finish();
}

inline nlohmann::json to_json(const PPOConfig& c) {
  return {{"n_envs", c.n_envs},
          {"rollout_steps", c.rollout_steps},
          {"minibatch_size", c.minibatch_size},
          {"minibatch_is_count", c.minibatch_is_count},
          {"mini_epochs", c.mini_epochs},
          {"epochs", c.epochs},
          {"gamma", c.gamma},
          {"lambda", c.lambda},
          {"clip", c.clip},
          {"entropy_coef", c.entropy_coef},
          {"critic_coef", c.critic_coef},
          {"kl_threshold", c.kl_threshold},
          {"max_grad_norm", c.max_grad_norm},
          {"lr", c.lr},
          {"normalize_advantages", c.normalize_advantages},
          {"checkpoint_every", c.checkpoint_every}};
}

inline void from_json_into(const nlohmann::json& j, PPOConfig& c,
                           const std::string& sec) {
  detail::FieldReader r(j, sec);
  r.get("n_envs", c.n_envs);
  r.get("rollout_steps", c.rollout_steps);
  r.get("minibatch_size", c.minibatch_size);
  r.get("minibatch_is_count", c.minibatch_is_count);
  r.get("mini_epochs", c.mini_epochs);
  r.get("epochs", c.epochs);
  r.get("gamma", c.gamma);
  r.get("lambda", c.lambda);
  r.get("clip", c.clip);
  r.get("entropy_coef", c.entropy_coef);
  r.get("critic_coef", c.critic_coef);
  r.get("kl_threshold", c.kl_threshold);
  r.get("max_grad_norm", c.max_grad_norm);
  r.get("lr", c.lr);
  r.get("normalize_advantages", c.normalize_advantages);
  r.get("checkpoint_every", c.checkpoint_every);
  r.finish();
}

inline nlohmann::json to_json(const DistillConfig& c) {
  return {{"n_envs", c.n_envs},
          {"steps_per_iter", c.steps_per_iter},
          {"minibatch", c.minibatch},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"dataset_size", c.dataset_size},
          {"dagger_iters", c.dagger_iters},
          {"dagger_epochs", c.dagger_epochs},
          {"holdout_frac", c.holdout_frac},
          {"plateau_tol", c.plateau_tol},
          {"plateau_patience", c.plateau_patience}};
}

inline void from_json_into(const nlohmann::json& j, DistillConfig& c,
                           const std::string& sec) {
  detail::FieldReader r(j, sec);
  r.get("n_envs", c.n_envs);
  r.get("steps_per_iter", c.steps_per_iter);
  r.get("minibatch", c.minibatch);
  r.get("epochs", c.epochs);
  r.get("lr", c.lr);
  r.get("dataset_size", c.dataset_size);
  r.get("dagger_iters", c.dagger_iters);
  r.get("dagger_epochs", c.dagger_epochs);
  r.get("holdout_frac", c.holdout_frac);
  r.get("plateau_tol", c.plateau_tol);
  r.get("plateau_patience", c.plateau_patience);
  r.finish();
}

inline nlohmann::json to_json(const CameraSpec& c) {
  return {{"pose",
           {{"rotation_wxyz",
             {c.pose.rotation.w(), c.pose.rotation.x(), c.pose.rotation.y(),
              c.pose.rotation.z()}},
            {"translation", detail::vec3_json(c.pose.translation)}}},
          {"width", c.width},
          {"height", c.height},
          {"vfov", c.vfov},
          {"workspace",
           {{"lo", detail::vec3_json(c.workspace.lo)},
            {"hi", detail::vec3_json(c.workspace.hi)}}},
          {"depth_noise", c.depth_noise},
          {"dropout", c.dropout}};
}

inline void from_json_into(const nlohmann::json& j, CameraSpec& c,
                           const std::string& sec) {
  detail::FieldReader r(j, sec);
  r.get_transform("pose", c.pose);
  r.get("width", c.width);
  r.get("height", c.height);
  r.get("vfov", c.vfov);
  r.get_aabb("workspace", c.workspace);
  r.get("depth_noise", c.depth_noise);
  r.get("dropout", c.dropout);
  r.finish();
}

// --- whole-run config -------------------------------------------------------

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"task", c.task},
          {"seed", c.seed},
          {"out_dir", c.out_dir},
          {"threads", c.threads},
          {"sensing", to_json(c.sensing)},
          {"control", to_json(c.control)},
          {"contact", to_json(c.contact)},
          {"reward", to_json(c.reward)},
          {"ppo", to_json(c.ppo)},
          {"distill", to_json(c.distill)},
          {"camera", to_json(c.camera)},
          {"sim", {{"dt_sim", c.dt_sim}, {"substeps", c.substeps}}}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::FieldReader r(j, "run");
  r.get("task", c.task);
  r.get("seed", c.seed);
  r.get("out_dir", c.out_dir);
  r.get("threads", c.threads);
  if (j.contains("sensing")) from_json_into(j["sensing"], c.sensing, "sensing");
  if (j.contains("control")) from_json_into(j["control"], c.control, "control");
  if (j.contains("contact")) from_json_into(j["contact"], c.contact, "contact");
  if (j.contains("reward")) from_json_into(j["reward"], c.reward, "reward");
  if (j.contains("ppo")) from_json_into(j["ppo"], c.ppo, "ppo");
  if (j.contains("distill")) from_json_into(j["distill"], c.distill, "distill");
  if (j.contains("camera")) from_json_into(j["camera"], c.camera, "camera");
  if (j.contains("sim")) {
    detail::FieldReader s(j["sim"], "sim");
    s.get("dt_sim", c.dt_sim);
    s.get("substeps", c.substeps);
    s.finish();
  }
  for (auto& [key, value] : j.items()) {
    (void)value;
    static const std::set<std::string> known = {
        "task",   "seed", "out_dir", "threads", "sensing", "control",
        "contact", "reward", "ppo",  "distill", "camera",  "sim"};
    check(known.count(key) > 0, "unknown config key: " + key);
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("config parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline void save_run_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot write config: " + path);
  out << to_json(c).dump(1) << "\n";
}

// Applies one `key.path=value` override onto a config. The value is parsed
// as JSON when possible (numbers, bools, arrays) and kept as a string
// otherwise, then the whole document is re-validated.
inline RunConfig apply_override(const RunConfig& c, const std::string& spec) {
  size_t eq = spec.find('=');
  check(eq != std::string::npos && eq > 0,
        "override must look like key.path=value: " + spec);
  std::string path = spec.substr(0, eq);
  std::string value = spec.substr(eq + 1);

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;  // bare strings stay strings
  }

  nlohmann::json j = to_json(c);
  nlohmann::json* node = &j;
  std::istringstream keys(path);
  std::string key;
  while (std::getline(keys, key, '.')) {
    check(!key.empty(), "empty key segment in override: " + spec);
    node = &(*node)[key];
  }
  *node = parsed;
  return run_config_from_json(j);
}

}  // namespace syn
