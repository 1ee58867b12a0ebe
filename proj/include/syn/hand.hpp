#pragma once

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "syn/geometry.hpp"

namespace syn {

constexpr int kNumJoints = 16;
constexpr int kNumLinks = 21;
constexpr int kNumPads = 16;

struct Link {
  std::string name;
  int parent = -1;  // -1 for the palm root
  RigidTransform local;
  TriMesh render;
  SphereSet collision;
};

struct Joint {
  int child_link = 0;
  Vec3 axis = Vec3::UnitZ();
  double lo = 0.0, hi = 0.0;
};

struct SensorPad {
  int parent_link = 0;
  RigidTransform local;
  TriMesh mesh;
  double sense_radius = 0.009;
};

class HandModel {
 public:
  std::vector<Link> links;
  std::vector<Joint> joints;
  std::vector<SensorPad> pads;
  std::array<int, 4> fingertip_links{};
  std::array<Vec3, 4> fingertip_offsets{};  // tip point in tip-link frame
  int palm_link = 0;

  // joint index driving each link, -1 for fixed links
  std::vector<int> joint_of_link;

  void validate() {
    check(int(links.size()) == kNumLinks, "hand must have 21 links");
    check(int(joints.size()) == kNumJoints, "hand must have 16 joints");
    check(int(pads.size()) == kNumPads, "hand must have 16 sensor pads");
    check(palm_link == 0 && links[0].parent == -1, "palm must be the root link");
    joint_of_link.assign(links.size(), -1);
    for (size_t i = 1; i < links.size(); ++i)
      check(links[i].parent >= 0 && links[i].parent < int(i),
            "link parents must form a tree in index order");
    for (size_t j = 0; j < joints.size(); ++j) {
      const Joint& jt = joints[j];
      check(jt.child_link > 0 && jt.child_link < int(links.size()),
            "joint child out of range");
      check(jt.lo < jt.hi, "joint limits must satisfy lo < hi");
      check(joint_of_link[jt.child_link] == -1, "one joint per link");
      joint_of_link[jt.child_link] = int(j);
    }
    for (const SensorPad& p : pads)
      check(p.parent_link >= 0 && p.parent_link < int(links.size()),
            "pad parent out of range");
  }

  VecX limits_lo() const {
    VecX v(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j) v[j] = joints[j].lo;
    return v;
  }
  VecX limits_hi() const {
    VecX v(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j) v[j] = joints[j].hi;
    return v;
  }
};

struct HandState {
  VecX q = VecX::Zero(kNumJoints);
  VecX qdot = VecX::Zero(kNumJoints);
  VecX target = VecX::Zero(kNumJoints);      // position target q̂
  VecX ema_action = VecX::Zero(kNumJoints);  // smoothed action â
  VecX contacts = VecX::Zero(kNumJoints);    // binary o_t (16 pads)
};

struct ControlConfig {
  double eta = 0.8;
  VecX kp = VecX::Constant(kNumJoints, 3.0);
  VecX kd = VecX::Constant(kNumJoints, 0.1);
  double qdot_max = 2.0;       // rad/s
  double action_scale = 0.1;   // rad per unit action
  // Literal â_0 = 0 (the first action is a no-op); the alternative seeds the
  // EMA with the first action instead.
  bool ema_zero_start = true;
};

// ---------------------------------------------------------------------------

inline std::vector<RigidTransform> forward_kinematics(
    const HandModel& model, const RigidTransform& base, const VecX& q) {
  std::vector<RigidTransform> poses(model.links.size());
  for (size_t i = 0; i < model.links.size(); ++i) {
    const Link& link = model.links[i];
    RigidTransform local = link.local;
    int j = model.joint_of_link[i];
    if (j >= 0)
      local = local.compose(
          RigidTransform::from_axis_angle(model.joints[j].axis, q[j]));
    poses[i] = (link.parent < 0) ? base.compose(local)
                                 : poses[link.parent].compose(local);
  }
  return poses;
}

inline void apply_action(HandState& state, const VecX& a, const HandModel& model,
                         const ControlConfig& cfg, int t) {
  VecX clamped = a.cwiseMax(-1.0).cwiseMin(1.0) * cfg.action_scale;
  if (t == 0 && cfg.ema_zero_start)
    state.ema_action.setZero();
  else if (t == 0)
    state.ema_action = cfg.eta * clamped;
  else
    state.ema_action = cfg.eta * clamped + (1.0 - cfg.eta) * state.ema_action;
  state.target = (state.target + state.ema_action)
                     .cwiseMax(model.limits_lo())
                     .cwiseMin(model.limits_hi());
}

// Rate-limited first-order servo toward the target. The PD torque is not fed
// back into the kinematics; it is reported for the reward's torque/work terms.
inline VecX servo_step(HandState& state, double dt, const HandModel& model,
                       const ControlConfig& cfg) {
  check(dt > 0.0, "servo dt must be positive");
  VecX err = state.target - state.q;
  VecX torque = cfg.kp.cwiseProduct(err) - cfg.kd.cwiseProduct(state.qdot);
  state.qdot = (err / dt).cwiseMax(-cfg.qdot_max).cwiseMin(cfg.qdot_max);
  state.q = (state.q + state.qdot * dt)
                .cwiseMax(model.limits_lo())
                .cwiseMin(model.limits_hi());
  return torque;
}

// ---------------------------------------------------------------------------
// Default morphology: palm + 4 fingers x (1 fixed mount + 4 driven links),
// pads on 15 finger links and the palm.

namespace detail {

// Shallow bowl: a raised rim of 8 spheres plus a lower mid ring cradle the
// object; the central support is the palm sensor pad's own sphere. The mid
// ring closes the annular gap between pad and rim that small collision
// spheres would otherwise sink through.
inline SphereSet palm_spheres() {
  std::vector<Sphere> s;
  for (int i = 0; i < 8; ++i) {
    double a = i * M_PI / 4.0;
    s.push_back({Vec3(0.040 * std::cos(a), 0.040 * std::sin(a), 0.012), 0.012});
    double b = (i + 0.5) * M_PI / 4.0;
    s.push_back({Vec3(0.021 * std::cos(b), 0.021 * std::sin(b), 0.001), 0.012});
  }
  return SphereSet(s);
}

inline TriMesh segment_mesh(double length) {
  return make_box_mesh(Vec3(length / 2, 0.008, 0.006), Vec3(length / 2, 0, 0));
}

inline TriMesh pad_mesh() {
  return make_box_mesh(Vec3(0.006, 0.005, 0.002));
}

}  // namespace detail

inline HandModel make_default_hand() {
  HandModel m;
  const double seg_len[4] = {0.020, 0.035, 0.030, 0.025};
  const double pre_curl[4] = {0.0, 1.0, 1.0, 1.0};

  Link palm;
  palm.name = "palm";
  palm.parent = -1;
  palm.render = make_box_mesh(Vec3(0.045, 0.045, 0.010), Vec3(0, 0, -0.010));
  palm.collision = detail::palm_spheres();
  m.links.push_back(palm);

  struct FingerDef {
    const char* name;
    Vec3 mount;
    double yaw;
  };
  const FingerDef fingers[4] = {
      {"index", Vec3(0.030, -0.030, 0.010), 0.0},
      {"middle", Vec3(0.030, 0.000, 0.010), 0.0},
      {"ring", Vec3(0.030, 0.030, 0.010), 0.0},
      {"thumb", Vec3(-0.030, 0.000, 0.010), M_PI},
  };
  const char* seg_names[4] = {"prox", "mid", "dist", "tip"};

  for (int f = 0; f < 4; ++f) {
    Link mount;
    mount.name = std::string(fingers[f].name) + "_mount";
    mount.parent = m.palm_link;
    mount.local =
        RigidTransform::from_axis_angle(Vec3::UnitZ(), fingers[f].yaw,
                                        fingers[f].mount);
    mount.render = make_box_mesh(Vec3(0.006, 0.008, 0.006));
    mount.collision = SphereSet({{Vec3(0, 0, 0), 0.007}});
    int mount_idx = int(m.links.size());
    m.links.push_back(mount);

    int parent = mount_idx;
    for (int s = 0; s < 4; ++s) {
      Link seg;
      seg.name = std::string(fingers[f].name) + "_" + seg_names[s];
      seg.parent = parent;
      Vec3 offset = (s == 0) ? Vec3::Zero() : Vec3(seg_len[s - 1], 0, 0);
      seg.local = RigidTransform{
          Quat(Eigen::AngleAxisd(pre_curl[s], -Vec3::UnitY())), offset};
      if (s == 0)
        seg.local = RigidTransform{Quat::Identity(), offset};
      seg.render = detail::segment_mesh(seg_len[s]);
      seg.collision =
          SphereSet({{Vec3(0.25 * seg_len[s], 0, 0), 0.008}});
      int idx = int(m.links.size());
      m.links.push_back(seg);

      Joint j;
      j.child_link = idx;
      if (s == 0) {
        j.axis = Vec3::UnitZ();  // abduction
        j.lo = -0.45;
        j.hi = 0.45;
      } else {
        j.axis = -Vec3::UnitY();  // curl, positive closes the finger
        j.lo = -0.40;
        j.hi = 1.40;
      }
      m.joints.push_back(j);
      parent = idx;

      // Pads on every driven link except the thumb's proximal.
      if (!(f == 3 && s == 0)) {
        SensorPad pad;
        pad.parent_link = idx;
        double along = (s == 3) ? seg_len[s] : 0.7 * seg_len[s];
        pad.local = RigidTransform{Quat::Identity(), Vec3(along, 0, 0)};
        pad.mesh = detail::pad_mesh();
        pad.sense_radius = 0.009;
        m.pads.push_back(pad);
      }
      if (s == 3) {
        m.fingertip_links[f] = idx;
        m.fingertip_offsets[f] = Vec3(seg_len[s], 0, 0);
      }
    }
  }

  SensorPad palm_pad;
  palm_pad.parent_link = m.palm_link;
  // Slightly proud of the bowl floor so a large cradled object still
  // reaches the sensor instead of resting only on the support rings.
  palm_pad.local = RigidTransform{Quat::Identity(), Vec3(0, 0, 0.002)};
  palm_pad.mesh = make_box_mesh(Vec3(0.015, 0.015, 0.002));
  palm_pad.sense_radius = 0.012;  // doubles as the central palm support
  m.pads.push_back(palm_pad);

  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// JSON schema (see README for the field list)

namespace detail {

inline nlohmann::json transform_to_json(const RigidTransform& t) {
  return {{"quat", {t.rotation.w(), t.rotation.x(), t.rotation.y(), t.rotation.z()}},
          {"pos", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

inline RigidTransform transform_from_json(const nlohmann::json& j) {
  auto q = j.at("quat");
  auto p = j.at("pos");
  Quat rot(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
           q[3].get<double>());
  rot.normalize();
  return {rot, Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>())};
}

inline nlohmann::json mesh_to_json(const TriMesh& m) {
  nlohmann::json v = nlohmann::json::array();
  for (const Vec3& p : m.vertices()) v.push_back({p.x(), p.y(), p.z()});
  nlohmann::json f = nlohmann::json::array();
  for (const auto& t : m.triangles()) f.push_back({t[0], t[1], t[2]});
  return {{"vertices", v}, {"triangles", f}};
}

inline TriMesh mesh_from_json(const nlohmann::json& j) {
  std::vector<Vec3> v;
  for (const auto& p : j.at("vertices"))
    v.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  std::vector<std::array<int, 3>> f;
  for (const auto& t : j.at("triangles"))
    f.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
  return TriMesh(std::move(v), std::move(f));
}

inline nlohmann::json spheres_to_json(const SphereSet& s) {
  nlohmann::json out = nlohmann::json::array();
  for (const Sphere& sp : s.spheres)
    out.push_back({{"center", {sp.center.x(), sp.center.y(), sp.center.z()}},
                   {"radius", sp.radius}});
  return out;
}

inline SphereSet spheres_from_json(const nlohmann::json& j) {
  std::vector<Sphere> s;
  for (const auto& e : j) {
    auto c = e.at("center");
    s.push_back({Vec3(c[0].get<double>(), c[1].get<double>(), c[2].get<double>()),
                 e.at("radius").get<double>()});
  }
  return SphereSet(s);
}

}  // namespace detail

inline void save_hand_json(const HandModel& m, const std::string& path) {
  nlohmann::json j;
  for (const Link& l : m.links)
    j["links"].push_back({{"name", l.name},
                          {"parent", l.parent},
                          {"local", detail::transform_to_json(l.local)},
                          {"render", detail::mesh_to_json(l.render)},
                          {"collision", detail::spheres_to_json(l.collision)}});
  for (const Joint& jt : m.joints)
    j["joints"].push_back({{"child_link", jt.child_link},
                           {"axis", {jt.axis.x(), jt.axis.y(), jt.axis.z()}},
                           {"limits", {jt.lo, jt.hi}}});
  for (const SensorPad& p : m.pads)
    j["sensor_pads"].push_back({{"parent_link", p.parent_link},
                                {"local", detail::transform_to_json(p.local)},
                                {"mesh", detail::mesh_to_json(p.mesh)},
                                {"sense_radius", p.sense_radius}});
  j["fingertip_links"] = m.fingertip_links;
  nlohmann::json offs = nlohmann::json::array();
  for (const Vec3& o : m.fingertip_offsets) offs.push_back({o.x(), o.y(), o.z()});
  j["fingertip_offsets"] = offs;
  j["palm_link"] = m.palm_link;
  std::ofstream out(path);
  check(out.good(), "cannot write hand model: " + path);
  out << j.dump(1) << "\n";
}

inline HandModel load_hand_json(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open hand model: " + path);
  nlohmann::json j;
  in >> j;
  HandModel m;
  for (const auto& lj : j.at("links")) {
    Link l;
    l.name = lj.at("name").get<std::string>();
    l.parent = lj.at("parent").get<int>();
    l.local = detail::transform_from_json(lj.at("local"));
    l.render = detail::mesh_from_json(lj.at("render"));
    l.collision = detail::spheres_from_json(lj.at("collision"));
    m.links.push_back(std::move(l));
  }
  for (const auto& jj : j.at("joints")) {
    Joint jt;
    jt.child_link = jj.at("child_link").get<int>();
    auto a = jj.at("axis");
    jt.axis = Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    jt.lo = jj.at("limits")[0].get<double>();
    jt.hi = jj.at("limits")[1].get<double>();
    m.joints.push_back(jt);
  }
  for (const auto& pj : j.at("sensor_pads")) {
    SensorPad p;
    p.parent_link = pj.at("parent_link").get<int>();
    p.local = detail::transform_from_json(pj.at("local"));
    p.mesh = detail::mesh_from_json(pj.at("mesh"));
    p.sense_radius = pj.at("sense_radius").get<double>();
    m.pads.push_back(std::move(p));
  }
  for (int i = 0; i < 4; ++i) {
    m.fingertip_links[i] = j.at("fingertip_links")[i].get<int>();
    auto o = j.at("fingertip_offsets")[i];
    m.fingertip_offsets[i] =
        Vec3(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
  }
  m.palm_link = j.at("palm_link").get<int>();
  m.validate();
  return m;
}

}  // namespace syn
