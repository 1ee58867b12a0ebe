#include "doctest.h"

#include <cstdio>

#include "syn/hand.hpp"

using namespace syn;

namespace {

// Independent FK oracle: 4x4 homogeneous matrix chain per link.
Eigen::Matrix4d to_mat4(const RigidTransform& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = t.rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = t.translation;
  return m;
}

std::vector<Eigen::Matrix4d> fk_matrix_oracle(const HandModel& model,
                                              const RigidTransform& base,
                                              const VecX& q) {
  std::vector<Eigen::Matrix4d> out(model.links.size());
  for (size_t i = 0; i < model.links.size(); ++i) {
    Eigen::Matrix4d local = to_mat4(model.links[i].local);
    int j = model.joint_of_link[i];
    if (j >= 0) {
      Eigen::Matrix4d rot = Eigen::Matrix4d::Identity();
      rot.topLeftCorner<3, 3>() =
          Eigen::AngleAxisd(q[j], model.joints[j].axis.normalized())
              .toRotationMatrix();
      local = local * rot;
    }
    out[i] = (model.links[i].parent < 0 ? to_mat4(base)
                                        : out[model.links[i].parent]) *
             local;
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("hand");

TEST_CASE("default model satisfies the structural invariants") {
  HandModel m = make_default_hand();
  CHECK(m.links.size() == 21);
  CHECK(m.joints.size() == 16);
  CHECK(m.pads.size() == 16);
  for (int tip : m.fingertip_links) {
    CHECK(tip > 0);
    CHECK(tip < 21);
  }
}

TEST_CASE("FK at zero angles equals the fixed local chain") {
  HandModel m = make_default_hand();
  auto poses = forward_kinematics(m, RigidTransform::identity(),
                                  VecX::Zero(kNumJoints));
  for (size_t i = 0; i < m.links.size(); ++i) {
    RigidTransform expect = (m.links[i].parent < 0)
                                ? m.links[i].local
                                : poses[m.links[i].parent].compose(m.links[i].local);
    CHECK((poses[i].translation - expect.translation).norm() < 1e-12);
  }
  CHECK(poses[m.palm_link].translation.norm() < 1e-12);
}

TEST_CASE("single joint chain rotates the child by the joint angle") {
  HandModel m = make_default_hand();
  // Joint 0 is the index finger abduction about z.
  VecX q = VecX::Zero(kNumJoints);
  q[0] = M_PI / 2;
  auto zero = forward_kinematics(m, RigidTransform::identity(),
                                 VecX::Zero(kNumJoints));
  auto rot = forward_kinematics(m, RigidTransform::identity(), q);
  int child = m.joints[0].child_link;
  Quat rel = rot[child].rotation * zero[child].rotation.conjugate();
  Eigen::AngleAxisd aa(rel);
  CHECK(std::abs(aa.angle() - M_PI / 2) < 1e-9);
}

TEST_CASE("FK matches the independent matrix-product oracle") {
  HandModel m = make_default_hand();
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    VecX q(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j)
      q[j] = rng.uniform(m.joints[j].lo, m.joints[j].hi);
    RigidTransform base = RigidTransform::from_axis_angle(
        Vec3(rng.normal(), rng.normal(), rng.normal() + 2.0), rng.uniform(-2, 2),
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
    auto poses = forward_kinematics(m, base, q);
    auto oracle = fk_matrix_oracle(m, base, q);
    for (size_t i = 0; i < poses.size(); ++i) {
      Eigen::Matrix4d got = to_mat4(poses[i]);
      CHECK((got - oracle[i]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("perturbing one joint moves only descendant links") {
  HandModel m = make_default_hand();
  VecX q = VecX::Zero(kNumJoints);
  auto before = forward_kinematics(m, RigidTransform::identity(), q);
  int jidx = 5;  // middle finger curl
  q[m.joint_of_link[m.joints[jidx].child_link] >= 0 ? jidx : 0] += 1e-4;
  auto after = forward_kinematics(m, RigidTransform::identity(), q);
  // Collect descendants of the joint's child link.
  std::vector<bool> moved(m.links.size(), false);
  moved[m.joints[jidx].child_link] = true;
  for (size_t i = 0; i < m.links.size(); ++i)
    if (m.links[i].parent >= 0 && moved[m.links[i].parent]) moved[i] = true;
  for (size_t i = 0; i < m.links.size(); ++i) {
    double d = (after[i].translation - before[i].translation).norm();
    if (!moved[i])
      CHECK(d == 0.0);
    else
      CHECK(d < 1e-3);  // O(eps) motion
  }
}

TEST_CASE("apply_action first step is a no-op on the EMA") {
  HandModel m = make_default_hand();
  HandState s;
  ControlConfig cfg;
  VecX a = VecX::Constant(kNumJoints, 0.7);
  VecX target_before = s.target;
  apply_action(s, a, m, cfg, 0);
  CHECK(s.ema_action.norm() == 0.0);
  CHECK((s.target - target_before).norm() == 0.0);
}

TEST_CASE("EMA recursion matches the direct expansion") {
  HandModel m = make_default_hand();
  HandState s;
  ControlConfig cfg;
  cfg.eta = 0.8;
  cfg.action_scale = 1.0;
  // Widen limits so clamping does not interfere with the arithmetic check.
  for (Joint& j : m.joints) {
    j.lo = -100;
    j.hi = 100;
  }
  VecX a = VecX::Ones(kNumJoints);
  const double expect[4] = {0.0, 0.8, 0.96, 0.992};
  for (int t = 0; t < 4; ++t) {
    apply_action(s, a, m, cfg, t);
    for (int j = 0; j < kNumJoints; ++j)
      CHECK(s.ema_action[j] == doctest::Approx(expect[t]).epsilon(1e-14));
  }
}

TEST_CASE("EMA converges geometrically to action_scale * a") {
  HandModel m = make_default_hand();
  for (Joint& j : m.joints) {
    j.lo = -1000;
    j.hi = 1000;
  }
  HandState s;
  ControlConfig cfg;
  VecX a = VecX::Constant(kNumJoints, 0.5);
  double prev_gap = cfg.action_scale * 0.5;
  for (int t = 0; t < 30; ++t) {
    apply_action(s, a, m, cfg, t);
    if (t >= 1) {
      double gap = std::abs(cfg.action_scale * 0.5 - s.ema_action[0]);
      CHECK(gap == doctest::Approx(prev_gap * (1 - cfg.eta)).epsilon(1e-10));
      prev_gap = gap;
    }
  }
}

TEST_CASE("target clamps at the joint limit") {
  HandModel m = make_default_hand();
  HandState s;
  ControlConfig cfg;
  s.target = m.limits_hi();
  VecX a = VecX::Ones(kNumJoints);
  for (int t = 0; t < 5; ++t) apply_action(s, a, m, cfg, t);
  CHECK((s.target - m.limits_hi()).norm() == 0.0);
}

TEST_CASE("servo equilibrium produces zero torque and motion") {
  HandModel m = make_default_hand();
  HandState s;
  s.q = VecX::Constant(kNumJoints, 0.3);
  s.target = s.q;
  ControlConfig cfg;
  VecX q_before = s.q;
  VecX tau = servo_step(s, 0.005, m, cfg);
  CHECK(tau.norm() == 0.0);
  CHECK((s.q - q_before).norm() == 0.0);
}

TEST_CASE("servo torque follows the PD law") {
  HandModel m = make_default_hand();
  HandState s;
  s.target = s.q + VecX::Constant(kNumJoints, 0.1);
  ControlConfig cfg;  // kp = 3, kd = 0.1
  VecX tau = servo_step(s, 0.005, m, cfg);
  for (int j = 0; j < kNumJoints; ++j)
    CHECK(tau[j] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("servo rate limit caps the step displacement") {
  HandModel m = make_default_hand();
  HandState s;
  s.target = s.q + VecX::Constant(kNumJoints, 1.0);
  ControlConfig cfg;  // qdot_max = 2 rad/s
  VecX q_before = s.q;
  servo_step(s, 0.005, m, cfg);
  for (int j = 0; j < kNumJoints; ++j)
    CHECK(std::abs(s.q[j] - q_before[j]) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("q and target stay within limits under random action sequences") {
  HandModel m = make_default_hand();
  HandState s;
  ControlConfig cfg;
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    VecX a(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j) a[j] = rng.uniform(-2.0, 2.0);
    apply_action(s, a, m, cfg, t);
    for (int sub = 0; sub < 5; ++sub) servo_step(s, 0.005, m, cfg);
    for (int j = 0; j < kNumJoints; ++j) {
      CHECK(s.q[j] >= m.joints[j].lo);
      CHECK(s.q[j] <= m.joints[j].hi);
      CHECK(s.target[j] >= m.joints[j].lo);
      CHECK(s.target[j] <= m.joints[j].hi);
    }
  }
}

TEST_CASE("hand model JSON round trip") {
  HandModel m = make_default_hand();
  std::string path = "test_hand_roundtrip.json";
  save_hand_json(m, path);
  HandModel back = load_hand_json(path);
  REQUIRE(back.links.size() == m.links.size());
  for (size_t i = 0; i < m.links.size(); ++i) {
    CHECK(back.links[i].name == m.links[i].name);
    CHECK(back.links[i].parent == m.links[i].parent);
    CHECK((back.links[i].local.translation - m.links[i].local.translation).norm() <
          1e-12);
    CHECK(back.links[i].render.vertices().size() ==
          m.links[i].render.vertices().size());
    CHECK(back.links[i].collision.spheres.size() ==
          m.links[i].collision.spheres.size());
  }
  for (size_t j = 0; j < m.joints.size(); ++j) {
    CHECK(back.joints[j].child_link == m.joints[j].child_link);
    CHECK(back.joints[j].lo == m.joints[j].lo);
    CHECK(back.joints[j].hi == m.joints[j].hi);
  }
  CHECK(back.pads.size() == m.pads.size());
  std::remove(path.c_str());
}

TEST_SUITE_END();
