#include "doctest.h"

#include "syn/physics.hpp"

using namespace syn;

namespace {

RigidBody plain_sphere(const Vec3& pos, double radius, double mass,
                       const std::string& id = "sphere") {
  RigidBody b;
  b.object_id = id;
  b.mass = mass;
  double i = 0.4 * mass * radius * radius;
  b.inertia = Vec3(i, i, i);
  b.collision = SphereSet({{Vec3::Zero(), radius}});
  b.pose.translation = pos;
  return b;
}

// A hand far away so hand spheres never participate.
WorldState bare_world() {
  WorldState w;
  w.hand_base.translation = Vec3(100, 100, 100);
  return w;
}

}  // namespace

TEST_SUITE_BEGIN("physics");

TEST_CASE("separated spheres produce no contact") {
  WorldState w = bare_world();
  w.bodies.push_back(plain_sphere(Vec3(0, 0, 0), 0.02, 1.0, "a"));
  w.bodies.push_back(plain_sphere(Vec3(0.05, 0, 0), 0.02, 1.0, "b"));
  HandModel model = make_default_hand();
  CHECK(detect_contacts(w, model).empty());
}

TEST_CASE("overlapping spheres produce the analytic overlap and normal") {
  WorldState w = bare_world();
  w.bodies.push_back(plain_sphere(Vec3(0.03, 0, 0), 0.02, 1.0, "a"));
  w.bodies.push_back(plain_sphere(Vec3(0, 0, 0), 0.02, 1.0, "b"));
  HandModel model = make_default_hand();
  auto contacts = detect_contacts(w, model);
  REQUIRE(contacts.size() == 1);
  CHECK(contacts[0].overlap == doctest::Approx(0.01).epsilon(1e-12));
  // normal from b to a, i.e. along the center line
  CHECK((contacts[0].normal - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("coincident centers fall back to the +z normal") {
  WorldState w = bare_world();
  w.bodies.push_back(plain_sphere(Vec3::Zero(), 0.02, 1.0, "a"));
  w.bodies.push_back(plain_sphere(Vec3::Zero(), 0.02, 1.0, "b"));
  HandModel model = make_default_hand();
  auto contacts = detect_contacts(w, model);
  REQUIRE(contacts.size() == 1);
  CHECK((contacts[0].normal - Vec3(0, 0, 1)).norm() == 0.0);
}

TEST_CASE("three mutually overlapping spheres give exactly 3 contacts") {
  WorldState w = bare_world();
  w.bodies.push_back(plain_sphere(Vec3(0, 0, 0), 0.03, 1.0, "a"));
  w.bodies.push_back(plain_sphere(Vec3(0.04, 0, 0), 0.03, 1.0, "b"));
  w.bodies.push_back(plain_sphere(Vec3(0.02, 0.03, 0), 0.03, 1.0, "c"));
  HandModel model = make_default_hand();
  auto contacts = detect_contacts(w, model);
  // Brute-force pair enumeration agrees.
  int expected = 0;
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = i + 1; j < 3; ++j)
      if ((w.bodies[i].pose.translation - w.bodies[j].pose.translation).norm() <
          0.06)
        ++expected;
  CHECK(expected == 3);
  CHECK(contacts.size() == 3);
}

TEST_CASE("contact_force static spring") {
  ContactParams p;
  Vec3 f = contact_force(0.001, Vec3::Zero(), Vec3::UnitZ(), p);
  CHECK((f - Vec3(0, 0, 5.0)).norm() < 1e-12);
}

TEST_CASE("contact_force approach damping adds to the normal force") {
  ContactParams p;  // k_n = 5000, c_n = 10
  double fn = 0;
  contact_force(0.001, Vec3(0, 0, -0.1), Vec3::UnitZ(), p, &fn);
  CHECK(fn == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("contact_force friction is capped at mu * Fn") {
  ContactParams p;
  p.k_t = 100.0;  // force the viscous branch above the Coulomb cap
  Vec3 f = contact_force(0.001, Vec3(1.0, 0, 0), Vec3::UnitZ(), p);
  // normal 5 N, viscous would be 100 N, cap at 5 N opposing the slide
  CHECK(f.z() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(f.x() == doctest::Approx(-5.0).epsilon(1e-12));
}

TEST_CASE("free fall matches the analytic drop within 2%") {
  WorldState w = bare_world();
  w.bodies.push_back(plain_sphere(Vec3(0, 0, 0), 0.02, 0.1));
  HandModel model = make_default_hand();
  ControlConfig cfg;
  ContactParams p;
  for (int step = 0; step < 10; ++step)
    step_world(w, model, cfg, p, 0.005, 20);  // 1 s total
  double drop = -w.bodies[0].pose.translation.z();
  CHECK(drop == doctest::Approx(0.5 * 9.81).epsilon(0.02));
}

TEST_CASE("sphere rests in a rigid cup within 1 mm over 500 control steps") {
  WorldState w = bare_world();
  // Cradle of four fixed spheres plus a falling ball.
  RigidBody cup;
  cup.object_id = "cup";
  cup.fixed = true;
  cup.mass = 1.0;
  cup.inertia = Vec3::Ones();
  std::vector<Sphere> s;
  for (int i = 0; i < 4; ++i) {
    double a = i * M_PI / 2;
    s.push_back({Vec3(0.045 * std::cos(a), 0.045 * std::sin(a), -0.025), 0.03});
  }
  cup.collision = SphereSet(s);
  w.bodies.push_back(cup);
  w.bodies.push_back(plain_sphere(Vec3(0.001, 0, 0.010), 0.025, 0.1, "ball"));

  HandModel model = make_default_hand();
  ControlConfig cfg;
  ContactParams p;
  // Settle, then demand static equilibrium.
  for (int step = 0; step < 20; ++step) step_world(w, model, cfg, p, 0.005, 20);
  Vec3 start = w.bodies[1].pose.translation;
  for (int step = 0; step < 500; ++step) step_world(w, model, cfg, p, 0.005, 20);
  CHECK((w.bodies[1].pose.translation - start).norm() < 1e-3);
}

TEST_CASE("torque-free rotation integrates one radian per second") {
  WorldState w = bare_world();
  w.gravity = Vec3::Zero();
  w.bodies.push_back(plain_sphere(Vec3::Zero(), 0.02, 0.1));
  w.bodies[0].angvel = Vec3(0, 0, 1);
  HandModel model = make_default_hand();
  ControlConfig cfg;
  ContactParams p;
  for (int step = 0; step < 10; ++step) step_world(w, model, cfg, p, 0.005, 20);
  Eigen::AngleAxisd aa(w.bodies[0].pose.rotation);
  double angle = aa.angle() * (aa.axis().z() > 0 ? 1.0 : -1.0);
  CHECK(angle == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(aa.axis().cwiseAbs().z() - 1.0) < 1e-9);
}

TEST_CASE("momentum is conserved in object-object impact (third law)") {
  WorldState w = bare_world();
  w.gravity = Vec3::Zero();
  w.bodies.push_back(plain_sphere(Vec3(-0.03, 0, 0), 0.02, 0.1, "a"));
  w.bodies.push_back(plain_sphere(Vec3(0.03, 0.001, 0), 0.02, 0.2, "b"));
  w.bodies[0].linvel = Vec3(0.5, 0, 0);
  HandModel model = make_default_hand();
  ControlConfig cfg;
  ContactParams p;
  Vec3 momentum0 =
      w.bodies[0].mass * w.bodies[0].linvel + w.bodies[1].mass * w.bodies[1].linvel;
  for (int step = 0; step < 5; ++step) step_world(w, model, cfg, p, 0.005, 20);
  Vec3 momentum1 =
      w.bodies[0].mass * w.bodies[0].linvel + w.bodies[1].mass * w.bodies[1].linvel;
  CHECK((momentum1 - momentum0).norm() < 1e-9);
  CHECK(w.bodies[1].linvel.norm() > 0.01);  // the impact actually happened
}

TEST_CASE("frictionless bounce conserves energy within 5% over 1 s") {
  WorldState w = bare_world();
  RigidBody ground;
  ground.object_id = "anchor";
  ground.fixed = true;
  ground.mass = 1.0;
  ground.inertia = Vec3::Ones();
  ground.collision = SphereSet({{Vec3(0, 0, -0.5), 0.5}});
  w.bodies.push_back(ground);
  w.bodies.push_back(plain_sphere(Vec3(0, 0, 0.08), 0.02, 0.1, "ball"));

  HandModel model = make_default_hand();
  ControlConfig cfg;
  ContactParams p;
  p.mu = 0.0;
  p.c_n = 0.0;
  p.k_t = 0.0;

  auto energy = [&](const WorldState& ws) {
    const RigidBody& b = ws.bodies[1];
    double e = 0.5 * b.mass * b.linvel.squaredNorm() +
               b.mass * 9.81 * b.pose.translation.z();
    // Spring potential while penetrating the anchor sphere.
    double pen = 0.02 + 0.5 - (b.pose.translation - Vec3(0, 0, -0.5)).norm();
    if (pen > 0) e += 0.5 * p.k_n * pen * pen;
    return e;
  };
  double e0 = energy(w);
  for (int step = 0; step < 10; ++step)
    step_world(w, model, cfg, p, 1.0 / 2000.0, 200);
  double e1 = energy(w);
  CHECK(e1 == doctest::Approx(e0).epsilon(0.05));
}

TEST_CASE("pad forces binarize at the inclusive threshold") {
  WorldState w = bare_world();
  ContactParams p;
  auto r0 = read_tactile(w, p);
  CHECK(r0.binary.norm() == 0.0);

  w.pad_forces[3] = p.theta_th;  // exactly at threshold: inclusive
  w.pad_forces[5] = p.theta_th - 1e-9;
  auto r1 = read_tactile(w, p);
  CHECK(r1.binary[3] == 1.0);
  CHECK(r1.binary[5] == 0.0);
  CHECK(r1.binary.sum() == 1.0);
}

TEST_CASE("object resting on the default palm triggers the palm pad") {
  HandModel model = make_default_hand();
  WorldState w;  // hand at origin
  ObjectSpec ball = make_ball("ball", 0.035, 0.1);
  RigidBody b = RigidBody::from_spec(ball);
  b.pose.translation = ball.spawn_offset;
  w.bodies.push_back(b);
  ControlConfig cfg;
  ContactParams p;
  for (int step = 0; step < 30; ++step) step_world(w, model, cfg, p, 0.005, 20);
  // Ball must have settled on the palm, not fallen through.
  CHECK(w.bodies[0].pose.translation.z() > 0.0);
  CHECK(w.bodies[0].pose.translation.head<2>().norm() < 0.05);
  auto touch = read_tactile(w, p);
  CHECK(touch.binary[15] == 1.0);  // palm pad is the last one
}

TEST_CASE("simulation is deterministic") {
  auto run = [] {
    WorldState w;
    ObjectSpec ball = make_ball("ball", 0.035, 0.1);
    RigidBody b = RigidBody::from_spec(ball);
    b.pose.translation = ball.spawn_offset + Vec3(0.002, -0.001, 0.001);
    w.bodies.push_back(b);
    HandModel model = make_default_hand();
    ControlConfig cfg;
    ContactParams p;
    HandState& h = w.hand;
    for (int step = 0; step < 40; ++step) {
      VecX a = VecX::Constant(kNumJoints, (step % 5 - 2) * 0.3);
      apply_action(h, a, model, cfg, step);
      step_world(w, model, cfg, p, 0.005, 20);
    }
    return w;
  };
  WorldState w1 = run();
  WorldState w2 = run();
  CHECK(w1.bodies[0].pose.translation == w2.bodies[0].pose.translation);
  CHECK(w1.bodies[0].linvel == w2.bodies[0].linvel);
  CHECK(w1.hand.q == w2.hand.q);
  CHECK(w1.pad_forces == w2.pad_forces);
}

TEST_SUITE_END();
