#include "doctest.h"

#include <cstdio>

#include "syn/synesthesia.hpp"

using namespace syn;

namespace {

// Point-to-triangle distance oracle (projection onto the plane, then edge
// clamping), used to verify sampled/raycast points lie on mesh surfaces.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  Vec3 bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  Vec3 cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    double v = d2 / (d2 - d6);
    return (p - (a + v * ac)).norm();
  }
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double v = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + v * (c - b))).norm();
  }
  double denom = 1.0 / (vc + vb + va);
  double v = vb * denom, w = vc * denom;
  return (p - (a + ab * v + ac * w)).norm();
}

double point_mesh_distance(const Vec3& p, const TriMesh& mesh) {
  double best = std::numeric_limits<double>::max();
  const auto& verts = mesh.vertices();
  for (const auto& t : mesh.triangles())
    best = std::min(best, point_triangle_distance(p, verts[t[0]], verts[t[1]],
                                                  verts[t[2]]));
  return best;
}

WorldState hand_only_world() {
  WorldState w;
  return w;
}

}  // namespace

TEST_SUITE_BEGIN("synesthesia");

TEST_CASE("empty view falls back to 512 copies of the palm origin") {
  HandModel model = make_default_hand();
  WorldState w;
  w.hand_base.translation = Vec3(10, 10, 10);  // outside the workspace box
  CameraSpec cam = make_default_camera();
  Rng rng(1);
  Mat cloud = build_camera_cloud(w, model, cam, rng);
  REQUIRE(cloud.rows() == 512);
  for (int i = 0; i < cloud.rows(); ++i)
    CHECK((cloud.row(i).transpose() - w.hand_base.translation).norm() == 0.0);
}

TEST_CASE("camera points on a lone sphere lie on its surface") {
  HandModel model = make_default_hand();
  WorldState w;
  w.hand_base.translation = Vec3(10, 10, 10);
  TriMesh sphere = make_uv_sphere_mesh(0.12, 24, 48);
  RigidBody b;
  b.object_id = "ball";
  b.render = &sphere;
  w.bodies.push_back(b);
  CameraSpec cam = make_default_camera();
  Rng rng(2);
  Mat cloud = build_camera_cloud(w, model, cam, rng);
  REQUIRE(cloud.rows() == 512);
  // Every point sits on the rendered surface, and within the chordal band
  // of the analytic sphere.
  for (int i = 0; i < cloud.rows(); ++i) {
    Vec3 p = cloud.row(i).transpose();
    CHECK(point_mesh_distance(p, sphere) < 1e-6);
    CHECK(p.norm() <= 0.12 + 1e-9);
    CHECK(p.norm() > 0.12 * 0.99);
  }
}

TEST_CASE("camera cloud length is exactly 512 for sparse and dense scenes") {
  HandModel model = make_default_hand();
  CameraSpec cam = make_default_camera();
  Rng rng(3);
  // Dense: the whole hand in view.
  WorldState w = hand_only_world();
  CHECK(build_camera_cloud(w, model, cam, rng).rows() == 512);
  // Sparse: a tiny distant sliver yields fewer hits than 512, then pads.
  WorldState w2;
  w2.hand_base.translation = Vec3(10, 10, 10);
  TriMesh speck = make_box_mesh(Vec3(0.004, 0.004, 0.004));
  RigidBody b;
  b.render = &speck;
  w2.bodies.push_back(b);
  Mat cloud = build_camera_cloud(w2, model, cam, rng);
  REQUIRE(cloud.rows() == 512);
  for (int i = 0; i < cloud.rows(); ++i)
    CHECK(point_mesh_distance(cloud.row(i).transpose(), speck) < 1e-6);
}

TEST_CASE("augmented cloud has 8 points per link and tracks FK") {
  HandModel model = make_default_hand();
  Rng rng(4);
  CloudSampleCache cache = make_cloud_cache(model, rng);
  VecX q = VecX::Zero(kNumJoints);
  auto zero_poses = forward_kinematics(model, RigidTransform::identity(), q);
  Mat zero_cloud = build_augmented_cloud(model, zero_poses, cache);
  REQUIRE(zero_cloud.rows() == 168);

  // Zero pose: every point equals its local sample mapped by the link pose.
  int row = 0;
  for (size_t i = 0; i < model.links.size(); ++i)
    for (const Vec3& p : cache.link_local[i]) {
      CHECK((zero_cloud.row(row).transpose() - zero_poses[i].apply(p)).norm() <
            1e-12);
      ++row;
    }

  // Moving one joint displaces only points on descendant links.
  int jidx = 1;  // index finger first curl
  q[jidx] = 0.5;
  auto moved_poses = forward_kinematics(model, RigidTransform::identity(), q);
  Mat moved_cloud = build_augmented_cloud(model, moved_poses, cache);
  std::vector<bool> descendant(model.links.size(), false);
  descendant[model.joints[jidx].child_link] = true;
  for (size_t i = 0; i < model.links.size(); ++i)
    if (model.links[i].parent >= 0 && descendant[model.links[i].parent])
      descendant[i] = true;
  for (size_t i = 0; i < model.links.size(); ++i) {
    double delta = (moved_cloud.middleRows(int(i) * 8, 8) -
                    zero_cloud.middleRows(int(i) * 8, 8))
                       .norm();
    if (descendant[i])
      CHECK(delta > 1e-6);
    else
      CHECK(delta == 0.0);
  }
}

TEST_CASE("tactile cloud contributes 8 on-surface points per active pad") {
  HandModel model = make_default_hand();
  Rng rng(5);
  CloudSampleCache cache = make_cloud_cache(model, rng);
  auto poses = forward_kinematics(model, RigidTransform::identity(),
                                  VecX::Zero(kNumJoints));

  VecX none = VecX::Zero(kNumPads);
  CHECK(build_tactile_cloud(model, poses, none, cache).rows() == 0);

  VecX all = VecX::Ones(kNumPads);
  Mat cloud = build_tactile_cloud(model, poses, all, cache);
  REQUIRE(cloud.rows() == 128);
  int row = 0;
  for (int i = 0; i < kNumPads; ++i) {
    const SensorPad& pad = model.pads[i];
    RigidTransform world = poses[pad.parent_link].compose(pad.local);
    RigidTransform inv = world.inverse();
    for (int s = 0; s < 8; ++s) {
      Vec3 local = inv.apply(cloud.row(row++).transpose());
      CHECK(point_mesh_distance(local, pad.mesh) < 1e-9);
    }
  }

  // Pads contribute iff active.
  VecX some = VecX::Zero(kNumPads);
  some[2] = 1.0;
  some[15] = 1.0;
  Mat two = build_tactile_cloud(model, poses, some, cache);
  REQUIRE(two.rows() == 16);
}

TEST_CASE("fuse applies one-hot labels and the size law") {
  Rng rng(6);
  auto randmat = [&rng](int n) {
    Mat m(n, 3);
    for (int i = 0; i < n; ++i)
      m.row(i) << rng.normal(), rng.normal(), rng.normal();
    return m;
  };
  for (int n_touch : {0, 3, 16}) {
    Mat cam = randmat(512), aug = randmat(168), tac = randmat(8 * n_touch);
    LabeledPointCloud c = fuse(cam, aug, tac, RigidTransform::identity());
    CHECK(c.size() == 680 + 8 * n_touch);
    CHECK(c.labels.col(0).sum() == 512.0);
    CHECK(c.labels.col(1).sum() == 168.0);
    CHECK(c.labels.col(2).sum() == double(8 * n_touch));
    for (int i = 0; i < c.size(); ++i) {
      CHECK(c.labels.row(i).sum() == 1.0);
      CHECK(c.labels.row(i).maxCoeff() == 1.0);
    }
    // Identity palm leaves the points unchanged, in input order.
    CHECK((c.points.topRows(512) - cam).norm() == 0.0);
    CHECK((c.points.middleRows(512, 168) - aug).norm() == 0.0);
    if (n_touch > 0) CHECK((c.points.bottomRows(8 * n_touch) - tac).norm() == 0.0);
  }
}

TEST_CASE("palm-frame cloud is invariant under a global rigid motion") {
  HandModel model = make_default_hand();
  RigidTransform G = RigidTransform::from_axis_angle(
      Vec3(0.3, -0.2, 0.93).normalized(), 0.8, Vec3(0.4, -0.1, 0.25));

  auto pipeline = [&](const RigidTransform& g) {
    WorldState w;
    w.hand_base = g;
    ObjectCatalog cat;  // one ball in hand
    cat["ball"] = make_ball("ball", 0.03, 0.1);
    RigidBody b = RigidBody::from_spec(cat["ball"]);
    b.pose = g.compose(RigidTransform{Quat::Identity(), Vec3(0, 0, 0.045)});
    w.bodies.push_back(b);

    CameraSpec cam;  // no workspace crop so the box stays axis-free
    cam.pose = g.compose(look_at(Vec3(0.45, 0.0, 0.30), Vec3::Zero()));
    Rng cam_rng(7);
    Mat camera = build_camera_cloud(w, model, cam, cam_rng);

    Rng cache_rng(8);
    CloudSampleCache cache = make_cloud_cache(model, cache_rng);
    auto poses = forward_kinematics(model, w.hand_base, w.hand.q);
    Mat augmented = build_augmented_cloud(model, poses, cache);
    VecX o_t = VecX::Zero(kNumPads);
    o_t[15] = 1.0;
    Mat tactile = build_tactile_cloud(model, poses, o_t, cache);
    return fuse(camera, augmented, tactile, poses[model.palm_link]);
  };

  LabeledPointCloud base = pipeline(RigidTransform::identity());
  LabeledPointCloud moved = pipeline(G);
  REQUIRE(base.size() == moved.size());
  CHECK((base.points - moved.points).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((base.labels - moved.labels).norm() == 0.0);
}

TEST_CASE("observation stacking pads missing history with frame zero") {
  HandModel model = make_default_hand();
  WorldState w;
  RigidBody b;
  b.collision = SphereSet({{Vec3::Zero(), 0.02}});
  w.bodies.push_back(b);
  w.hand.q = VecX::Constant(kNumJoints, 0.2);
  VecX o_t = VecX::Zero(kNumPads);

  ObsHistory h;
  h.push(w, o_t);
  VecX f = VecX::Zero(kShapeEmbedding);
  TeacherObservation t = build_teacher_observation(h, Vec3::UnitZ(), f);
  CHECK(t.vec.size() == 263);
  int len = 3 * kNumJoints + 9;
  for (int i = 1; i < 4; ++i)
    CHECK((t.vec.segment(0, len) - t.vec.segment(i * len, len)).norm() == 0.0);

  StudentObservation s = build_student_observation(h, Vec3::UnitZ(), {});
  CHECK(s.proprio.size() == 195);
  for (int i = 1; i < 4; ++i)
    CHECK((s.proprio.segment(0, 48) - s.proprio.segment(i * 48, 48)).norm() ==
          0.0);

  // After 5 pushes only the latest 4 frames remain, oldest first.
  for (int step = 1; step < 5; ++step) {
    w.hand.q = VecX::Constant(kNumJoints, 0.2 + 0.1 * step);
    h.push(w, o_t);
  }
  t = build_teacher_observation(h, Vec3::UnitZ(), f);
  for (int i = 0; i < 4; ++i)
    CHECK(t.vec[i * len] == doctest::Approx(0.2 + 0.1 * (i + 1)).epsilon(1e-12));
  // Axis and embedding ride at the tail.
  CHECK(t.vec[4 * len + 2] == 1.0);
}

TEST_CASE("PLY round trip preserves points and labels") {
  Rng rng(9);
  Mat cam(2, 3), aug(1, 3), tac(1, 3);
  cam << 0.1, 0.2, 0.3, -0.4, 0.5, -0.6;
  aug << 1.5, -2.5, 0.25;
  tac << 0.0, 0.125, -1.0;
  LabeledPointCloud c = fuse(cam, aug, tac, RigidTransform::identity());
  std::string path = "test_cloud_roundtrip.ply";
  save_cloud_ply(c, path);
  LabeledPointCloud back = load_cloud_ply(path);
  REQUIRE(back.size() == c.size());
  CHECK((back.points - c.points).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.labels - c.labels).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_SUITE_END();
