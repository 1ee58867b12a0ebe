#include "doctest.h"

#include <cmath>

#include "syn/geometry.hpp"

using namespace syn;

namespace {

RigidTransform random_transform(Rng& rng) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-6) axis = Vec3::UnitZ();
  return RigidTransform::from_axis_angle(
      axis, rng.uniform(-3.0, 3.0),
      Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
}

}  // namespace

TEST_SUITE_BEGIN("geometry");

TEST_CASE("transform_points identity and analytic rotation") {
  RigidTransform id = RigidTransform::identity();
  auto out = transform_points(id, {Vec3(1, 2, 3)});
  CHECK(out[0] == Vec3(1, 2, 3));

  auto rz = RigidTransform::from_axis_angle(Vec3::UnitZ(), M_PI / 2);
  Vec3 p = rz.apply(Vec3(1, 0, 0));
  CHECK((p - Vec3(0, 1, 0)).norm() < 1e-9);
}

TEST_CASE("transform inverse composition recovers points") {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    RigidTransform T = random_transform(rng);
    Vec3 p(rng.normal(), rng.normal(), rng.normal());
    Vec3 back = T.inverse().apply(T.apply(p));
    CHECK((back - p).norm() < 1e-9);
    RigidTransform I = T.compose(T.inverse());
    CHECK(I.translation.norm() < 1e-9);
    CHECK(std::abs(std::abs(I.rotation.w()) - 1.0) < 1e-9);
  }
}

TEST_CASE("transform composition is associative") {
  Rng rng(11);
  for (int i = 0; i < 30; ++i) {
    RigidTransform a = random_transform(rng);
    RigidTransform b = random_transform(rng);
    RigidTransform c = random_transform(rng);
    Vec3 p(rng.normal(), rng.normal(), rng.normal());
    Vec3 u = a.compose(b.compose(c)).apply(p);
    Vec3 v = a.compose(b).compose(c).apply(p);
    CHECK((u - v).norm() < 1e-9);
  }
}

TEST_CASE("sample_surface containment and count") {
  // Unit square in the z=0 plane, two triangles.
  TriMesh square({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}},
                 {{0, 1, 2}, {0, 2, 3}});
  Rng rng(3);
  auto pts = sample_surface(square, 100, rng);
  CHECK(pts.size() == 100);
  for (const Vec3& p : pts) {
    CHECK(p.x() >= 0.0);
    CHECK(p.x() <= 1.0);
    CHECK(p.y() >= 0.0);
    CHECK(p.y() <= 1.0);
    CHECK(p.z() == 0.0);
  }
  CHECK(sample_surface(square, 0, rng).empty());
}

TEST_CASE("sample_surface is area-proportional") {
  // Two triangles with area ratio 3:1.
  TriMesh mesh({{0, 0, 0}, {3, 0, 0}, {0, 2, 0}, {10, 0, 0}, {11, 0, 0}, {10, 2, 0}},
               {{0, 1, 2}, {3, 4, 5}});
  Rng rng(5);
  auto pts = sample_surface(mesh, 40000, rng);
  int big = 0;
  for (const Vec3& p : pts)
    if (p.x() < 5.0) ++big;
  double frac = double(big) / pts.size();
  CHECK(frac == doctest::Approx(0.75).epsilon(0.0134));  // ±0.01 absolute
  CHECK(std::abs(frac - 0.75) < 0.01);
}

TEST_CASE("sample_surface points lie on the mesh surface") {
  TriMesh mesh = make_box_mesh(Vec3(0.3, 0.2, 0.1));
  Rng rng(9);
  auto pts = sample_surface(mesh, 200, rng);
  for (const Vec3& p : pts) {
    double best = 1e9;
    for (const auto& tri : mesh.triangles()) {
      const Vec3& a = mesh.vertices()[tri[0]];
      Vec3 n = (mesh.vertices()[tri[1]] - a).cross(mesh.vertices()[tri[2]] - a);
      best = std::min(best, std::abs(n.normalized().dot(p - a)));
    }
    CHECK(best < 1e-9);
  }
}

TEST_CASE("sample_surface rejects degenerate meshes") {
  TriMesh degen({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}}, {{0, 1, 2}});
  Rng rng(1);
  CHECK_THROWS_WITH_AS(sample_surface(degen, 4, rng), "degenerate mesh", SynError);
}

TEST_CASE("sample_surface is deterministic for a fixed seed") {
  TriMesh mesh = make_box_mesh(Vec3(0.1, 0.1, 0.1));
  Rng a(42), b(42);
  auto pa = sample_surface(mesh, 64, a);
  auto pb = sample_surface(mesh, 64, b);
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("raycast hits a unit cube at the analytic distance") {
  TriMesh cube = make_box_mesh(Vec3(0.5, 0.5, 0.5));
  std::vector<PosedMesh> scene = {{&cube, RigidTransform::identity()}};
  auto hit = raycast(scene, {Vec3(0, 0, 2), Vec3(0, 0, -1)});
  REQUIRE(hit.has_value());
  CHECK(hit->distance == doctest::Approx(1.5).epsilon(1e-12));
  CHECK((hit->point - Vec3(0, 0, 0.5)).norm() < 1e-9);
}

TEST_CASE("raycast miss returns nullopt") {
  TriMesh cube = make_box_mesh(Vec3(0.5, 0.5, 0.5));
  std::vector<PosedMesh> scene = {{&cube, RigidTransform::identity()}};
  CHECK(!raycast(scene, {Vec3(0, 0, 2), Vec3(0, 0, 1)}).has_value());
}

TEST_CASE("raycast returns the nearer of two coaxial cubes") {
  TriMesh cube = make_box_mesh(Vec3(0.2, 0.2, 0.2));
  RigidTransform near_pose{Quat::Identity(), Vec3(0, 0, 0.5)};
  RigidTransform far_pose{Quat::Identity(), Vec3(0, 0, 2.0)};
  std::vector<PosedMesh> scene = {{&cube, far_pose}, {&cube, near_pose}};
  auto hit = raycast(scene, {Vec3(0, 0, 5), Vec3(0, 0, -1)});
  REQUIRE(hit.has_value());
  CHECK(hit->distance == doctest::Approx(5.0 - 2.2).epsilon(1e-12));
}

TEST_CASE("raycast distance matches brute force over all triangles") {
  TriMesh sphere = make_uv_sphere_mesh(0.4);
  TriMesh box = make_box_mesh(Vec3(0.2, 0.3, 0.1), Vec3(0.1, 0, 0.8));
  std::vector<PosedMesh> scene = {
      {&sphere, RigidTransform::from_axis_angle(Vec3(1, 2, 3), 0.7, Vec3(0.05, -0.1, 0))},
      {&box, RigidTransform::identity()}};
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    Vec3 o(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1.5, 3.0));
    Vec3 d = (Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.3) - o).normalized();
    auto hit = raycast(scene, {o, d});
    // Brute force: test every triangle of every mesh in world space.
    double best = 1e18;
    for (const auto& pm : scene)
      for (const auto& tri : pm.mesh->triangles()) {
        Vec3 a = pm.pose.apply(pm.mesh->vertices()[tri[0]]);
        Vec3 b = pm.pose.apply(pm.mesh->vertices()[tri[1]]);
        Vec3 c = pm.pose.apply(pm.mesh->vertices()[tri[2]]);
        auto t = ray_triangle(o, d, a, b, c);
        if (t) best = std::min(best, *t);
      }
    if (hit) {
      CHECK(best < 1e17);
      CHECK(hit->distance == doctest::Approx(best).epsilon(1e-9));
    } else {
      CHECK(best > 1e17);
    }
  }
}

TEST_CASE("OBJ round trip preserves geometry") {
  TriMesh mesh = make_prism_mesh(5, 0.03, 0.02);
  std::string path = "test_geometry_roundtrip.obj";
  mesh.save_obj(path);
  TriMesh back = TriMesh::load_obj(path);
  REQUIRE(back.vertices().size() == mesh.vertices().size());
  REQUIRE(back.triangles().size() == mesh.triangles().size());
  for (size_t i = 0; i < mesh.vertices().size(); ++i)
    CHECK((back.vertices()[i] - mesh.vertices()[i]).norm() < 1e-7);
  CHECK(back.total_area() == doctest::Approx(mesh.total_area()).epsilon(1e-6));
  std::remove(path.c_str());
}

TEST_SUITE_END();
