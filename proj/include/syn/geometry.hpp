#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "syn/common.hpp"
#include "syn/rng.hpp"

namespace syn {

// ---------------------------------------------------------------------------
// Rigid transforms

struct RigidTransform {
  Quat rotation{1, 0, 0, 0};
  Vec3 translation{0, 0, 0};

  static RigidTransform identity() { return {}; }

  static RigidTransform from_axis_angle(const Vec3& axis, double angle,
                                        const Vec3& t = Vec3::Zero()) {
    return {Quat(Eigen::AngleAxisd(angle, axis.normalized())), t};
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform compose(const RigidTransform& other) const {
    // this ∘ other: apply `other` first, then `this`.
    Quat q = rotation * other.rotation;
    q.normalize();
    return {q, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    Quat qi = rotation.conjugate();
    return {qi, -(qi * translation)};
  }
};

inline std::vector<Vec3> transform_points(const RigidTransform& T,
                                          const std::vector<Vec3>& pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& p : pts) out.push_back(T.apply(p));
  return out;
}

// ---------------------------------------------------------------------------
// Triangle meshes

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
          std::numeric_limits<double>::max()};
  Vec3 hi{std::numeric_limits<double>::lowest(),
          std::numeric_limits<double>::lowest(),
          std::numeric_limits<double>::lowest()};

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool valid() const { return (lo.array() <= hi.array()).all(); }
};

// Slab test; returns false when the ray misses or exits before t = 0.
inline bool ray_hits_aabb(const Vec3& origin, const Vec3& dir, const Aabb& box,
                          double t_max = std::numeric_limits<double>::max()) {
  double t0 = 0.0, t1 = t_max;
  for (int i = 0; i < 3; ++i) {
    double inv = 1.0 / dir[i];
    double ta = (box.lo[i] - origin[i]) * inv;
    double tb = (box.hi[i] - origin[i]) * inv;
    if (inv < 0.0) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

class TriMesh {
 public:
  TriMesh() = default;
  TriMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    validate_and_cache();
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<double>& areas() const { return areas_; }
  double total_area() const { return total_area_; }
  const Aabb& bounds() const { return bounds_; }

  static TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "cannot open OBJ file: " + path);
    return parse_obj(in, path);
  }

  static TriMesh parse_obj(std::istream& in, const std::string& name = "<obj>") {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "v") {
        double x, y, z;
        ls >> x >> y >> z;
        check(!ls.fail(), "malformed vertex in " + name);
        verts.emplace_back(x, y, z);
      } else if (tag == "f") {
        std::vector<int> idx;
        std::string tok;
        while (ls >> tok) {
          // Accept "i", "i/..", "i//.." forms; keep only the vertex index.
          idx.push_back(std::stoi(tok.substr(0, tok.find('/'))));
        }
        check(idx.size() >= 3, "face with <3 vertices in " + name);
        for (size_t i = 1; i + 1 < idx.size(); ++i)
          tris.push_back({idx[0] - 1, idx[i] - 1, idx[i + 1] - 1});
      }
    }
    return TriMesh(std::move(verts), std::move(tris));
  }

  void save_obj(const std::string& path) const {
    std::ofstream out(path);
    check(out.good(), "cannot write OBJ file: " + path);
    char buf[128];
    for (const Vec3& v : vertices_) {
      std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
      out << buf;
    }
    for (const auto& t : triangles_)
      out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }

 private:
  void validate_and_cache() {
    areas_.resize(triangles_.size());
    total_area_ = 0.0;
    for (size_t i = 0; i < triangles_.size(); ++i) {
      for (int k : triangles_[i])
        check(k >= 0 && k < int(vertices_.size()),
              "triangle index out of range");
      const Vec3& a = vertices_[triangles_[i][0]];
      const Vec3& b = vertices_[triangles_[i][1]];
      const Vec3& c = vertices_[triangles_[i][2]];
      areas_[i] = 0.5 * (b - a).cross(c - a).norm();
      total_area_ += areas_[i];
    }
    for (const Vec3& v : vertices_) bounds_.expand(v);
  }

  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<double> areas_;
  double total_area_ = 0.0;
  Aabb bounds_;
};

// ---------------------------------------------------------------------------
// Sphere sets (collision proxies)

struct Sphere {
  Vec3 center;
  double radius;
};

struct SphereSet {
  std::vector<Sphere> spheres;

  SphereSet() = default;
  explicit SphereSet(std::vector<Sphere> s) : spheres(std::move(s)) {
    for (const Sphere& sp : spheres)
      check(sp.radius > 0.0, "sphere radius must be positive");
  }
};

// ---------------------------------------------------------------------------
// Surface sampling

// Area-proportional triangle choice, barycentric-uniform within the triangle.
inline std::vector<Vec3> sample_surface(const TriMesh& mesh, int n, Rng& rng) {
  check(n >= 0, "sample count must be non-negative");
  check(mesh.total_area() > 0.0, "degenerate mesh");
  std::vector<double> cdf(mesh.areas().size());
  double acc = 0.0;
  for (size_t i = 0; i < cdf.size(); ++i) {
    acc += mesh.areas()[i];
    cdf[i] = acc;
  }
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * acc;
    size_t t = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    if (t >= cdf.size()) t = cdf.size() - 1;
    const auto& tri = mesh.triangles()[t];
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    const Vec3& a = mesh.vertices()[tri[0]];
    const Vec3& b = mesh.vertices()[tri[1]];
    const Vec3& c = mesh.vertices()[tri[2]];
    out.push_back((1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raycasting

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
};

struct RayHit {
  double distance;
  Vec3 point;
};

// Möller–Trumbore with epsilon 1e-12 for parallel rejection.
inline std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir,
                                          const Vec3& a, const Vec3& b,
                                          const Vec3& c) {
  constexpr double kEps = 1e-12;
  Vec3 e1 = b - a;
  Vec3 e2 = c - a;
  Vec3 p = dir.cross(e2);
  double det = e1.dot(p);
  if (std::abs(det) < kEps) return std::nullopt;
  double inv = 1.0 / det;
  Vec3 s = origin - a;
  double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  Vec3 q = s.cross(e1);
  double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  double t = e2.dot(q) * inv;
  if (t <= kEps) return std::nullopt;
  return t;
}

struct PosedMesh {
  const TriMesh* mesh;
  RigidTransform pose;
};

// Nearest positive-distance hit over all meshes, or nullopt on a miss.
inline std::optional<RayHit> raycast(const std::vector<PosedMesh>& meshes,
                                     const Ray& ray) {
  double best = std::numeric_limits<double>::max();
  bool hit = false;
  for (const PosedMesh& pm : meshes) {
    if (!pm.mesh || pm.mesh->triangles().empty()) continue;
    // Work in mesh-local frame so the cached AABB can cull.
    RigidTransform inv = pm.pose.inverse();
    Vec3 o = inv.apply(ray.origin);
    Vec3 d = inv.rotation * ray.direction;
    if (!ray_hits_aabb(o, d, pm.mesh->bounds(), best)) continue;
    const auto& verts = pm.mesh->vertices();
    for (const auto& tri : pm.mesh->triangles()) {
      auto t = ray_triangle(o, d, verts[tri[0]], verts[tri[1]], verts[tri[2]]);
      if (t && *t < best) {
        best = *t;
        hit = true;
      }
    }
  }
  if (!hit) return std::nullopt;
  return RayHit{best, ray.origin + best * ray.direction};
}

// ---------------------------------------------------------------------------
// Primitive mesh builders (hand links, objects, test fixtures)

inline TriMesh make_box_mesh(const Vec3& half_extents,
                             const Vec3& center = Vec3::Zero()) {
  const Vec3& h = half_extents;
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i)
    v.push_back(center + Vec3((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                              (i & 4) ? h.z() : -h.z()));
  std::vector<std::array<int, 3>> f = {
      {0, 2, 3}, {0, 3, 1},  // z-
      {4, 5, 7}, {4, 7, 6},  // z+
      {0, 1, 5}, {0, 5, 4},  // y-
      {2, 6, 7}, {2, 7, 3},  // y+
      {0, 4, 6}, {0, 6, 2},  // x-
      {1, 3, 7}, {1, 7, 5},  // x+
  };
  return TriMesh(std::move(v), std::move(f));
}

inline TriMesh make_uv_sphere_mesh(double radius, int n_lat = 8, int n_lon = 12,
                                   const Vec3& center = Vec3::Zero()) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> f;
  constexpr double kPi = 3.14159265358979323846;
  for (int i = 0; i <= n_lat; ++i) {
    double th = kPi * i / n_lat;
    for (int j = 0; j < n_lon; ++j) {
      double ph = 2 * kPi * j / n_lon;
      v.push_back(center + radius * Vec3(std::sin(th) * std::cos(ph),
                                         std::sin(th) * std::sin(ph),
                                         std::cos(th)));
    }
  }
  auto at = [n_lon](int i, int j) { return i * n_lon + (j % n_lon); };
  for (int i = 0; i < n_lat; ++i)
    for (int j = 0; j < n_lon; ++j) {
      f.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      f.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  return TriMesh(std::move(v), std::move(f));
}

// Right prism with a regular n-gon cross-section in the xy plane.
inline TriMesh make_prism_mesh(int n_sides, double circumradius,
                               double half_height) {
  check(n_sides >= 3, "prism needs >= 3 sides");
  constexpr double kPi = 3.14159265358979323846;
  std::vector<Vec3> v;
  for (int s = 0; s < 2; ++s) {
    double z = s ? half_height : -half_height;
    for (int i = 0; i < n_sides; ++i) {
      double a = 2 * kPi * i / n_sides;
      v.emplace_back(circumradius * std::cos(a), circumradius * std::sin(a), z);
    }
  }
  std::vector<std::array<int, 3>> f;
  for (int i = 1; i + 1 < n_sides; ++i) {
    f.push_back({0, i + 1, i});                                    // bottom
    f.push_back({n_sides, n_sides + i, n_sides + i + 1});          // top
  }
  for (int i = 0; i < n_sides; ++i) {
    int j = (i + 1) % n_sides;
    f.push_back({i, j, n_sides + j});
    f.push_back({i, n_sides + j, n_sides + i});
  }
  return TriMesh(std::move(v), std::move(f));
}

inline TriMesh make_cylinder_mesh(double radius, double half_height,
                                  int n_sides = 16) {
  return make_prism_mesh(n_sides, radius, half_height);
}

}  // namespace syn
