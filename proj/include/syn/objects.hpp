#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "syn/geometry.hpp"
#include "syn/hand.hpp"

namespace syn {

struct ObjectSpec {
  std::string name;
  double mass = 0.1;         // kg
  Vec3 inertia = Vec3::Zero();  // diagonal, body frame
  TriMesh render;
  SphereSet collision;
  Vec3 spawn_offset = Vec3::Zero();  // nominal rest position over the palm
  std::string render_path;           // OBJ path when loaded from a catalog file
};

using ObjectCatalog = std::map<std::string, ObjectSpec>;

inline TriMesh merge_meshes(const std::vector<TriMesh>& parts) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> f;
  for (const TriMesh& m : parts) {
    int base = int(v.size());
    v.insert(v.end(), m.vertices().begin(), m.vertices().end());
    for (const auto& t : m.triangles())
      f.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return TriMesh(std::move(v), std::move(f));
}

// ---------------------------------------------------------------------------
// Builders

inline ObjectSpec make_ball(const std::string& name, double radius, double mass) {
  ObjectSpec o;
  o.name = name;
  o.mass = mass;
  double i = 0.4 * mass * radius * radius;
  o.inertia = Vec3(i, i, i);
  o.render = make_uv_sphere_mesh(radius);
  o.collision = SphereSet({{Vec3::Zero(), radius}});
  o.spawn_offset = Vec3(0, 0, radius + 0.008);
  return o;
}

inline ObjectSpec make_wrench(const std::string& name) {
  ObjectSpec o;
  o.name = name;
  o.mass = 0.12;
  double hub_r = 0.02;
  std::vector<Sphere> s = {{Vec3::Zero(), hub_r}};
  std::vector<TriMesh> parts = {make_uv_sphere_mesh(hub_r)};
  const Vec3 dirs[4] = {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(),
                        -Vec3::UnitY()};
  for (const Vec3& d : dirs) {
    for (double r : {0.028, 0.044, 0.060}) s.push_back({r * d, 0.010});
    Vec3 half = Vec3(0.008, 0.008, 0.008) + d.cwiseAbs() * 0.017;
    parts.push_back(make_box_mesh(half, 0.045 * d));
  }
  o.collision = SphereSet(s);
  o.render = merge_meshes(parts);
  // Thin flat object: inertia of a disc of radius ~0.07.
  double rr = 0.07 * 0.07;
  o.inertia = Vec3(0.25 * o.mass * rr, 0.25 * o.mass * rr, 0.5 * o.mass * rr);
  o.spawn_offset = Vec3(0, 0, hub_r + 0.008);
  return o;
}

namespace detail {

// 8-27 sphere fill of a symmetric convex solid: two z layers, a ring plus a
// center sphere per layer (prisms/cylinders), or a grid (cuboids).
inline SphereSet fill_prism_spheres(double inradius, double half_height) {
  double r = std::min(half_height / 1.5, inradius / 2.0);
  std::vector<Sphere> s;
  for (double z : {-(half_height - r), half_height - r}) {
    s.push_back({Vec3(0, 0, z), r});
    double ring = inradius - r;
    for (int i = 0; i < 6; ++i) {
      double a = i * M_PI / 3.0;
      s.push_back({Vec3(ring * std::cos(a), ring * std::sin(a), z), r});
    }
  }
  return SphereSet(s);
}

inline SphereSet fill_box_spheres(const Vec3& h) {
  double r = h.z() / 1.5;
  std::vector<Sphere> s;
  for (double z : {-(h.z() - r), h.z() - r})
    for (int ix = -1; ix <= 1; ++ix)
      for (int iy = -1; iy <= 1; ++iy)
        s.push_back({Vec3(ix * (h.x() - r), iy * (h.y() - r), z), r});
  return SphereSet(s);
}

}  // namespace detail

inline ObjectSpec make_cuboid(const std::string& name, double scale) {
  ObjectSpec o;
  o.name = name;
  Vec3 h = scale * Vec3(0.030, 0.030, 0.022);
  o.mass = 0.10 * scale * scale * scale;
  o.inertia = o.mass / 3.0 *
              Vec3(h.y() * h.y() + h.z() * h.z(), h.x() * h.x() + h.z() * h.z(),
                   h.x() * h.x() + h.y() * h.y());
  o.render = make_box_mesh(h);
  o.collision = detail::fill_box_spheres(h);
  o.spawn_offset = Vec3(0, 0, h.z() + 0.008);
  return o;
}

inline ObjectSpec make_prism(const std::string& name, int sides, double scale) {
  ObjectSpec o;
  o.name = name;
  double R = 0.034 * scale;
  double H = 0.022 * scale;
  o.mass = 0.09 * scale * scale * scale;
  double inr = R * std::cos(M_PI / sides);
  o.inertia = Vec3(o.mass * (3 * inr * inr + 4 * H * H) / 12.0,
                   o.mass * (3 * inr * inr + 4 * H * H) / 12.0,
                   0.5 * o.mass * inr * inr);
  o.render = make_prism_mesh(sides, R, H);
  o.collision = detail::fill_prism_spheres(inr, H);
  o.spawn_offset = Vec3(0, 0, H + 0.008);
  return o;
}

inline ObjectSpec make_cylinder(const std::string& name, double scale) {
  ObjectSpec o = make_prism(name, 16, scale);
  o.name = name;
  return o;
}

// Training catalog: wrench, balls, and 12 procedural shapes (4 families x 3
// scales) standing in for the multi-object set.
inline ObjectCatalog make_default_catalog() {
  ObjectCatalog cat;
  auto add = [&cat](ObjectSpec o) { cat[o.name] = std::move(o); };
  add(make_wrench("wrench"));
  add(make_ball("ball", 0.035, 0.10));
  // Sized so a side-by-side pair still sits inside the palm bowl rim.
  add(make_ball("small_ball", 0.014, 0.06));
  int i = 0;
  const char* scale_names[3] = {"s", "m", "l"};
  // The palm bowl interior is roughly 0.028 m across; larger scales wedge
  // against the raised rim or overhang it and slide off an open hand.
  const double scales[3] = {0.55, 0.7, 0.85};
  for (int k = 0; k < 3; ++k, ++i) {
    add(make_cuboid(std::string("cuboid_") + scale_names[k], scales[k]));
    add(make_cylinder(std::string("cylinder_") + scale_names[k], scales[k]));
    add(make_prism(std::string("prism3_") + scale_names[k], 3, scales[k]));
    add(make_prism(std::string("prism6_") + scale_names[k], 6, scales[k]));
  }
  return cat;
}

inline std::vector<std::string> multi_object_set() {
  std::vector<std::string> out;
  for (const char* s : {"s", "m", "l"})
    for (const char* f : {"cuboid_", "cylinder_", "prism3_", "prism6_"})
      out.push_back(std::string(f) + s);
  return out;
}

// ---------------------------------------------------------------------------
// Catalog file: JSON index + one OBJ per object.

inline void save_catalog(const ObjectCatalog& cat, const std::string& json_path,
                         const std::string& mesh_dir) {
  nlohmann::json j;
  j["objects"] = nlohmann::json::array();
  for (const auto& [name, o] : cat) {
    std::string obj_rel = "meshes/" + name + ".obj";
    o.render.save_obj(mesh_dir + "/" + name + ".obj");
    nlohmann::json spheres = nlohmann::json::array();
    for (const Sphere& s : o.collision.spheres)
      spheres.push_back({{"center", {s.center.x(), s.center.y(), s.center.z()}},
                         {"radius", s.radius}});
    j["objects"].push_back(
        {{"name", name},
         {"mass", o.mass},
         {"inertia", {o.inertia.x(), o.inertia.y(), o.inertia.z()}},
         {"render_obj", obj_rel},
         {"spheres", spheres},
         {"spawn_offset",
          {o.spawn_offset.x(), o.spawn_offset.y(), o.spawn_offset.z()}}});
  }
  std::ofstream out(json_path);
  check(out.good(), "cannot write object catalog: " + json_path);
  out << j.dump(1) << "\n";
}

inline ObjectCatalog load_catalog(const std::string& json_path,
                                  const std::string& asset_dir) {
  std::ifstream in(json_path);
  check(in.good(), "cannot open object catalog: " + json_path);
  nlohmann::json j;
  in >> j;
  ObjectCatalog cat;
  for (const auto& e : j.at("objects")) {
    ObjectSpec o;
    o.name = e.at("name").get<std::string>();
    o.mass = e.at("mass").get<double>();
    auto in3 = [](const nlohmann::json& a) {
      return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    };
    o.inertia = in3(e.at("inertia"));
    o.render_path = e.at("render_obj").get<std::string>();
    o.render = TriMesh::load_obj(asset_dir + "/" + o.render_path);
    std::vector<Sphere> s;
    for (const auto& sj : e.at("spheres"))
      s.push_back({in3(sj.at("center")), sj.at("radius").get<double>()});
    o.collision = SphereSet(s);
    o.spawn_offset = in3(e.at("spawn_offset"));
    cat[o.name] = std::move(o);
  }
  return cat;
}

}  // namespace syn
