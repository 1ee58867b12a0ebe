#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "syn/physics.hpp"
#include "syn/tasks.hpp"

namespace syn {

constexpr int kCameraPoints = 512;     // N_c
constexpr int kSamplesPerLink = 8;     // N_a = 8 * 21 = 168
constexpr int kSamplesPerPad = 8;      // N_t = 8 * n_touch
constexpr int kShapeEmbedding = 32;    // f

struct LabeledPointCloud {
  Mat points;  // N x 3, palm frame after fuse()
  Mat labels;  // N x 3 one-hot rows: (camera, augmented, tactile)

  int size() const { return int(points.rows()); }
};

struct CameraSpec {
  RigidTransform pose;        // world; camera looks along local +z, +y down
  int width = 160;
  int height = 120;
  double vfov = M_PI / 3.0;   // vertical field of view
  Aabb workspace;             // crop box, drops background hits
  double depth_noise = 0.0;   // sigma in m, robustness knob
  double dropout = 0.0;       // pixel dropout fraction

  void validate() const {
    check(width > 0 && height > 0, "camera image size must be positive");
    check(vfov > 0 && vfov < M_PI, "camera FOV out of range");
  }
};

// Looking from `eye` toward `target`, world +z as up reference.
inline RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  Vec3 z = (target - eye).normalized();
  Vec3 up = std::abs(z.z()) > 0.999 ? Vec3::UnitX() : Vec3::UnitZ();
  Vec3 x = z.cross(up).normalized();
  Vec3 y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return RigidTransform{Quat(r), eye};
}

// Default viewpoint: 0.45 m in front of and 0.3 m above the palm.
inline CameraSpec make_default_camera() {
  CameraSpec cam;
  cam.pose = look_at(Vec3(0.45, 0.0, 0.30), Vec3::Zero());
  cam.workspace.expand(Vec3(-0.15, -0.15, -0.05));
  cam.workspace.expand(Vec3(0.15, 0.15, 0.20));
  return cam;
}

// All render meshes currently in the scene: hand links plus object bodies.
inline std::vector<PosedMesh> scene_meshes(const WorldState& world,
                                           const HandModel& model) {
  std::vector<PosedMesh> out;
  auto poses = forward_kinematics(model, world.hand_base, world.hand.q);
  for (size_t i = 0; i < model.links.size(); ++i)
    if (!model.links[i].render.triangles().empty())
      out.push_back({&model.links[i].render, poses[i]});
  for (const RigidBody& b : world.bodies)
    if (b.render && !b.render->triangles().empty())
      out.push_back({b.render, b.pose});
  return out;
}

// One ray per pixel through the pinhole model; AABB-cropped hits, then
// uniform subsample (or resample-pad) to exactly 512 points, world frame.
inline Mat build_camera_cloud(const WorldState& world, const HandModel& model,
                              const CameraSpec& cam, Rng& rng) {
  cam.validate();
  auto meshes = scene_meshes(world, model);
  double f_len = (cam.height / 2.0) / std::tan(cam.vfov / 2.0);
  Eigen::Matrix3d R = cam.pose.rotation.toRotationMatrix();

  std::vector<Vec3> hits;
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      if (cam.dropout > 0.0 && rng.uniform() < cam.dropout) continue;
      Vec3 dir_cam((px + 0.5 - cam.width / 2.0) / f_len,
                   (py + 0.5 - cam.height / 2.0) / f_len, 1.0);
      Ray ray{cam.pose.translation, (R * dir_cam).normalized()};
      auto hit = raycast(meshes, ray);
      if (!hit) continue;
      double depth = hit->distance;
      if (cam.depth_noise > 0.0) depth += rng.normal(0.0, cam.depth_noise);
      Vec3 p = ray.origin + depth * ray.direction;
      if (cam.workspace.valid() && !cam.workspace.contains(p)) continue;
      hits.push_back(p);
    }
  }

  Mat out(kCameraPoints, 3);
  if (hits.empty()) {
    log_info("camera cloud is empty; falling back to the palm origin");
    Vec3 palm = world.hand_base.translation;
    for (int i = 0; i < kCameraPoints; ++i) out.row(i) = palm.transpose();
    return out;
  }
  if (int(hits.size()) > kCameraPoints) {
    // Partial Fisher-Yates: uniform without replacement.
    std::vector<size_t> idx(hits.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int i = 0; i < kCameraPoints; ++i)
      std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
    for (int i = 0; i < kCameraPoints; ++i) out.row(i) = hits[idx[i]].transpose();
  } else {
    for (size_t i = 0; i < hits.size(); ++i) out.row(int(i)) = hits[i].transpose();
    for (int i = int(hits.size()); i < kCameraPoints; ++i)
      out.row(i) = hits[rng.uniform_index(hits.size())].transpose();
  }
  return out;
}

// Per-episode surface samples in link/pad local frames, so augmented and
// tactile points track their parent rigidly across steps.
struct CloudSampleCache {
  std::vector<std::vector<Vec3>> link_local;  // 21 x 8
  std::vector<std::vector<Vec3>> pad_local;   // 16 x 8
};

inline CloudSampleCache make_cloud_cache(const HandModel& model, Rng& rng) {
  CloudSampleCache c;
  for (const Link& l : model.links)
    c.link_local.push_back(sample_surface(l.render, kSamplesPerLink, rng));
  for (const SensorPad& p : model.pads)
    c.pad_local.push_back(sample_surface(p.mesh, kSamplesPerPad, rng));
  return c;
}

inline Mat build_augmented_cloud(const HandModel& model,
                                 const std::vector<RigidTransform>& link_poses,
                                 const CloudSampleCache& cache) {
  check(link_poses.size() == model.links.size(), "need one pose per link");
  Mat out(kSamplesPerLink * int(model.links.size()), 3);
  int row = 0;
  for (size_t i = 0; i < model.links.size(); ++i)
    for (const Vec3& p : cache.link_local[i])
      out.row(row++) = link_poses[i].apply(p).transpose();
  return out;
}

inline Mat build_tactile_cloud(const HandModel& model,
                               const std::vector<RigidTransform>& link_poses,
                               const VecX& o_t, const CloudSampleCache& cache) {
  check(o_t.size() == kNumPads, "tactile vector must have 16 entries");
  int n_touch = 0;
  for (int i = 0; i < kNumPads; ++i)
    if (o_t[i] != 0.0) ++n_touch;
  Mat out(kSamplesPerPad * n_touch, 3);
  int row = 0;
  for (int i = 0; i < kNumPads; ++i) {
    if (o_t[i] == 0.0) continue;
    const SensorPad& pad = model.pads[i];
    RigidTransform world = link_poses[pad.parent_link].compose(pad.local);
    for (const Vec3& p : cache.pad_local[i])
      out.row(row++) = world.apply(p).transpose();
  }
  return out;
}

// Concatenate (camera, augmented, tactile), tag with one-hot source labels,
// and express everything in the palm frame.
inline LabeledPointCloud fuse(const Mat& camera, const Mat& augmented,
                              const Mat& tactile,
                              const RigidTransform& palm_pose) {
  LabeledPointCloud out;
  int n = int(camera.rows() + augmented.rows() + tactile.rows());
  out.points.resize(n, 3);
  out.labels = Mat::Zero(n, 3);
  out.points.topRows(camera.rows()) = camera;
  out.points.middleRows(camera.rows(), augmented.rows()) = augmented;
  out.points.bottomRows(tactile.rows()) = tactile;
  out.labels.block(0, 0, camera.rows(), 1).setOnes();
  out.labels.block(camera.rows(), 1, augmented.rows(), 1).setOnes();
  out.labels.block(camera.rows() + augmented.rows(), 2, tactile.rows(), 1)
      .setOnes();
  RigidTransform inv = palm_pose.inverse();
  for (int i = 0; i < n; ++i)
    out.points.row(i) = inv.apply(out.points.row(i).transpose()).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Stacked observations (current frame + 3 historical, oldest first).

constexpr int kFrameStack = 4;

struct TeacherObservation {
  VecX vec;
};

struct StudentObservation {
  VecX proprio;  // 4 * 48 + 3
  LabeledPointCloud cloud;
};

// Per-step state blocks. Teacher: (q, o_t, target, per-object x/v/w).
// Student: (q, o_t, target).
inline VecX teacher_frame(const WorldState& world, const VecX& o_t) {
  VecX f(3 * kNumJoints + 9 * int(world.bodies.size()));
  f.segment(0, kNumJoints) = world.hand.q;
  f.segment(kNumJoints, kNumJoints) = o_t;
  f.segment(2 * kNumJoints, kNumJoints) = world.hand.target;
  int at = 3 * kNumJoints;
  for (const RigidBody& b : world.bodies) {
    f.segment<3>(at) = b.pose.translation;
    f.segment<3>(at + 3) = b.linvel;
    f.segment<3>(at + 6) = b.angvel;
    at += 9;
  }
  return f;
}

inline VecX student_frame(const WorldState& world, const VecX& o_t) {
  VecX f(3 * kNumJoints);
  f.segment(0, kNumJoints) = world.hand.q;
  f.segment(kNumJoints, kNumJoints) = o_t;
  f.segment(2 * kNumJoints, kNumJoints) = world.hand.target;
  return f;
}

// Rolling frame history; missing frames replicate the first one.
struct ObsHistory {
  std::vector<VecX> teacher;
  std::vector<VecX> student;

  void push(const WorldState& world, const VecX& o_t) {
    teacher.push_back(teacher_frame(world, o_t));
    student.push_back(student_frame(world, o_t));
    if (int(teacher.size()) > kFrameStack) {
      teacher.erase(teacher.begin());
      student.erase(student.begin());
    }
  }
  void clear() {
    teacher.clear();
    student.clear();
  }
};

namespace detail {

inline VecX stack_frames(const std::vector<VecX>& frames) {
  check(!frames.empty(), "cannot stack an empty history");
  int len = int(frames[0].size());
  VecX out(kFrameStack * len);
  for (int i = 0; i < kFrameStack; ++i) {
    int src = std::max(0, int(frames.size()) - kFrameStack + i);
    out.segment(i * len, len) = frames[src];
  }
  return out;
}

}  // namespace detail

// f: shape feature embedding (32), zero when no encoder is attached.
inline TeacherObservation build_teacher_observation(const ObsHistory& h,
                                                    const Vec3& k,
                                                    const VecX& f) {
  check(f.size() == kShapeEmbedding, "shape embedding must have 32 entries");
  VecX stacked = detail::stack_frames(h.teacher);
  TeacherObservation obs;
  obs.vec.resize(stacked.size() + 3 + kShapeEmbedding);
  obs.vec << stacked, k, f;
  return obs;
}

inline StudentObservation build_student_observation(const ObsHistory& h,
                                                    const Vec3& k,
                                                    LabeledPointCloud cloud) {
  VecX stacked = detail::stack_frames(h.student);
  StudentObservation obs;
  obs.proprio.resize(stacked.size() + 3);
  obs.proprio << stacked, k;
  obs.cloud = std::move(cloud);
  return obs;
}

// ---------------------------------------------------------------------------
// ASCII PLY dump, one file per step; read back by the analysis tooling.

inline void save_cloud_ply(const LabeledPointCloud& cloud,
                           const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot write PLY: " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property uchar label_cam\nproperty uchar label_aug\n"
         "property uchar label_touch\n";
  out << "end_header\n";
  for (int i = 0; i < cloud.size(); ++i) {
    out << cloud.points(i, 0) << " " << cloud.points(i, 1) << " "
        << cloud.points(i, 2) << " " << int(cloud.labels(i, 0)) << " "
        << int(cloud.labels(i, 1)) << " " << int(cloud.labels(i, 2)) << "\n";
  }
}

inline LabeledPointCloud load_cloud_ply(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open PLY: " + path);
  std::string line;
  int n = -1;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex", 0) == 0)
      n = std::stoi(line.substr(15));
    if (line == "end_header") break;
  }
  check(n >= 0, "malformed PLY header: " + path);
  LabeledPointCloud cloud;
  cloud.points.resize(n, 3);
  cloud.labels.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    double x, y, z;
    int a, b, c;
    in >> x >> y >> z >> a >> b >> c;
    cloud.points.row(i) << x, y, z;
    cloud.labels.row(i) << a, b, c;
  }
  check(bool(in), "truncated PLY: " + path);
  return cloud;
}

}  // namespace syn
