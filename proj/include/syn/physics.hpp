#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "syn/hand.hpp"
#include "syn/objects.hpp"

namespace syn {

struct RigidBody {
  std::string object_id;
  double mass = 0.1;
  Vec3 inertia = Vec3::Ones() * 1e-5;  // diagonal, body frame
  RigidTransform pose;
  Vec3 linvel = Vec3::Zero();
  Vec3 angvel = Vec3::Zero();
  SphereSet collision;
  const TriMesh* render = nullptr;
  bool fixed = false;  // immovable scenery, used by tests and fixtures

  static RigidBody from_spec(const ObjectSpec& spec) {
    RigidBody b;
    b.object_id = spec.name;
    b.mass = spec.mass;
    b.inertia = spec.inertia;
    b.collision = spec.collision;
    b.render = &spec.render;
    return b;
  }
};

struct ContactParams {
  double k_n = 5000.0;   // N/m
  double c_n = 10.0;     // N*s/m
  double mu = 1.0;
  // Tangential viscous coefficient. The explicit substep is stable only while
  // k_t*dt_sim/mass < 2, which bounds it near 10 for the lightest objects.
  double k_t = 10.0;     // N*s/m
  // Angular viscous coefficient at contacts (spin and rolling). Point
  // contacts offer no resistance to either, which the integrator needs as
  // an energy sink for settle transients and spring-driven limit cycles.
  double c_s = 1e-3;     // N*m*s
  double theta_th = 0.2; // N tactile threshold
};

struct WorldState {
  std::vector<RigidBody> bodies;
  HandState hand;
  RigidTransform hand_base;
  VecX pad_forces = VecX::Zero(kNumPads);  // mean |F_n| per pad, last step
  Vec3 gravity = Vec3(0, 0, -9.81);
  double time = 0.0;
};

// One world-space collision sphere of the hand (link or pad proxy).
struct HandSphereRef {
  int link = 0;
  int pad = -1;  // >= 0 when the sphere belongs to a sensor pad
  Vec3 local_center;
  double radius = 0.0;
};

inline std::vector<HandSphereRef> hand_sphere_refs(const HandModel& model) {
  std::vector<HandSphereRef> out;
  for (size_t i = 0; i < model.links.size(); ++i)
    for (const Sphere& s : model.links[i].collision.spheres)
      out.push_back({int(i), -1, s.center, s.radius});
  for (size_t p = 0; p < model.pads.size(); ++p) {
    const SensorPad& pad = model.pads[p];
    out.push_back({pad.parent_link, int(p), pad.local.translation,
                   pad.sense_radius});
  }
  return out;
}

struct Contact {
  int body_a;         // object index
  int body_b;         // object index, or -1 for a hand sphere
  int hand_sphere;    // index into the hand sphere list when body_b == -1
  int pad;            // pad id when the hand sphere is a pad proxy
  double overlap;     // m
  Vec3 normal;        // from b to a
  Vec3 point;
};

namespace detail {

inline bool sphere_pair_contact(const Vec3& ca, double ra, const Vec3& cb,
                                double rb, Contact& out) {
  Vec3 d = ca - cb;
  double dist = d.norm();
  double overlap = ra + rb - dist;
  if (overlap <= 0.0) return false;
  out.overlap = overlap;
  out.normal = dist > 1e-12 ? Vec3(d / dist) : Vec3::UnitZ();
  out.point = cb + out.normal * (rb - 0.5 * overlap);
  return true;
}

}  // namespace detail

inline std::vector<Contact> detect_contacts(
    const WorldState& world, const std::vector<HandSphereRef>& hand_refs,
    const std::vector<RigidTransform>& link_poses) {
  std::vector<Contact> out;
  std::vector<Vec3> hand_centers(hand_refs.size());
  for (size_t h = 0; h < hand_refs.size(); ++h)
    hand_centers[h] = link_poses[hand_refs[h].link].apply(hand_refs[h].local_center);

  for (size_t a = 0; a < world.bodies.size(); ++a) {
    const RigidBody& ba = world.bodies[a];
    for (const Sphere& sa : ba.collision.spheres) {
      Vec3 ca = ba.pose.apply(sa.center);
      // object-object, each unordered pair once
      for (size_t b = a + 1; b < world.bodies.size(); ++b) {
        const RigidBody& bb = world.bodies[b];
        for (const Sphere& sb : bb.collision.spheres) {
          Contact c{int(a), int(b), -1, -1, 0, Vec3::UnitZ(), Vec3::Zero()};
          if (detail::sphere_pair_contact(ca, sa.radius,
                                          bb.pose.apply(sb.center), sb.radius, c))
            out.push_back(c);
        }
      }
      // object-hand
      for (size_t h = 0; h < hand_refs.size(); ++h) {
        Contact c{int(a), -1, int(h), hand_refs[h].pad, 0, Vec3::UnitZ(),
                  Vec3::Zero()};
        if (detail::sphere_pair_contact(ca, sa.radius, hand_centers[h],
                                        hand_refs[h].radius, c))
          out.push_back(c);
      }
    }
  }
  return out;
}

// Convenience overload used by tests.
inline std::vector<Contact> detect_contacts(const WorldState& world,
                                            const HandModel& model) {
  auto refs = hand_sphere_refs(model);
  auto poses = forward_kinematics(model, world.hand_base, world.hand.q);
  return detect_contacts(world, refs, poses);
}

// Penalty spring-damper normal force with viscous-capped Coulomb friction.
// rel_vel is the velocity of side a relative to side b; normal points b -> a.
// Returns the force applied to a together with the normal magnitude.
inline Vec3 contact_force(double overlap, const Vec3& rel_vel, const Vec3& normal,
                          const ContactParams& p, double* normal_mag = nullptr) {
  double vn = rel_vel.dot(normal);
  double fn = std::max(0.0, p.k_n * overlap - p.c_n * vn);
  Vec3 force = fn * normal;
  Vec3 u = rel_vel - vn * normal;
  double un = u.norm();
  if (un >= 1e-9) {
    double ft = std::min(p.mu * fn, p.k_t * un);
    force -= ft * (u / un);
  }
  if (normal_mag) *normal_mag = fn;
  return force;
}

struct StepOutput {
  VecX mean_torque = VecX::Zero(kNumJoints);  // for r_torq / r_work
  VecX dq = VecX::Zero(kNumJoints);           // joint travel over the step
};

// Advance one control period: `substeps` sub-integrations of dt_sim seconds.
inline StepOutput step_world(WorldState& world, const HandModel& model,
                             const std::vector<HandSphereRef>& hand_refs,
                             const ControlConfig& cfg, const ContactParams& p,
                             double dt_sim, int substeps) {
  StepOutput out;
  VecX q_start = world.hand.q;
  VecX pad_accum = VecX::Zero(kNumPads);

  auto link_poses = forward_kinematics(model, world.hand_base, world.hand.q);
  std::vector<Vec3> prev_centers(hand_refs.size());
  for (size_t h = 0; h < hand_refs.size(); ++h)
    prev_centers[h] = link_poses[hand_refs[h].link].apply(hand_refs[h].local_center);

  for (int s = 0; s < substeps; ++s) {
    VecX tau = servo_step(world.hand, dt_sim, model, cfg);
    out.mean_torque += tau;

    link_poses = forward_kinematics(model, world.hand_base, world.hand.q);
    std::vector<Vec3> centers(hand_refs.size());
    std::vector<Vec3> center_vel(hand_refs.size());
    for (size_t h = 0; h < hand_refs.size(); ++h) {
      centers[h] = link_poses[hand_refs[h].link].apply(hand_refs[h].local_center);
      center_vel[h] = (centers[h] - prev_centers[h]) / dt_sim;
    }

    auto contacts = detect_contacts(world, hand_refs, link_poses);

    std::vector<Vec3> forces(world.bodies.size(), Vec3::Zero());
    std::vector<Vec3> torques(world.bodies.size(), Vec3::Zero());

    // Provisional velocity deltas: each contact's force is booked against
    // the body velocities immediately, so later contacts in the same
    // substep see the updated motion. Without this, several contacts on one
    // body (an object rocking between palm-rim spheres) each inject a full
    // stopping impulse and the shared oscillation mode diverges.
    std::vector<Vec3> dv(world.bodies.size(), Vec3::Zero());
    std::vector<Vec3> dw(world.bodies.size(), Vec3::Zero());
    auto inv_inertia = [](const RigidBody& b) {
      Eigen::Matrix3d R = b.pose.rotation.toRotationMatrix();
      return Eigen::Matrix3d(R * b.inertia.cwiseInverse().asDiagonal() *
                             R.transpose());
    };

    for (const Contact& c : contacts) {
      const RigidBody& a = world.bodies[c.body_a];
      Vec3 ra = c.point - a.pose.translation;
      Vec3 va = a.linvel + dv[c.body_a] + (a.angvel + dw[c.body_a]).cross(ra);
      Vec3 vb;
      if (c.body_b >= 0) {
        const RigidBody& b = world.bodies[c.body_b];
        vb = b.linvel + dv[c.body_b] +
             (b.angvel + dw[c.body_b]).cross(c.point - b.pose.translation);
      } else {
        vb = center_vel[c.hand_sphere];
      }
      double fn = 0.0;
      Vec3 f = contact_force(c.overlap, va - vb, c.normal, p, &fn);

      // Effective inverse mass of the pair along a unit direction.
      auto w_eff = [&](const Vec3& dir) {
        double w = 0.0;
        if (!a.fixed) {
          Vec3 ra = c.point - a.pose.translation;
          Eigen::Matrix3d Ra = a.pose.rotation.toRotationMatrix();
          Eigen::Matrix3d Iinv =
              Ra * a.inertia.cwiseInverse().asDiagonal() * Ra.transpose();
          w += 1.0 / a.mass + dir.dot((Iinv * ra.cross(dir)).cross(ra));
        }
        if (c.body_b >= 0 && !world.bodies[c.body_b].fixed) {
          const RigidBody& bb = world.bodies[c.body_b];
          Vec3 rb = c.point - bb.pose.translation;
          Eigen::Matrix3d Rb = bb.pose.rotation.toRotationMatrix();
          Eigen::Matrix3d Iinv =
              Rb * bb.inertia.cwiseInverse().asDiagonal() * Rb.transpose();
          w += 1.0 / bb.mass + dir.dot((Iinv * rb.cross(dir)).cross(rb));
        }
        return w;
      };

      // The explicit substep overshoots when the penalty impulse exceeds
      // what resolves the contact within one dt; squeezed or impacting
      // bodies then pump energy and diverge. Cap the normal force at the
      // impulse removing the approach velocity plus the penetration, and
      // the friction force at the impulse stopping the slip. Both caps sit
      // far above the static spring forces, so resting contacts, the
      // contact-law arithmetic, and the bounce energy budget are untouched.
      Vec3 rel = va - vb;
      double vn = rel.dot(c.normal);
      double wn = w_eff(c.normal);
      if (wn > 0.0) {
        // The position-correction budget is bounded both as a fraction of
        // the penetration and by an absolute exit speed; a body wedged
        // between opposing contacts otherwise converts its (growing)
        // overlap into bounce velocity every substep and ejects.
        double v_corr = std::min(0.2 * c.overlap / dt_sim, 0.05);
        // Measure the approach speed after the gravity impulse of this same
        // substep, otherwise a resting contact (vn ~ 0) is denied the force
        // it needs to hold the body against gravity and support starves.
        double vn_g = vn;
        if (!a.fixed) vn_g += dt_sim * world.gravity.dot(c.normal);
        if (c.body_b >= 0 && !world.bodies[c.body_b].fixed)
          vn_g -= dt_sim * world.gravity.dot(c.normal);
        double fn_max = (std::max(0.0, -vn_g) + v_corr) / (dt_sim * wn);
        if (fn > fn_max) {
          f -= (fn - fn_max) * c.normal;
          fn = fn_max;
        }
      }
      Vec3 u = rel - vn * c.normal;
      double un = u.norm();
      if (un >= 1e-9) {
        Vec3 uh = u / un;
        double wt = w_eff(uh);
        if (wt > 0.0) {
          double ft_max = un / (dt_sim * wt);
          Vec3 f_t = f - fn * c.normal;
          double ft = f_t.norm();
          if (ft > ft_max) f = fn * c.normal + f_t * (ft_max / ft);
        }
      }
      forces[c.body_a] += f;
      torques[c.body_a] += ra.cross(f);
      if (!a.fixed) {
        dv[c.body_a] += f / a.mass * dt_sim;
        dw[c.body_a] += inv_inertia(a) * ra.cross(f) * dt_sim;
      }
      if (c.body_b >= 0) {
        const RigidBody& b = world.bodies[c.body_b];
        Vec3 rb = c.point - b.pose.translation;
        forces[c.body_b] -= f;
        torques[c.body_b] -= rb.cross(f);
        if (!b.fixed) {
          dv[c.body_b] -= f / b.mass * dt_sim;
          dw[c.body_b] -= inv_inertia(b) * rb.cross(f) * dt_sim;
        }
      } else if (c.pad >= 0) {
        pad_accum[c.pad] += fn;
      }
    }

    // Contact angular damping, applied after every force is booked. Point
    // contacts resist neither spin about the normal nor rolling, and the
    // stiff springs can sustain both as limit cycles (a resting ball pair
    // otherwise rolls in place forever). Capped at the stopping torque, and
    // kept in a second pass: damping and friction are both stopping
    // projections of the same slip state, and evaluated side by side per
    // contact they cancel into a perpetual-rotation fixed point.
    for (const Contact& c : contacts) {
      const RigidBody& a = world.bodies[c.body_a];
      Vec3 w_rel = a.angvel + dw[c.body_a];
      if (c.body_b >= 0) w_rel -= world.bodies[c.body_b].angvel + dw[c.body_b];
      double wmag = w_rel.norm();
      if (wmag <= 1e-12) continue;
      Vec3 axis = w_rel / wmag;
      double w_rot = 0.0;
      if (!a.fixed) w_rot += axis.dot(inv_inertia(a) * axis);
      if (c.body_b >= 0 && !world.bodies[c.body_b].fixed)
        w_rot += axis.dot(inv_inertia(world.bodies[c.body_b]) * axis);
      if (w_rot <= 0.0) continue;
      Vec3 tau_s = -std::min(p.c_s * wmag, wmag / (dt_sim * w_rot)) * axis;
      torques[c.body_a] += tau_s;
      if (!a.fixed) dw[c.body_a] += inv_inertia(a) * tau_s * dt_sim;
      if (c.body_b >= 0) {
        const RigidBody& b = world.bodies[c.body_b];
        torques[c.body_b] -= tau_s;
        if (!b.fixed) dw[c.body_b] -= inv_inertia(b) * tau_s * dt_sim;
      }
    }

    // Semi-implicit Euler; orientation via the exponential map.
    for (size_t i = 0; i < world.bodies.size(); ++i) {
      RigidBody& b = world.bodies[i];
      if (b.fixed) continue;
      b.linvel += (forces[i] / b.mass + world.gravity) * dt_sim;
      Eigen::Matrix3d R = b.pose.rotation.toRotationMatrix();
      Eigen::Matrix3d I_world =
          R * b.inertia.asDiagonal() * R.transpose();
      b.angvel += I_world.inverse() * torques[i] * dt_sim;
      b.pose.translation += b.linvel * dt_sim;
      double wmag = b.angvel.norm();
      if (wmag > 1e-12) {
        Quat dq(Eigen::AngleAxisd(wmag * dt_sim, b.angvel / wmag));
        b.pose.rotation = (dq * b.pose.rotation).normalized();
      }
      if (!b.pose.translation.allFinite() || !b.linvel.allFinite() ||
          !b.angvel.allFinite())
        fail("simulation diverged at substep " + std::to_string(s) +
             " (body " + b.object_id + ")");
    }
    prev_centers = centers;
    world.time += dt_sim;
  }

  out.mean_torque /= double(substeps);
  out.dq = world.hand.q - q_start;
  world.pad_forces = pad_accum / double(substeps);
  return out;
}

inline StepOutput step_world(WorldState& world, const HandModel& model,
                             const ControlConfig& cfg, const ContactParams& p,
                             double dt_sim, int substeps) {
  auto refs = hand_sphere_refs(model);
  return step_world(world, model, refs, cfg, p, dt_sim, substeps);
}

struct TactileReading {
  VecX forces = VecX::Zero(kNumPads);
  VecX binary = VecX::Zero(kNumPads);  // o_t
};

// Threshold is inclusive: force == theta_th reads as contact.
inline TactileReading read_tactile(const WorldState& world,
                                   const ContactParams& p) {
  TactileReading r;
  r.forces = world.pad_forces;
  for (int i = 0; i < kNumPads; ++i)
    r.binary[i] = world.pad_forces[i] >= p.theta_th ? 1.0 : 0.0;
  return r;
}

}  // namespace syn
