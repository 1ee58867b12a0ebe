#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "syn/distill.hpp"

namespace syn {

// ---------------------------------------------------------------------------
// Sensing configurations for the ablation harness.

struct SensingConfig {
  bool touch = true;             // o_t in the proprio stack
  bool camera_cloud = true;
  bool augmented_cloud = true;
  bool synesthesia_cloud = true;  // tactile points injected into the cloud

  void validate() const {
    check(touch || camera_cloud || augmented_cloud || synesthesia_cloud,
          "at least one input source must be enabled");
  }

  std::string tag() const {
    std::string s;
    auto add = [&s](const char* part) {
      if (!s.empty()) s += "+";
      s += part;
    };
    if (touch) add("Touch");
    if (camera_cloud) add("Cam");
    if (augmented_cloud) add("Aug");
    if (synesthesia_cloud) add("Syn");
    return s;
  }
};

inline std::vector<SensingConfig> ablation_configs() {
  return {
      {true, false, false, false},
      {false, true, true, false},
      {true, true, true, false},
      {true, true, true, true},
  };
}

// Student observation restricted to the enabled sources. Disabled clouds are
// omitted from fusion; disabled touch zeroes the o_t slots of every stacked
// frame. A fully cloud-less config still needs one point for the encoder, so
// it gets the palm origin with an all-zero label row.
inline StudentObservation sensed_student_obs(const Env& env,
                                             const SensingConfig& s,
                                             Rng& cloud_rng) {
  s.validate();
  auto poses = forward_kinematics(env.model(), env.world().hand_base,
                                  env.world().hand.q);
  Mat empty(0, 3);
  Mat camera = s.camera_cloud
                   ? build_camera_cloud(env.world(), env.model(),
                                        env.config().camera, cloud_rng)
                   : empty;
  Mat augmented = s.augmented_cloud
                      ? build_augmented_cloud(env.model(), poses,
                                              env.cloud_cache())
                      : empty;
  Mat tactile = s.synesthesia_cloud
                    ? build_tactile_cloud(env.model(), poses, env.tactile(),
                                          env.cloud_cache())
                    : empty;
  LabeledPointCloud cloud =
      fuse(camera, augmented, tactile, poses[env.model().palm_link]);
  if (cloud.size() == 0) {
    cloud.points = Mat::Zero(1, 3);
    cloud.labels = Mat::Zero(1, 3);
  }
  StudentObservation obs =
      build_student_observation(env.history(), env.task().axis,
                                std::move(cloud));
  if (!s.touch) {
    int frame = 3 * kNumJoints;
    for (int i = 0; i < kFrameStack; ++i)
      obs.proprio.segment(i * frame + kNumJoints, kNumJoints).setZero();
  }
  return obs;
}

// Deterministic student action under a sensing config: Gaussian mean,
// clamped to the action box.
inline VecX sensed_student_action(const nn::StudentPolicy& policy,
                                  const nn::ParamStore& store, const Env& env,
                                  const SensingConfig& s, Rng& cloud_rng) {
  StudentObservation obs = sensed_student_obs(env, s, cloud_rng);
  check(int(obs.proprio.size()) == policy.proprio_dim,
        "student checkpoint expects proprio width " +
            std::to_string(policy.proprio_dim) + " but sensing config '" +
            s.tag() + "' produced " + std::to_string(obs.proprio.size()));
  nn::Tape t;
  Mat proprio(1, obs.proprio.size());
  proprio.row(0) = obs.proprio.transpose();
  nn::PolicyEval e =
      policy.forward(t, store, {nn::cloud_input(obs.cloud)}, proprio);
  return t.val(e.mean).row(0).transpose().cwiseMax(-1.0).cwiseMin(1.0);
}

// ---------------------------------------------------------------------------
// Evaluation protocol: n fresh episodes, deterministic per (seed, episode).

struct EpisodeRow {
  int episode = 0;
  double crr = 0, cra = 0, ttf = 0;
  bool fell = false;
};

struct MetricsReport {
  std::string task;
  std::string config;  // sensing tag
  int n_episodes = 0;
  std::vector<EpisodeRow> rows;
  double crr_mean = 0, crr_std = 0;
  double cra_mean = 0, cra_std = 0;
  double ttf_mean = 0, ttf_std = 0;

  void aggregate() {
    n_episodes = int(rows.size());
    auto stats = [this](auto get, double& m, double& sd) {
      m = 0;
      sd = 0;
      if (rows.empty()) return;
      for (const EpisodeRow& r : rows) m += get(r);
      m /= double(rows.size());
      for (const EpisodeRow& r : rows) sd += (get(r) - m) * (get(r) - m);
      sd = std::sqrt(sd / double(rows.size()));
    };
    stats([](const EpisodeRow& r) { return r.crr; }, crr_mean, crr_std);
    stats([](const EpisodeRow& r) { return r.cra; }, cra_mean, cra_std);
    stats([](const EpisodeRow& r) { return r.ttf; }, ttf_mean, ttf_std);
  }
};

// Policy under evaluation: deterministic action from the env state. The
// cloud RNG is the only sampling source a policy may use.
using EvalPolicyFn = std::function<VecX(Env&, Rng&)>;

inline EvalPolicyFn make_student_policy_fn(const nn::StudentPolicy& policy,
                                           const nn::ParamStore& store,
                                           SensingConfig sensing) {
  sensing.validate();
  return [&policy, &store, sensing](Env& env, Rng& cloud_rng) {
    return sensed_student_action(policy, store, env, sensing, cloud_rng);
  };
}

inline EvalPolicyFn make_teacher_policy_fn(const nn::TeacherPolicy& policy,
                                           const nn::ParamStore& store) {
  return [&policy, &store](Env& env, Rng&) {
    return teacher_mean_action(policy, store, env.teacher_obs().vec);
  };
}

// Episode e always runs on streams fork(1000+e)/fork(2000+e) of the master
// seed, so two configs evaluated with the same seed see paired episodes.
inline MetricsReport evaluate_policy(const EvalPolicyFn& policy,
                                     const TaskSpec& task,
                                     const ObjectCatalog& catalog,
                                     const HandModel& model,
                                     const EnvConfig& env_cfg,
                                     const SensingConfig& sensing,
                                     int n_episodes, uint64_t seed,
                                     int threads = 1) {
  check(n_episodes > 0, "evaluation needs at least one episode");
  sensing.validate();
  Rng root(seed);
  MetricsReport report;
  report.task = task.name;
  report.config = sensing.tag();
  report.rows.resize(n_episodes);

  parallel_for(n_episodes, threads, [&](int ep) {
    Env env(task, &catalog, &model, env_cfg, root.fork(1000 + uint64_t(ep)));
    Rng cloud_rng = root.fork(2000 + uint64_t(ep));
    while (!env.step(policy(env, cloud_rng)).done) {
    }
    const EpisodeStats& st = env.stats();
    report.rows[ep] = {ep, st.crr, st.cra, st.ttf, st.fell};
  });
  report.aggregate();
  return report;
}

// ---------------------------------------------------------------------------
// Critical points: the cloud indices the PointNet latent actually depends on.

struct CriticalPointReport {
  std::vector<std::vector<int>> sets;  // per step, sorted unique argmaxes
  std::vector<int> set_sizes;
  double mean_set_size = 0;
  // Mean over steps of the per-step label composition of the critical set.
  double frac_camera = 0, frac_augmented = 0, frac_tactile = 0;
};

namespace detail {

// PLY matching save_cloud_ply plus one 0/1 criticality property.
inline void save_cloud_ply_critical(const LabeledPointCloud& cloud,
                                    const std::vector<int>& critical,
                                    const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot write PLY: " + path);
  std::vector<char> flag(cloud.size(), 0);
  for (int i : critical) flag[i] = 1;
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property uchar label_cam\nproperty uchar label_aug\n"
         "property uchar label_touch\nproperty uchar critical\n";
  out << "end_header\n";
  for (int i = 0; i < cloud.size(); ++i) {
    out << cloud.points(i, 0) << " " << cloud.points(i, 1) << " "
        << cloud.points(i, 2) << " " << int(cloud.labels(i, 0)) << " "
        << int(cloud.labels(i, 1)) << " " << int(cloud.labels(i, 2)) << " "
        << int(flag[i]) << "\n";
  }
}

}  // namespace detail

// Roll the student for n_steps and record, per step, the union of per-channel
// argmax indices of the pooled latent. When out_dir is non-empty, one PLY per
// step is written with the criticality flag set on that union.
inline CriticalPointReport critical_point_analysis(
    const nn::StudentPolicy& policy, const nn::ParamStore& store,
    const TaskSpec& task, const ObjectCatalog& catalog, const HandModel& model,
    const EnvConfig& env_cfg, const SensingConfig& sensing, int n_steps,
    uint64_t seed, const std::string& out_dir = "") {
  check(n_steps > 0, "critical-point analysis needs at least one step");
  Rng root(seed);
  Env env(task, &catalog, &model, env_cfg, root.fork(1000));
  Rng cloud_rng = root.fork(2000);

  CriticalPointReport report;
  for (int step = 0; step < n_steps; ++step) {
    StudentObservation obs = sensed_student_obs(env, sensing, cloud_rng);
    nn::Tape t;
    Mat proprio(1, obs.proprio.size());
    proprio.row(0) = obs.proprio.transpose();
    std::vector<std::vector<int>> argmax;
    nn::PolicyEval e =
        policy.forward(t, store, {nn::cloud_input(obs.cloud)}, proprio,
                       &argmax);

    std::set<int> uniq(argmax[0].begin(), argmax[0].end());
    std::vector<int> set(uniq.begin(), uniq.end());
    double cam = 0, aug = 0, tac = 0;
    for (int i : set) {
      cam += obs.cloud.labels(i, 0);
      aug += obs.cloud.labels(i, 1);
      tac += obs.cloud.labels(i, 2);
    }
    report.frac_camera += cam / double(set.size());
    report.frac_augmented += aug / double(set.size());
    report.frac_tactile += tac / double(set.size());
    report.set_sizes.push_back(int(set.size()));
    if (!out_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "/critical_%05d.ply", step);
      detail::save_cloud_ply_critical(obs.cloud, set, out_dir + name);
    }
    report.sets.push_back(std::move(set));

    VecX action = t.val(e.mean).row(0).transpose().cwiseMax(-1.0).cwiseMin(1.0);
    if (env.step(action).done) env.reset_episode();
  }
  report.mean_set_size =
      std::accumulate(report.set_sizes.begin(), report.set_sizes.end(), 0.0) /
      double(n_steps);
  report.frac_camera /= double(n_steps);
  report.frac_augmented /= double(n_steps);
  report.frac_tactile /= double(n_steps);
  return report;
}

// ---------------------------------------------------------------------------
// Report emission: CSV + JSON + minimal SVG writers, byte-stable per input.

namespace detail {

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Filenames must survive shells and CMake; '+' in tags becomes '_'.
inline std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '+') c = '_';
  return s;
}

}  // namespace detail

// Polyline plot on a fixed 640x400 canvas with min/max tick labels.
inline void write_svg_lines(const std::string& path, const std::string& title,
                            const std::vector<double>& xs,
                            const std::vector<double>& ys) {
  check(xs.size() == ys.size(), "plot series length mismatch");
  std::ofstream out(path);
  check(out.good(), "cannot write SVG: " + path);
  const double w = 640, h = 400, ml = 60, mr = 20, mt = 30, mb = 40;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!xs.empty()) {
    x0 = *std::min_element(xs.begin(), xs.end());
    x1 = *std::max_element(xs.begin(), xs.end());
    y0 = *std::min_element(ys.begin(), ys.end());
    y1 = *std::max_element(ys.begin(), ys.end());
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
  }
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) {
    return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"400\">\n";
  out << "<text x=\"" << ml << "\" y=\"20\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  out << "<text x=\"5\" y=\"" << h - mb << "\" font-size=\"10\">"
      << detail::fmt_num(y0) << "</text>\n";
  out << "<text x=\"5\" y=\"" << mt + 10 << "\" font-size=\"10\">"
      << detail::fmt_num(y1) << "</text>\n";
  if (!xs.empty()) {
    out << "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i)
      out << detail::fmt_num(px(xs[i])) << "," << detail::fmt_num(py(ys[i]))
          << " ";
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

// One labeled bar per entry; bars scale against the largest magnitude.
inline void write_svg_bars(const std::string& path, const std::string& title,
                           const std::vector<std::string>& names,
                           const std::vector<double>& values) {
  check(names.size() == values.size(), "bar chart length mismatch");
  std::ofstream out(path);
  check(out.good(), "cannot write SVG: " + path);
  const double w = 640, h = 400, ml = 60, mt = 30, mb = 80;
  double vmax = 1.0;
  for (double v : values) vmax = std::max(vmax, std::abs(v));
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"400\">\n";
  out << "<text x=\"" << ml << "\" y=\"20\" font-size=\"14\">" << title
      << "</text>\n";
  double slot = names.empty() ? 0.0 : (w - ml - 20) / double(names.size());
  for (size_t i = 0; i < names.size(); ++i) {
    double bh = std::abs(values[i]) / vmax * (h - mt - mb);
    double x = ml + double(i) * slot;
    out << "<rect x=\"" << detail::fmt_num(x) << "\" y=\""
        << detail::fmt_num(h - mb - bh) << "\" width=\""
        << detail::fmt_num(slot * 0.7) << "\" height=\""
        << detail::fmt_num(bh) << "\" fill=\""
        << (values[i] >= 0 ? "steelblue" : "indianred") << "\"/>\n";
    out << "<text x=\"" << detail::fmt_num(x) << "\" y=\"" << h - mb + 15
        << "\" font-size=\"10\">" << names[i] << "</text>\n";
    out << "<text x=\"" << detail::fmt_num(x) << "\" y=\"" << h - mb + 30
        << "\" font-size=\"10\">" << detail::fmt_num(values[i])
        << "</text>\n";
  }
  out << "</svg>\n";
}

// metrics.csv (all per-episode rows), summary.json (aggregates), and a
// per-config CRR bar chart. Identical inputs produce byte-identical files.
inline void emit_report(const std::vector<MetricsReport>& reports,
                        const std::string& out_dir) {
  {
    std::ofstream csv(out_dir + "/metrics.csv");
    check(csv.good(), "cannot write metrics CSV in: " + out_dir);
    csv << "task,config,episode,crr,cra,ttf,fell\n";
    for (const MetricsReport& r : reports)
      for (const EpisodeRow& row : r.rows)
        csv << r.task << "," << r.config << "," << row.episode << ","
            << detail::fmt_num(row.crr) << "," << detail::fmt_num(row.cra)
            << "," << detail::fmt_num(row.ttf) << "," << int(row.fell) << "\n";
  }
  {
    nlohmann::json j = nlohmann::json::array();
    for (const MetricsReport& r : reports)
      j.push_back({{"task", r.task},
                   {"config", r.config},
                   {"n_episodes", r.n_episodes},
                   {"crr_mean", r.crr_mean},
                   {"crr_std", r.crr_std},
                   {"cra_mean", r.cra_mean},
                   {"cra_std", r.cra_std},
                   {"ttf_mean", r.ttf_mean},
                   {"ttf_std", r.ttf_std}});
    std::ofstream out(out_dir + "/summary.json");
    check(out.good(), "cannot write summary JSON in: " + out_dir);
    out << j.dump(1) << "\n";
  }
  std::vector<std::string> names;
  std::vector<double> crr;
  for (const MetricsReport& r : reports) {
    names.push_back(detail::sanitize(r.task + ":" + r.config));
    crr.push_back(r.crr_mean);
  }
  write_svg_bars(out_dir + "/summary.svg", "mean CRR per configuration",
                 names, crr);
}

inline void emit_curve_svg(const std::vector<CurvePoint>& curve,
                           const std::string& path) {
  std::vector<double> xs, ys;
  for (const CurvePoint& p : curve) {
    xs.push_back(p.epoch);
    ys.push_back(p.crr_mean);
  }
  write_svg_lines(path, "teacher CRR per epoch", xs, ys);
}

// ---------------------------------------------------------------------------
// Ablation harness: one report per sensing row, same checkpoint, paired seeds.

inline std::vector<MetricsReport> run_ablation(
    const nn::StudentPolicy& policy, const nn::ParamStore& store,
    const TaskSpec& task, const ObjectCatalog& catalog, const HandModel& model,
    const EnvConfig& env_cfg, int n_episodes, uint64_t seed, int threads = 1) {
  std::vector<MetricsReport> reports;
  for (const SensingConfig& s : ablation_configs()) {
    EvalPolicyFn fn = make_student_policy_fn(policy, store, s);
    reports.push_back(evaluate_policy(fn, task, catalog, model, env_cfg, s,
                                      n_episodes, seed, threads));
  }
  return reports;
}

}  // namespace syn
