// syn: single entry point for the rotation pipeline. Every subcommand reads
// one JSON config (plus dotted overrides) and writes its artifacts and a
// resolved-config snapshot into the output directory.

#include <cstdio>
#include <filesystem>
#include <thread>

#include "CLI11.hpp"
#include "syn/config.hpp"

namespace fs = std::filesystem;
using namespace syn;

namespace {

struct Opts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::string assets = "assets";
  std::string checkpoint;
  std::string dataset;
  std::string embeddings;
  std::string policy_kind = "student";
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
  int episodes = 100;
  int steps = 50;
};

struct Scene {
  HandModel model;
  ObjectCatalog catalog;
  TaskCatalog tasks;
};

// Checked-in model files win over the built-in defaults when present, so a
// run is reproducible from the repository state alone.
Scene load_scene(const std::string& assets) {
  Scene s;
  std::string hand = assets + "/hand.json";
  std::string objects = assets + "/objects.json";
  std::string tasks = assets + "/tasks.json";
  s.model = fs::exists(hand) ? load_hand_json(hand) : make_default_hand();
  s.catalog = fs::exists(objects) ? load_catalog(objects, assets + "/meshes")
                                  : make_default_catalog();
  s.tasks = fs::exists(tasks) ? load_tasks(tasks) : make_default_tasks();
  return s;
}

RunConfig resolve_config(const Opts& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{}
                                        : load_run_config(o.config_path);
  for (const std::string& ov : o.overrides) cfg = apply_override(cfg, ov);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.threads >= 0) cfg.threads = o.threads;
  if (cfg.threads == 0)
    cfg.threads = int(std::max(1u, std::thread::hardware_concurrency()));
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  save_run_config(cfg, cfg.out_dir + "/resolved_config.json");
  return cfg;
}

const TaskSpec& task_of(const RunConfig& cfg, const Scene& scene) {
  auto it = scene.tasks.find(cfg.task);
  check(it != scene.tasks.end(), "unknown task: " + cfg.task);
  return it->second;
}

int teacher_obs_dim_for(const TaskSpec& task) {
  int bodies = task.kind == TaskKind::double_ball ? 2 : 1;
  return kFrameStack * (3 * kNumJoints + 9 * bodies) + 3 + kShapeEmbedding;
}

nn::TeacherPolicy load_teacher(nn::ParamStore& store, const TaskSpec& task,
                               const std::string& path) {
  Rng dummy(0);
  nn::TeacherPolicy p = nn::TeacherPolicy::create(
      store, teacher_obs_dim_for(task), kNumJoints, dummy);
  nn::load_checkpoint(store, path);
  return p;
}

nn::StudentPolicy load_student(nn::ParamStore& store, const std::string& path) {
  Rng dummy(0);
  int proprio_dim = kFrameStack * 3 * kNumJoints + 3;
  nn::StudentPolicy p =
      nn::StudentPolicy::create(store, proprio_dim, kNumJoints, dummy);
  nn::load_checkpoint(store, path);
  return p;
}

ShapeEmbeddings maybe_load_embeddings(const Opts& o, const RunConfig& cfg) {
  std::string path = o.embeddings.empty()
                         ? cfg.out_dir + "/embeddings.json"
                         : o.embeddings;
  ShapeEmbeddings e;
  if (fs::exists(path)) {
    e = load_embeddings(path);
    log_info("loaded %zu shape embeddings from %s", e.table.size(),
             path.c_str());
  }
  return e;
}

// --- subcommands ------------------------------------------------------------

void cmd_embed_shapes(const Opts& o, const RunConfig& cfg) {
  Scene scene = load_scene(o.assets);
  ShapeEmbeddings e =
      train_shape_embeddings(scene.catalog, ShapeEmbedConfig{}, cfg.seed);
  save_embeddings(e, cfg.out_dir + "/embeddings.json");
  log_info("chamfer %.6f -> %.6f over %zu objects", e.initial_chamfer,
           e.final_chamfer, e.table.size());
}

void cmd_train_teacher(const Opts& o, const RunConfig& cfg) {
  Scene scene = load_scene(o.assets);
  const TaskSpec& task = task_of(cfg, scene);
  ShapeEmbeddings embeddings = maybe_load_embeddings(o, cfg);
  std::function<VecX(const Env&)> embed;
  if (!embeddings.table.empty()) embed = make_shape_embed_fn(embeddings);

  PPOConfig ppo = cfg.ppo;
  ppo.threads = cfg.threads;
  TeacherTrainResult result =
      train_teacher(task, scene.catalog, scene.model, cfg.env_config(), ppo,
                    cfg.seed, cfg.out_dir, embed);
  emit_curve_svg(result.curve, cfg.out_dir + "/teacher_curve.svg");
  log_info("random baseline crr %.3f, final crr %.3f", result.random_crr,
           result.curve.empty() ? 0.0 : result.curve.back().crr_mean);
}

void cmd_collect(const Opts& o, const RunConfig& cfg) {
  Scene scene = load_scene(o.assets);
  const TaskSpec& task = task_of(cfg, scene);
  check(!o.checkpoint.empty(), "collect needs --checkpoint <teacher.ckpt>");
  nn::ParamStore store;
  nn::TeacherPolicy teacher = load_teacher(store, task, o.checkpoint);
  ShapeEmbeddings embeddings = maybe_load_embeddings(o, cfg);
  std::function<VecX(const Env&)> embed;
  if (!embeddings.table.empty()) embed = make_shape_embed_fn(embeddings);

  Dataset ds = collect_teacher_dataset(
      teacher, store, task, scene.catalog, scene.model, cfg.env_config(),
      cfg.distill.dataset_size, cfg.distill.n_envs, cfg.seed, embed);
  save_dataset(ds, cfg.out_dir + "/dataset.jsonl");
  log_info("collected %zu transitions", ds.records.size());
}

void cmd_bc(const Opts& o, const RunConfig& cfg) {
  std::string ds_path =
      o.dataset.empty() ? cfg.out_dir + "/dataset.jsonl" : o.dataset;
  Dataset ds = load_dataset(ds_path);

  nn::ParamStore store;
  Rng rng = Rng(cfg.seed).fork(1);
  int proprio_dim = kFrameStack * 3 * kNumJoints + 3;
  nn::StudentPolicy student =
      nn::StudentPolicy::create(store, proprio_dim, kNumJoints, rng);
  Rng train_rng = Rng(cfg.seed).fork(2);
  BcResult r = bc_train(student, store, ds, cfg.distill, train_rng);
  nn::save_checkpoint(store, cfg.out_dir + "/student_bc.ckpt",
                      {{"stage", "bc"}, {"task", cfg.task}});
  std::ofstream curve(cfg.out_dir + "/bc_curve.csv");
  check(curve.good(), "cannot write BC curve");
  curve << "epoch,train_mse,holdout_mse\n";
  for (size_t i = 0; i < r.train_loss.size(); ++i)
    curve << i << "," << r.train_loss[i] << "," << r.holdout_loss[i] << "\n";
  log_info("bc done after %zu epochs, holdout mse %.6g", r.train_loss.size(),
           r.holdout_loss.empty() ? 0.0 : r.holdout_loss.back());
}

void cmd_dagger(const Opts& o, const RunConfig& cfg) {
  Scene scene = load_scene(o.assets);
  const TaskSpec& task = task_of(cfg, scene);
  check(!o.checkpoint.empty(), "dagger needs --checkpoint <teacher.ckpt>");
  std::string ds_path =
      o.dataset.empty() ? cfg.out_dir + "/dataset.jsonl" : o.dataset;
  Dataset ds = load_dataset(ds_path);

  nn::ParamStore teacher_store;
  nn::TeacherPolicy teacher = load_teacher(teacher_store, task, o.checkpoint);
  ShapeEmbeddings embeddings = maybe_load_embeddings(o, cfg);
  std::function<VecX(const Env&)> embed;
  if (!embeddings.table.empty()) embed = make_shape_embed_fn(embeddings);

  nn::ParamStore store;
  nn::StudentPolicy student =
      load_student(store, cfg.out_dir + "/student_bc.ckpt");
  dagger_train(student, store, teacher, teacher_store, task, scene.catalog,
               scene.model, cfg.env_config(), ds, cfg.distill, cfg.seed,
               embed);
  nn::save_checkpoint(store, cfg.out_dir + "/student_dagger.ckpt",
                      {{"stage", "dagger"}, {"task", cfg.task}});
  log_info("dagger done, dataset now %zu transitions", ds.records.size());
}

void cmd_eval(const Opts& o, const RunConfig& cfg) {
  Scene scene = load_scene(o.assets);
  const TaskSpec& task = task_of(cfg, scene);
  check(!o.checkpoint.empty(), "eval needs --checkpoint <policy.ckpt>");

  nn::ParamStore store;
  nn::TeacherPolicy teacher;
  nn::StudentPolicy student;
  EvalPolicyFn fn;
  if (o.policy_kind == "teacher") {
    teacher = load_teacher(store, task, o.checkpoint);
    fn = make_teacher_policy_fn(teacher, store);
  } else {
    check(o.policy_kind == "student", "--policy must be teacher or student");
    student = load_student(store, o.checkpoint);
    fn = make_student_policy_fn(student, store, cfg.sensing);
  }
  MetricsReport r =
      evaluate_policy(fn, task, scene.catalog, scene.model, cfg.env_config(),
                      cfg.sensing, o.episodes, cfg.seed, cfg.threads);
  emit_report({r}, cfg.out_dir);
  log_info("%s on %s: crr %.3f +- %.3f, cra %.3f, ttf %.2f s", r.config.c_str(),
           r.task.c_str(), r.crr_mean, r.crr_std, r.cra_mean, r.ttf_mean);
}

void cmd_analyze_critical(const Opts& o, const RunConfig& cfg) {
  Scene scene = load_scene(o.assets);
  const TaskSpec& task = task_of(cfg, scene);
  check(!o.checkpoint.empty(),
        "analyze-critical needs --checkpoint <student.ckpt>");
  nn::ParamStore store;
  nn::StudentPolicy student = load_student(store, o.checkpoint);
  CriticalPointReport r = critical_point_analysis(
      student, store, task, scene.catalog, scene.model, cfg.env_config(),
      cfg.sensing, o.steps, cfg.seed, cfg.out_dir);
  nlohmann::json j = {{"mean_set_size", r.mean_set_size},
                      {"set_sizes", r.set_sizes},
                      {"frac_camera", r.frac_camera},
                      {"frac_augmented", r.frac_augmented},
                      {"frac_tactile", r.frac_tactile}};
  std::ofstream out(cfg.out_dir + "/critical_report.json");
  check(out.good(), "cannot write critical report");
  out << j.dump(1) << "\n";
  log_info("mean critical set %.1f points, tactile fraction %.3f",
           r.mean_set_size, r.frac_tactile);
}

void cmd_dump_cloud(const Opts& o, const RunConfig& cfg) {
  Scene scene = load_scene(o.assets);
  const TaskSpec& task = task_of(cfg, scene);
  EnvConfig env_cfg = cfg.env_config();
  env_cfg.build_clouds = true;
  Rng root(cfg.seed);
  Env env(task, &scene.catalog, &scene.model, env_cfg, root.fork(1000));
  Rng cloud_rng = root.fork(2000);
  for (int s = 0; s < o.steps; ++s) {
    StudentObservation obs = env.student_obs(cloud_rng);
    char name[64];
    std::snprintf(name, sizeof(name), "/cloud_%05d.ply", s);
    save_cloud_ply(obs.cloud, cfg.out_dir + name);
    env.step(VecX::Zero(kNumJoints));
  }
  log_info("wrote %d clouds to %s", o.steps, cfg.out_dir.c_str());
}

void cmd_ablate(const Opts& o, const RunConfig& cfg) {
  Scene scene = load_scene(o.assets);
  const TaskSpec& task = task_of(cfg, scene);
  check(!o.checkpoint.empty(), "ablate needs --checkpoint <student.ckpt>");
  nn::ParamStore store;
  nn::StudentPolicy student = load_student(store, o.checkpoint);
  std::vector<MetricsReport> reports =
      run_ablation(student, store, task, scene.catalog, scene.model,
                   cfg.env_config(), o.episodes, cfg.seed, cfg.threads);
  emit_report(reports, cfg.out_dir);
  for (const MetricsReport& r : reports)
    log_info("%-20s crr %8.3f cra %6.3f ttf %6.2f", r.config.c_str(),
             r.crr_mean, r.cra_mean, r.ttf_mean);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visuotactile in-hand rotation pipeline"};
  app.require_subcommand(1);

  Opts o;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config_path, "JSON run configuration");
    cmd->add_option("--seed", o.seed, "master seed (overrides config)")
        ->each([&](const std::string&) { o.seed_set = true; });
    cmd->add_option("--out", o.out, "output directory (overrides config)");
    cmd->add_option("--override", o.overrides,
                    "dotted config override, key.path=value (repeatable)");
    cmd->add_option("--threads", o.threads, "worker threads (0 = cores)");
    cmd->add_option("--assets", o.assets, "model/catalog directory");
    return cmd;
  };

  std::map<std::string, std::function<void(const Opts&, const RunConfig&)>> actions;
  auto sub = [&](const char* name, const char* help, auto fn) {
    actions[name] = fn;
    return add_common(app.add_subcommand(name, help));
  };

  sub("embed-shapes", "train and freeze per-object shape embeddings",
      cmd_embed_shapes);
  CLI::App* tt = sub("train-teacher", "PPO-train the privileged teacher",
                     cmd_train_teacher);
  tt->add_option("--embeddings", o.embeddings, "frozen embeddings JSON");
  CLI::App* co = sub("collect", "roll the teacher and record a dataset",
                     cmd_collect);
  co->add_option("--checkpoint", o.checkpoint, "teacher checkpoint");
  co->add_option("--embeddings", o.embeddings, "frozen embeddings JSON");
  CLI::App* bc = sub("bc", "behavior-clone the student from a dataset",
                     cmd_bc);
  bc->add_option("--dataset", o.dataset, "dataset index path");
  CLI::App* da = sub("dagger", "DAgger fine-tuning of the BC student",
                     cmd_dagger);
  da->add_option("--checkpoint", o.checkpoint, "teacher checkpoint");
  da->add_option("--dataset", o.dataset, "dataset index path");
  da->add_option("--embeddings", o.embeddings, "frozen embeddings JSON");
  CLI::App* ev = sub("eval", "evaluate a policy checkpoint", cmd_eval);
  ev->add_option("--checkpoint", o.checkpoint, "policy checkpoint");
  ev->add_option("--policy", o.policy_kind, "teacher or student");
  ev->add_option("--episodes", o.episodes, "evaluation episodes");
  CLI::App* ac = sub("analyze-critical",
                     "PointNet critical-point analysis of a student",
                     cmd_analyze_critical);
  ac->add_option("--checkpoint", o.checkpoint, "student checkpoint");
  ac->add_option("--steps", o.steps, "steps to analyze");
  CLI::App* dc = sub("dump-cloud", "write fused point clouds as PLY",
                     cmd_dump_cloud);
  dc->add_option("--steps", o.steps, "steps to dump");
  CLI::App* ab = sub("ablate", "evaluate all sensing ablations", cmd_ablate);
  ab->add_option("--checkpoint", o.checkpoint, "student checkpoint");
  ab->add_option("--episodes", o.episodes, "evaluation episodes per config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are config errors
  }

  const std::string name = app.get_subcommands().front()->get_name();
  RunConfig cfg;
  try {
    cfg = resolve_config(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  }
  try {
    actions.at(name)(o, cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
