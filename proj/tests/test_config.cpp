#include "doctest.h"
#include "syn/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace syn;

TEST_SUITE_BEGIN("config");

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("defaults validate and match the module defaults") {
  RunConfig c;
  c.validate();
  CHECK(c.task == "multi_object_z");
  CHECK(c.ppo.gamma == 0.99);
  CHECK(c.ppo.lambda == 0.95);
  CHECK(c.control.eta == 0.8);
  CHECK(c.contact.k_n == 5000.0);
  CHECK(c.dt_sim == EnvConfig{}.dt_sim);
  CHECK(c.substeps == EnvConfig{}.substeps);
  CHECK(c.camera.width == 160);
  CHECK(c.camera.height == 120);
}

TEST_CASE("load -> save -> load round-trips identically") {
  RunConfig c;
  c.task = "wheel_wrench_z";
  c.seed = 123456789012345ull;
  c.threads = 7;
  c.ppo.lr = 3e-4;
  c.ppo.n_envs = 32;
  c.control.kp = VecX::Constant(kNumJoints, 2.5);
  c.control.kp[3] = 4.0;
  c.sensing.synesthesia_cloud = false;
  c.camera.depth_noise = 0.001;
  c.reward.c4 = -0.001;

  std::string p1 = "cfg_rt_1.json", p2 = "cfg_rt_2.json";
  save_run_config(c, p1);
  RunConfig c2 = load_run_config(p1);
  save_run_config(c2, p2);
  CHECK(read_file(p1) == read_file(p2));
  CHECK(to_json(c) == to_json(c2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("partial files keep defaults for omitted sections") {
  nlohmann::json j = {{"task", "double_ball_z"},
                      {"ppo", {{"gamma", 0.9}}}};
  RunConfig c = run_config_from_json(j);
  CHECK(c.task == "double_ball_z");
  CHECK(c.ppo.gamma == 0.9);
  CHECK(c.ppo.lambda == 0.95);       // untouched
  CHECK(c.contact.k_n == 5000.0);    // whole section omitted
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(run_config_from_json({{"tsak", "x"}}), SynError);
  CHECK_THROWS_AS(run_config_from_json({{"ppo", {{"gama", 0.9}}}}), SynError);
  CHECK_THROWS_AS(run_config_from_json({{"camera", {{"fov", 1.0}}}}),
                  SynError);
  CHECK_THROWS_AS(
      run_config_from_json({{"camera", {{"pose", {{"quat", {1, 0, 0, 0}}}}}}}),
      SynError);
  CHECK_THROWS_AS(run_config_from_json({{"sim", {{"dt", 0.01}}}}), SynError);
}

TEST_CASE("invalid values are rejected") {
  CHECK_THROWS_AS(run_config_from_json({{"ppo", {{"gamma", 1.5}}}}), SynError);
  CHECK_THROWS_AS(run_config_from_json({{"sim", {{"dt_sim", -0.01}}}}),
                  SynError);
  CHECK_THROWS_AS(run_config_from_json({{"threads", -1}}), SynError);
  nlohmann::json all_off = {{"sensing",
                             {{"touch", false},
                              {"camera_cloud", false},
                              {"augmented_cloud", false},
                              {"synesthesia_cloud", false}}}};
  CHECK_THROWS_AS(run_config_from_json(all_off), SynError);
}

TEST_CASE("joint gain vectors accept scalar broadcast or full arrays") {
  nlohmann::json j = {{"control", {{"kp", 5.0}}}};
  RunConfig c = run_config_from_json(j);
  CHECK(c.control.kp.size() == kNumJoints);
  CHECK(c.control.kp.minCoeff() == 5.0);
  CHECK(c.control.kp.maxCoeff() == 5.0);

  nlohmann::json bad = {{"control", {{"kp", {1.0, 2.0}}}}};
  CHECK_THROWS_AS(run_config_from_json(bad), SynError);
}

TEST_CASE("dotted overrides set nested values") {
  RunConfig c;
  RunConfig o = apply_override(c, "ppo.gamma=0.9");
  CHECK(o.ppo.gamma == 0.9);
  CHECK(o.ppo.lambda == c.ppo.lambda);

  o = apply_override(c, "task=wheel_wrench_z");
  CHECK(o.task == "wheel_wrench_z");

  o = apply_override(c, "sensing.touch=false");
  CHECK(!o.sensing.touch);

  o = apply_override(c, "sim.substeps=20");
  CHECK(o.substeps == 20);

  o = apply_override(c, "camera.pose.translation=[0.5,0,0.4]");
  CHECK(o.camera.pose.translation == Vec3(0.5, 0, 0.4));

  o = apply_override(c, "control.kp=7.5");
  CHECK(o.control.kp.minCoeff() == 7.5);
}

TEST_CASE("bad overrides throw") {
  RunConfig c;
  CHECK_THROWS_AS(apply_override(c, "ppo.gamma"), SynError);       // no '='
  CHECK_THROWS_AS(apply_override(c, "=3"), SynError);              // no key
  CHECK_THROWS_AS(apply_override(c, "ppo.gama=0.9"), SynError);    // typo
  CHECK_THROWS_AS(apply_override(c, "ppo.gamma=oops"), SynError);  // type
}

TEST_CASE("env_config carries the sim sections through") {
  RunConfig c;
  c.contact.mu = 0.5;
  c.dt_sim = 0.005;
  c.substeps = 20;
  c.camera.width = 80;
  EnvConfig e = c.env_config();
  CHECK(e.contact.mu == 0.5);
  CHECK(e.dt_sim == 0.005);
  CHECK(e.substeps == 20);
  CHECK(e.camera.width == 80);
  CHECK(e.control.eta == c.control.eta);
}

TEST_SUITE_END();
