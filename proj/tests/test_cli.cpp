#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "helpers.hpp"
#include "mobnet/experiment.hpp"

using namespace mobnet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mobnet_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// a pipeline config small enough to run every stage in a couple of seconds
std::string tiny_config() {
  return std::string(R"({
  "model": ")") + model_path("planar_biped.json") + R"(",
  "uncertainty": "sensor_noise",
  "observer": {"k0": 100.0},
  "collect": {"train_logs": 2, "duration": 1.0, "excitation": "gait",
              "control_dt": 0.0005, "log_dt": 0.0005,
              "rte": {"enabled": true, "tau_bound": 2.0}},
  "network": {"d_h": 4, "horizon": 20},
  "train": {"epochs": 1, "batch": 2, "lr_start": 0.02, "lr_end": 0.005,
            "lr_decay_epochs": 1},
  "eval": {"logs": 1, "duration": 1.0,
           "disturbance": {"joint": "rl_knee", "torque": 30.0, "t0": 0.22, "duration": 0.1}},
  "estimators": ["MOB", "MOB-Net", "FTS-e2e"],
  "detect": {"collisions": 1, "clean_logs": 1, "torque": 30.0, "duration": 2.0}
})";
}

std::string write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p.string();
}

int run(const std::string& sub, const std::string& cfg, uint64_t seed, const fs::path& out,
        std::string* log_out = nullptr) {
  std::ostringstream log;
  const int rc = run_experiment(sub, cfg, seed, out.string(), log);
  if (log_out) *log_out = log.str();
  return rc;
}

}  // namespace

TEST_CASE("config errors exit with code 1") {
  const fs::path dir = fresh_dir("cfg_err");
  std::string log;

  CHECK(run("simulate", (dir / "missing.json").string(), 1, dir / "out", &log) == 1);
  CHECK(log.find("config error") != std::string::npos);

  auto expect_config_error = [&](const std::string& text) {
    const fs::path d = dir / "case";
    fs::remove_all(d);
    fs::create_directories(d);
    CHECK(run("simulate", write_config(d, text), 1, d / "out", &log) == 1);
    CHECK(log.find("config error") != std::string::npos);
  };

  expect_config_error("{not json");
  expect_config_error("{}");  // missing model
  expect_config_error(R"({"model": "/nonexistent/model.json"})");

  const std::string base = tiny_config();
  auto patched = [&](const std::string& from, const std::string& to) {
    std::string s = base;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  expect_config_error(patched("\"k0\": 100.0", "\"k0\": -1.0"));
  expect_config_error(patched("\"rl_knee\"", "\"no_such_joint\""));
  expect_config_error(patched("\"MOB\"", "\"Kalman\""));
  expect_config_error(patched("\"train_logs\": 2", "\"train_logs\": 1"));
  expect_config_error(patched("\"logs\": 1, \"duration\": 1.0",
                              "\"logs\": 1, \"duration\": 1.0, \"lpf_hz\": -5"));

  // unknown subcommand is a usage error, not a stage failure
  const fs::path d = dir / "sub";
  fs::create_directories(d);
  CHECK(run("frobnicate", write_config(d, base), 1, d / "out", &log) == 1);
}

TEST_CASE("full pipeline writes the documented tables") {
  const fs::path dir = fresh_dir("all");
  const std::string cfg = write_config(dir, tiny_config());
  const fs::path out = dir / "out";
  std::string log;
  REQUIRE(run("all", cfg, 7, out, &log) == 0);

  const std::map<std::string, std::string> headers{
      {"tables/datasets.csv",
       "group,d_in,n_g,train_trajectories,val_trajectories,train_ticks,val_ticks"},
      {"tables/friction_fit.csv", "joint,coulomb,viscous,stiction,residual_rms,degenerate"},
      {"tables/eval_summary.csv",
       "estimator,rmse_mean,rmse_max,r_rmse_mean,latency_ms_mean,latency_ms_p99"},
      {"tables/eval_joints.csv", "estimator,joint,rmse,r_rmse"},
      {"tables/eval_disturbance.csv", "estimator,window_rmse"},
      {"tables/detect_events.csv", "detector,scenario,window,detected,channel,delay_ms"},
      {"tables/detect_summary.csv",
       "detector,successes,windows,false_positives,clean_false_positives,mean_delay_ms"},
  };

  std::ifstream hf(out / "config_hash.txt");
  std::string hash;
  REQUIRE(hf >> hash);
  REQUIRE(hash.size() == 16);
  CHECK(hash.find_first_not_of("0123456789abcdef") == std::string::npos);

  for (const auto& [rel, header] : headers) {
    INFO(rel);
    std::ifstream f(out / rel);
    REQUIRE(f.good());
    std::string preamble, head, first_row;
    REQUIRE(std::getline(f, preamble));
    REQUIRE(std::getline(f, head));
    CHECK(preamble == "# config_hash=" + hash + " seed=7");
    CHECK(head == header);
    CHECK(std::getline(f, first_row));  // at least one data row
    const size_t cols = std::count(header.begin(), header.end(), ',');
    CHECK(static_cast<size_t>(std::count(first_row.begin(), first_row.end(), ',')) == cols);
  }

  // checkpoints carry the config hash and seed stamps
  std::ifstream ck(out / "checkpoints" / "mobnet_rl_thigh.json");
  REQUIRE(ck.good());
  std::stringstream ss;
  ss << ck.rdbuf();
  CHECK(ss.str().find("\"config_hash\": \"" + hash + "\"") != std::string::npos);

  // the out dir now refuses a different config
  std::string other = tiny_config();
  const std::string from = "\"d_h\": 4";
  other.replace(other.find(from), from.size(), "\"d_h\": 6");
  CHECK(run("simulate", write_config(dir, other), 7, out, &log) == 1);
  CHECK(log.find("holds artifacts") != std::string::npos);
}

TEST_CASE("simulation re-runs are bit-identical for a fixed seed") {
  const fs::path dir = fresh_dir("det");
  const std::string cfg = write_config(dir, tiny_config());

  REQUIRE(run("simulate", cfg, 11, dir / "a") == 0);
  REQUIRE(run("simulate", cfg, 11, dir / "b") == 0);
  REQUIRE(run("simulate", cfg, 12, dir / "c") == 0);

  auto bytes = [](const fs::path& p) { return read_file(p.string()); };
  for (const std::string rel : {"logs/train_000.csv", "logs/eval_000.csv",
                                "logs/collision_000.csv"}) {
    INFO(rel);
    CHECK(bytes(dir / "a" / rel) == bytes(dir / "b" / rel));
    CHECK(bytes(dir / "a" / rel) != bytes(dir / "c" / rel));
  }
}

TEST_CASE("a stage run out of order fails with code 2 and lists artifacts") {
  const fs::path dir = fresh_dir("order");
  const std::string cfg = write_config(dir, tiny_config());
  std::string log;
  CHECK(run("eval", cfg, 3, dir / "out", &log) == 2);
  CHECK(log.find("stage eval failed") != std::string::npos);
}
