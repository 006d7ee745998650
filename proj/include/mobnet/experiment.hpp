#pragma once

// Experiment orchestration: one JSON config document drives the
// simulate -> collect -> train -> eval -> detect -> ablate pipeline.
// Every artifact embeds the config hash and master seed; stages are
// single-threaded and bit-identical under a fixed (config, seed).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobnet/checkpoint.hpp"
#include "mobnet/detect.hpp"
#include "mobnet/estimator.hpp"
#include "mobnet/log_io.hpp"
#include "mobnet/scenario.hpp"
#include "mobnet/train.hpp"

namespace mobnet {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fnv1a64_hex(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline uint64_t mix_seed(uint64_t seed, uint64_t stage, uint64_t index) {
  uint64_t z = seed ^ (stage * 0x9e3779b97f4a7c15ull + index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// --------------------------------------------------------------- config

struct ExperimentConfig {
  std::string model_path;
  RobotModel model;
  UncertaintyConfig uncertainty;
  double k0 = 100.0;

  // collect
  int train_logs = 6;
  double train_duration = 4.0;
  ExcitationKind excitation = ExcitationKind::Gait;
  double control_dt = 5e-4, log_dt = 5e-4;
  RteConfig rte;

  // networks + training
  int d_h = 16, horizon = 50;
  double sigma_min = 0.01;  // in standardized target units
  TrainConfig tcfg;

  // eval
  int eval_logs = 2;
  double eval_duration = 2.0;
  double eval_lpf_hz = 15.0;
  std::vector<std::string> estimators;
  JointDisturbance disturbance;  // unseen step, absent if joint empty

  // detect
  int n_collisions = 4, clean_logs = 2;
  double collision_torque = 30.0, collision_duration = 0.08, detect_duration = 2.0;
  DetectionConfig det;

  // ablate
  std::vector<int> size_sweep;

  // plumbing
  uint64_t seed = 0;
  std::string out_dir;
  std::string hash;
  json raw;
};

namespace detail {

inline UncertaintyLevel parse_level(const std::string& s) {
  if (s == "ideal") return UncertaintyLevel::Ideal;
  if (s == "sensor_noise") return UncertaintyLevel::SensorNoise;
  if (s == "all_uncertainty") return UncertaintyLevel::AllUncertainty;
  throw ConfigError("config: unknown uncertainty level '" + s + "'");
}

inline ExcitationKind parse_excitation(const std::string& s) {
  if (s == "static_hold") return ExcitationKind::StaticHold;
  if (s == "sinusoid") return ExcitationKind::Sinusoid;
  if (s == "gait") return ExcitationKind::Gait;
  throw ConfigError("config: unknown excitation '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot read " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const std::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }

  ExperimentConfig cfg;
  cfg.raw = doc;
  cfg.hash = detail::fnv1a64_hex(doc.dump());

  if (!doc.contains("model")) throw ConfigError("config: missing 'model'");
  cfg.model_path = doc["model"].get<std::string>();
  std::ifstream mf(cfg.model_path);
  if (!mf) throw ConfigError("config: model file not found: " + cfg.model_path);
  std::stringstream ss;
  ss << mf.rdbuf();
  try {
    cfg.model = parse_model(ss.str());
  } catch (const std::exception& e) {
    throw ConfigError("config: bad model file: " + std::string(e.what()));
  }

  cfg.uncertainty.level = detail::parse_level(doc.value("uncertainty", "sensor_noise"));
  // model error exists only at the all-uncertainty level; below it the
  // nominal model used by observers/datasets equals the true model
  if (!cfg.uncertainty.has_model_error()) cfg.model.nominal_inertial_scale = 1.0;
  if (doc.contains("observer")) cfg.k0 = doc["observer"].value("k0", 100.0);
  if (cfg.k0 <= 0.0) throw ConfigError("config: observer k0 must be positive");

  const json collect = doc.value("collect", json::object());
  cfg.train_logs = collect.value("train_logs", 6);
  cfg.train_duration = collect.value("duration", 4.0);
  cfg.excitation = detail::parse_excitation(collect.value("excitation", "gait"));
  cfg.control_dt = collect.value("control_dt", 5e-4);
  cfg.log_dt = collect.value("log_dt", cfg.control_dt);
  if (cfg.train_logs < 2) throw ConfigError("config: need at least 2 training logs");
  if (cfg.control_dt <= 0.0 || cfg.log_dt < cfg.control_dt)
    throw ConfigError("config: need 0 < control_dt <= log_dt");
  const json rte = collect.value("rte", json::object());
  cfg.rte.enabled = rte.value("enabled", false);
  cfg.rte.tau_bound = VecX::Constant(cfg.model.n_actuated(), rte.value("tau_bound", 2.0));

  const json net = doc.value("network", json::object());
  cfg.d_h = net.value("d_h", 16);
  cfg.horizon = net.value("horizon", 50);
  cfg.sigma_min = net.value("sigma_min", 0.01);
  if (cfg.sigma_min <= 0.0) throw ConfigError("config: network sigma_min must be > 0");
  if (cfg.d_h < 1 || cfg.horizon < 1) throw ConfigError("config: network d_h/horizon >= 1");

  const json tr = doc.value("train", json::object());
  cfg.tcfg.epochs = tr.value("epochs", 30);
  cfg.tcfg.batch = tr.value("batch", 8);
  cfg.tcfg.lr_start = tr.value("lr_start", 0.02);
  cfg.tcfg.lr_end = tr.value("lr_end", 0.0005);
  cfg.tcfg.lr_decay_epochs = tr.value("lr_decay_epochs", std::max(1, cfg.tcfg.epochs / 2));
  try {
    cfg.tcfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const json ev = doc.value("eval", json::object());
  cfg.eval_logs = ev.value("logs", 2);
  cfg.eval_duration = ev.value("duration", 2.0);
  cfg.eval_lpf_hz = ev.value("lpf_hz", 15.0);
  if (cfg.eval_lpf_hz < 0.0) throw ConfigError("config: eval.lpf_hz must be >= 0");
  if (cfg.eval_logs < 1) throw ConfigError("config: need at least 1 eval log");
  if (ev.contains("disturbance")) {
    const json d = ev["disturbance"];
    cfg.disturbance.joint = d.value("joint", "");
    cfg.disturbance.torque = d.value("torque", 30.0);
    cfg.disturbance.t0 = d.value("t0", 0.22);
    cfg.disturbance.duration = d.value("duration", 0.1);
    try {
      cfg.model.joint_index(cfg.disturbance.joint);
    } catch (const std::exception&) {
      throw ConfigError("config: unknown disturbance joint '" + cfg.disturbance.joint + "'");
    }
  }

  cfg.estimators = doc.value(
      "estimators", std::vector<std::string>{"MOB", "MOB-fric", "MOB-fric-BPF", "MOB-Net",
                                             "FTS-e2e"});
  const std::set<std::string> known{"MOB", "MOB-fric", "MOB-fric-BPF", "MOB-Net", "FTS-e2e"};
  for (const auto& e : cfg.estimators)
    if (!known.count(e)) throw ConfigError("config: unknown estimator '" + e + "'");

  const json det = doc.value("detect", json::object());
  cfg.n_collisions = det.value("collisions", 4);
  cfg.clean_logs = det.value("clean_logs", 2);
  cfg.collision_torque = det.value("torque", 30.0);
  cfg.collision_duration = det.value("collision_duration", 0.08);
  cfg.detect_duration = det.value("duration", 2.0);
  cfg.det.lpf_hz = det.value("lpf_hz", 15.0);
  cfg.det.horizon_s = det.value("horizon_s", 5e-3);
  cfg.det.mask_settle_s = det.value("mask_settle_s", 0.01);
  if (cfg.n_collisions < 1 || cfg.clean_logs < 1)
    throw ConfigError("config: detect needs collisions >= 1 and clean_logs >= 1");

  if (doc.contains("ablate"))
    cfg.size_sweep = doc["ablate"].value("sizes", std::vector<int>{});

  return cfg;
}

// --------------------------------------------------------------- artifacts

struct StageContext {
  ExperimentConfig cfg;
  std::vector<std::string> artifacts;

  std::string path(const std::string& rel) const {
    return (std::filesystem::path(cfg.out_dir) / rel).string();
  }
  std::ofstream open_csv(const std::string& rel, std::vector<std::string>* arts = nullptr) {
    const std::string p = path(rel);
    std::filesystem::create_directories(std::filesystem::path(p).parent_path());
    std::ofstream f(p);
    if (!f) throw StageError("cannot write " + p);
    f << "# config_hash=" << cfg.hash << " seed=" << cfg.seed << "\n";
    (arts ? *arts : artifacts).push_back(p);
    return f;
  }
};

namespace detail {

inline void write_log_artifact(StageContext& ctx, SimLog log, const std::string& rel) {
  log.config_hash = ctx.cfg.hash;
  const std::string p = ctx.path(rel);
  std::filesystem::create_directories(std::filesystem::path(p).parent_path());
  write_simlog(log, p);
  ctx.artifacts.push_back(p);
}

inline void stamp_json_artifact(const StageContext& ctx, const std::string& path) {
  std::ifstream in(path);
  json doc = json::parse(in);
  in.close();
  doc["config_hash"] = ctx.cfg.hash;
  doc["seed"] = ctx.cfg.seed;
  std::ofstream out(path);
  out << doc.dump(1) << '\n';
}

inline Scenario base_scenario(const ExperimentConfig& cfg, double duration, bool with_rte) {
  Scenario sc;
  sc.duration = duration;
  sc.excitation = cfg.excitation;
  sc.control_dt = cfg.control_dt;
  sc.log_dt = cfg.log_dt;
  if (with_rte) sc.rte = cfg.rte;
  return sc;
}

// collision schedule: one scripted swing-limb impulse per log, cycling the
// actuated joints of the load-bearing legs; timed inside the detection-active
// part of the leg's first swing window
struct CollisionPlan {
  std::string joint;
  double t0;
};

inline std::vector<CollisionPlan> collision_plans(const ExperimentConfig& cfg, int count) {
  const LimbGrouping grouping = derive_groups(cfg.model);
  std::vector<std::pair<int, int>> slots;  // (joint, leg parity)
  int leg = 0;
  for (const auto& g : grouping.groups) {
    if (!g.load_bearing || g.joints.size() < 3) continue;
    for (int j : g.joints) slots.push_back({j, leg % 2});
    ++leg;
  }
  if (slots.empty()) throw StageError("detect: model has no load-bearing legs");

  const GaitConfig gait;  // scenario defaults
  std::vector<CollisionPlan> plans;
  for (int k = 0; k < count; ++k) {
    const auto& [j, parity] = slots[k % slots.size()];
    const double swing_mid =
        gait.period * (0.5 * parity + 0.25 * (gait.swing_start + gait.swing_end));
    plans.push_back({cfg.model.joints[j].name, swing_mid - 0.5 * cfg.collision_duration});
  }
  return plans;
}

struct EstimatorSet {
  std::vector<std::unique_ptr<Estimator>> items;
};

inline std::vector<GroupNet> load_group_nets(const StageContext& ctx, const std::string& stem) {
  const LimbGrouping grouping = derive_groups(ctx.cfg.model);
  std::vector<GroupNet> nets;
  for (const auto& g : grouping.groups) {
    const std::string p = ctx.path("checkpoints/" + stem + "_" + g.id + ".json");
    if (!std::filesystem::exists(p))
      throw StageError("missing checkpoint " + p + " (run the train stage first)");
    std::string gid;
    Network net = load_checkpoint(p, &gid);
    nets.push_back({gid, std::move(net)});
  }
  return nets;
}

inline EstimatorSet make_estimators(const StageContext& ctx,
                                    const std::vector<SimLog>& fit_logs) {
  const ExperimentConfig& cfg = ctx.cfg;
  const LimbGrouping grouping = derive_groups(cfg.model);
  const RobotModel nominal = perturb_inertial(cfg.model, cfg.model.nominal_inertial_scale);

  FrictionFit fit;
  const bool need_fric =
      std::count(cfg.estimators.begin(), cfg.estimators.end(), "MOB-fric") ||
      std::count(cfg.estimators.begin(), cfg.estimators.end(), "MOB-fric-BPF");
  if (need_fric) fit = fit_friction(cfg.model, grouping, fit_logs, 0.01, cfg.k0);

  EstimatorSet set;
  for (const auto& name : cfg.estimators) {
    if (name == "MOB") {
      set.items.push_back(std::make_unique<MobEstimator>(nominal, cfg.k0, cfg.log_dt));
    } else if (name == "MOB-fric") {
      set.items.push_back(std::make_unique<MobFricEstimator>(nominal, cfg.k0, cfg.log_dt, fit));
    } else if (name == "MOB-fric-BPF") {
      set.items.push_back(
          std::make_unique<MobFricBpfEstimator>(nominal, cfg.k0, cfg.log_dt, fit));
    } else if (name == "MOB-Net") {
      set.items.push_back(std::make_unique<MobNetEstimator>(
          cfg.model, grouping, cfg.k0, cfg.log_dt, load_group_nets(ctx, "mobnet")));
    } else if (name == "FTS-e2e") {
      set.items.push_back(std::make_unique<FtsE2eEstimator>(cfg.model, grouping,
                                                            load_group_nets(ctx, "fts")));
    }
  }
  return set;
}

inline std::vector<SimLog> read_logs(const StageContext& ctx, const std::string& stem,
                                     int count) {
  std::vector<SimLog> logs;
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "logs/%s_%03d.csv", stem.c_str(), i);
    const std::string p = ctx.path(name);
    if (!std::filesystem::exists(p))
      throw StageError("missing log " + p + " (run the simulate stage first)");
    logs.push_back(read_simlog(p));
  }
  return logs;
}

}  // namespace detail

// --------------------------------------------------------------- stages

inline void stage_simulate(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  char name[64];

  for (int i = 0; i < cfg.train_logs; ++i) {
    Scenario sc = detail::base_scenario(cfg, cfg.train_duration, true);
    std::snprintf(name, sizeof(name), "logs/train_%03d.csv", i);
    detail::write_log_artifact(
        ctx, run_scenario(cfg.model, sc, cfg.uncertainty, {}, detail::mix_seed(cfg.seed, 1, i)),
        name);
  }
  for (int i = 0; i < cfg.eval_logs; ++i) {
    Scenario sc = detail::base_scenario(cfg, cfg.eval_duration, false);
    std::snprintf(name, sizeof(name), "logs/eval_%03d.csv", i);
    detail::write_log_artifact(
        ctx, run_scenario(cfg.model, sc, cfg.uncertainty, {}, detail::mix_seed(cfg.seed, 2, i)),
        name);
  }
  if (!cfg.disturbance.joint.empty()) {
    Scenario sc = detail::base_scenario(cfg, cfg.eval_duration, false);
    sc.joint_disturbances = {cfg.disturbance};
    detail::write_log_artifact(
        ctx, run_scenario(cfg.model, sc, cfg.uncertainty, {}, detail::mix_seed(cfg.seed, 3, 0)),
        "logs/dist_000.csv");
  }
  for (int i = 0; i < cfg.clean_logs; ++i) {
    Scenario sc = detail::base_scenario(cfg, cfg.detect_duration, false);
    std::snprintf(name, sizeof(name), "logs/clean_%03d.csv", i);
    detail::write_log_artifact(
        ctx, run_scenario(cfg.model, sc, cfg.uncertainty, {}, detail::mix_seed(cfg.seed, 4, i)),
        name);
  }
  const auto plans = detail::collision_plans(cfg, cfg.n_collisions);
  for (int i = 0; i < cfg.n_collisions; ++i) {
    Scenario sc = detail::base_scenario(cfg, cfg.detect_duration, false);
    sc.joint_disturbances = {
        {plans[i].joint, cfg.collision_torque, plans[i].t0, cfg.collision_duration}};
    std::snprintf(name, sizeof(name), "logs/collision_%03d.csv", i);
    detail::write_log_artifact(
        ctx, run_scenario(cfg.model, sc, cfg.uncertainty, {}, detail::mix_seed(cfg.seed, 5, i)),
        name);
  }
}

inline void stage_collect(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const auto logs = detail::read_logs(ctx, "train", cfg.train_logs);
  const LimbGrouping grouping = derive_groups(cfg.model);
  const auto datasets = build_dataset(cfg.model, grouping, logs, TargetKind::Uncertainty, cfg.k0);

  auto f = ctx.open_csv("tables/datasets.csv");
  f << "group,d_in,n_g,train_trajectories,val_trajectories,train_ticks,val_ticks\n";
  for (const auto& ds : datasets) {
    long tt = 0, vt = 0;
    for (const auto& tr : ds.train) tt += tr.X.cols();
    for (const auto& tr : ds.val) vt += tr.X.cols();
    f << ds.group_id << ',' << ds.d_in << ',' << ds.n_g << ',' << ds.train.size() << ','
      << ds.val.size() << ',' << tt << ',' << vt << '\n';
  }
}

namespace detail {

inline void train_family(StageContext& ctx, const std::vector<SimLog>& logs, TargetKind kind,
                         const std::string& stem, int d_h, uint64_t seed_stage) {
  const ExperimentConfig& cfg = ctx.cfg;
  const LimbGrouping grouping = derive_groups(cfg.model);
  const auto datasets = build_dataset(cfg.model, grouping, logs, kind, cfg.k0);
  for (size_t gi = 0; gi < datasets.size(); ++gi) {
    const GroupDataset& ds = datasets[gi];
    NetworkConfig ncfg{ds.d_in, d_h, ds.n_g, cfg.horizon, cfg.sigma_min};
    TrainConfig tcfg = cfg.tcfg;
    tcfg.seed = mix_seed(cfg.seed, seed_stage, gi);
    TrainResult res = train(ds, ncfg, tcfg);

    const std::string ck = ctx.path("checkpoints/" + stem + "_" + ds.group_id + ".json");
    std::filesystem::create_directories(std::filesystem::path(ck).parent_path());
    save_checkpoint(res.net, ds.group_id, ck);
    stamp_json_artifact(ctx, ck);
    ctx.artifacts.push_back(ck);

    auto cf = ctx.open_csv("curves/" + stem + "_" + ds.group_id + ".csv");
    cf << "epoch,train_nll,val_nll\n";
    char buf[96];
    for (size_t e = 0; e < res.train_loss.size(); ++e) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e, res.train_loss[e],
                    res.val_loss[e]);
      cf << buf;
    }
  }
}

}  // namespace detail

inline void stage_train(StageContext& ctx) {
  const auto logs = detail::read_logs(ctx, "train", ctx.cfg.train_logs);
  detail::train_family(ctx, logs, TargetKind::Uncertainty, "mobnet", ctx.cfg.d_h, 6);
  if (std::count(ctx.cfg.estimators.begin(), ctx.cfg.estimators.end(), "FTS-e2e"))
    detail::train_family(ctx, logs, TargetKind::External, "fts", ctx.cfg.d_h, 7);

  // friction coefficients, for the record
  const LimbGrouping grouping = derive_groups(ctx.cfg.model);
  const FrictionFit fit = fit_friction(ctx.cfg.model, grouping, logs, 0.01, ctx.cfg.k0);
  auto f = ctx.open_csv("tables/friction_fit.csv");
  f << "joint,coulomb,viscous,stiction,residual_rms,degenerate\n";
  char buf[160];
  for (int j = ctx.cfg.model.n_virtual; j < ctx.cfg.model.n_v(); ++j) {
    const auto& c = fit.joints[j];
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%d\n",
                  ctx.cfg.model.joints[j].name.c_str(), c.coulomb, c.viscous, c.stiction,
                  c.residual_rms, c.degenerate ? 1 : 0);
    f << buf;
  }
}

inline void stage_eval(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const auto train_logs = detail::read_logs(ctx, "train", cfg.train_logs);
  const auto eval_logs = detail::read_logs(ctx, "eval", cfg.eval_logs);
  auto set = detail::make_estimators(ctx, train_logs);

  auto summary = ctx.open_csv("tables/eval_summary.csv");
  summary << "estimator,rmse_mean,rmse_max,r_rmse_mean,latency_ms_mean,latency_ms_p99\n";
  auto joints = ctx.open_csv("tables/eval_joints.csv");
  joints << "estimator,joint,rmse,r_rmse\n";

  char buf[256];
  for (auto& est : set.items) {
    VecX rmse2 = VecX::Zero(cfg.model.n_v());
    VecX rr = VecX::Zero(cfg.model.n_v());
    std::vector<double> lat;
    for (const auto& log : eval_logs) {
      const EstimatorRun run = run_estimator(*est, log);
      const VecX e = rmse_vs_filtered_truth(run, log, cfg.k0, cfg.eval_lpf_hz);
      rmse2 += e.cwiseAbs2();
      rr += relative_rmse(e, log);
      lat.insert(lat.end(), run.latency.begin(), run.latency.end());
    }
    const VecX rmse = (rmse2 / eval_logs.size()).cwiseSqrt();
    rr /= static_cast<double>(eval_logs.size());
    std::sort(lat.begin(), lat.end());
    const double lat_mean =
        1e3 * std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(lat.size());
    const double lat_p99 = 1e3 * lat[static_cast<size_t>(0.99 * (lat.size() - 1))];

    // summary aggregates the actuated joints; the virtual rows live in
    // different units (base wrench) and are reported per joint below
    const auto act = Eigen::seq(cfg.model.n_virtual, cfg.model.n_v() - 1);
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%.6g\n", est->name().c_str(),
                  rmse(act).mean(), rmse(act).maxCoeff(), rr(act).mean(), lat_mean, lat_p99);
    summary << buf;
    for (int j = 0; j < cfg.model.n_v(); ++j) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.6g,%.6g\n", est->name().c_str(),
                    cfg.model.joints[j].name.c_str(), rmse[j], rr[j]);
      joints << buf;
    }
  }

  if (!cfg.disturbance.joint.empty()) {
    const SimLog dist = read_simlog(ctx.path("logs/dist_000.csv"));
    auto dt = ctx.open_csv("tables/eval_disturbance.csv");
    dt << "estimator,window_rmse\n";
    const int j = cfg.model.joint_index(cfg.disturbance.joint);
    MatX TE(dist.ticks.size(), dist.n_v());
    for (size_t k = 0; k < dist.ticks.size(); ++k) TE.row(k) = dist.ticks[k].tau_e;
    const MatX ref = lowpass_k0(TE, cfg.k0, dist.dt);
    for (auto& est : set.items) {
      const EstimatorRun run = run_estimator(*est, dist);
      double se = 0.0;
      long count = 0;
      for (size_t k = 0; k < dist.ticks.size(); ++k) {
        const double t = dist.ticks[k].t;
        if (t < cfg.disturbance.t0 || t >= cfg.disturbance.t0 + cfg.disturbance.duration)
          continue;
        const double e = run.tau_e_hat(k, j) - ref(k, j);
        se += e * e;
        ++count;
      }
      if (count == 0) throw StageError("eval: disturbance window contains no ticks");
      std::snprintf(buf, sizeof(buf), "%s,%.6g\n", est->name().c_str(),
                    std::sqrt(se / static_cast<double>(count)));
      dt << buf;
    }
  }
}

inline void stage_detect(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const LimbGrouping grouping = derive_groups(cfg.model);
  const auto train_logs = detail::read_logs(ctx, "train", cfg.train_logs);
  const auto clean = detail::read_logs(ctx, "clean", cfg.clean_logs);
  std::vector<SimLog> hits = detail::read_logs(ctx, "collision", cfg.n_collisions);

  // detectors: the configured estimators under OR logic, plus the MOB-Net
  // single-channel variants (Table 7 layout)
  struct Detector {
    std::string label;
    Estimator* est;
    DetectLogic logic;
  };
  auto set = detail::make_estimators(ctx, train_logs);
  std::vector<Detector> detectors;
  for (size_t i = 0; i < set.items.size(); ++i) {
    Estimator* e = set.items[i].get();
    if (e->name() == "MOB-Net") {
      detectors.push_back({"MOB-Net-OR", e, DetectLogic::Or});
      detectors.push_back({"MOB-Net-mean", e, DetectLogic::MeanOnly});
      detectors.push_back({"MOB-Net-sigma", e, DetectLogic::SigmaOnly});
    } else {
      detectors.push_back({e->name(), e, DetectLogic::Or});
    }
  }

  auto events_csv = ctx.open_csv("tables/detect_events.csv");
  events_csv << "detector,scenario,window,detected,channel,delay_ms\n";
  auto summary = ctx.open_csv("tables/detect_summary.csv");
  summary << "detector,successes,windows,false_positives,clean_false_positives,mean_delay_ms\n";

  char buf[256];
  for (const auto& d : detectors) {
    DetectionConfig dc = calibrate_thresholds(cfg.model, grouping, *d.est, clean, cfg.det);
    dc.logic = d.logic;

    int successes = 0, windows = 0, fps = 0;
    double delay_sum = 0.0;
    for (size_t s = 0; s < hits.size(); ++s) {
      auto events = detect(cfg.model, grouping, *d.est, hits[s], dc);
      DetectionReport rep = evaluate_detection(hits[s], events);
      windows += static_cast<int>(rep.windows.size());
      successes += rep.detected;
      fps += rep.false_positives;
      for (size_t w = 0; w < rep.windows.size(); ++w) {
        const auto& win = rep.windows[w];
        if (win.detected) delay_sum += win.delay_ms;
        std::string channel = "-";
        for (const auto& e : events)
          if (e.window == static_cast<int>(w)) {
            channel = e.sigma_channel ? "sigma" : "mean";
            break;
          }
        std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%d,%s,%.6g\n", d.label.c_str(), s, w,
                      win.detected ? 1 : 0, channel.c_str(), win.detected ? win.delay_ms : -1.0);
        events_csv << buf;
      }
    }
    int clean_fps = 0;
    for (const auto& log : clean)
      clean_fps += static_cast<int>(detect(cfg.model, grouping, *d.est, log, dc).size());

    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%d,%.6g\n", d.label.c_str(), successes,
                  windows, fps, clean_fps,
                  successes > 0 ? delay_sum / successes : -1.0);
    summary << buf;
  }
}

inline void stage_ablate(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  if (cfg.disturbance.joint.empty())
    throw StageError("ablate: config needs eval.disturbance for the RTE comparison");
  const LimbGrouping grouping = derive_groups(cfg.model);
  char buf[256];

  // shared held-out logs: the eval disturbance log + eval logs
  const SimLog dist = read_simlog(ctx.path("logs/dist_000.csv"));
  const auto eval_logs = detail::read_logs(ctx, "eval", cfg.eval_logs);
  const int dj = cfg.model.joint_index(cfg.disturbance.joint);
  MatX TE(dist.ticks.size(), dist.n_v());
  for (size_t k = 0; k < dist.ticks.size(); ++k) TE.row(k) = dist.ticks[k].tau_e;
  const MatX ref = lowpass_k0(TE, cfg.k0, dist.dt);

  auto window_rmse = [&](Estimator& est) {
    const EstimatorRun run = run_estimator(est, dist);
    double se = 0.0;
    long count = 0;
    for (size_t k = 0; k < dist.ticks.size(); ++k) {
      const double t = dist.ticks[k].t;
      if (t < cfg.disturbance.t0 || t >= cfg.disturbance.t0 + cfg.disturbance.duration) continue;
      const double e = run.tau_e_hat(k, dj) - ref(k, dj);
      se += e * e;
      ++count;
    }
    return std::sqrt(se / static_cast<double>(count));
  };
  auto eval_rmse_mean = [&](Estimator& est) {
    VecX r2 = VecX::Zero(cfg.model.n_v());
    for (const auto& log : eval_logs)
      r2 += rmse_vs_filtered_truth(run_estimator(est, log), log, cfg.k0, cfg.eval_lpf_hz)
                .cwiseAbs2();
    return std::sqrt((r2 / eval_logs.size()).tail(cfg.model.n_actuated()).mean());
  };

  // helper: fresh training pipeline over freshly simulated logs
  auto train_nets = [&](bool with_rte, const LimbGrouping& groups, int d_h, uint64_t stage) {
    std::vector<SimLog> logs;
    for (int i = 0; i < cfg.train_logs; ++i) {
      Scenario sc = detail::base_scenario(cfg, cfg.train_duration, with_rte);
      logs.push_back(
          run_scenario(cfg.model, sc, cfg.uncertainty, {}, detail::mix_seed(cfg.seed, 1, i)));
    }
    const auto datasets = build_dataset(cfg.model, groups, logs, TargetKind::Uncertainty, cfg.k0);
    std::vector<GroupNet> nets;
    double val_nll = 0.0;
    for (size_t gi = 0; gi < datasets.size(); ++gi) {
      NetworkConfig ncfg{datasets[gi].d_in, d_h, datasets[gi].n_g, cfg.horizon, cfg.sigma_min};
      TrainConfig tcfg = cfg.tcfg;
      tcfg.seed = detail::mix_seed(cfg.seed, stage, gi);
      TrainResult res = train(datasets[gi], ncfg, tcfg);
      val_nll += res.val_loss.back();
      nets.push_back({datasets[gi].group_id, std::move(res.net)});
    }
    return std::pair{std::move(nets), val_nll / static_cast<double>(datasets.size())};
  };

  // 1. RTE on/off, otherwise identical and identically seeded
  {
    auto f = ctx.open_csv("tables/ablate_rte.csv");
    f << "variant,disturbance_window_rmse\n";
    for (const bool with_rte : {true, false}) {
      auto [nets, nll] = train_nets(with_rte, grouping, cfg.d_h, 8);
      MobNetEstimator est(cfg.model, grouping, cfg.k0, cfg.log_dt, std::move(nets));
      std::snprintf(buf, sizeof(buf), "%s,%.6g\n", with_rte ? "with_rte" : "without_rte",
                    window_rmse(est));
      f << buf;
    }
  }

  // 2. modular vs single network at a comparable parameter budget
  {
    auto f = ctx.open_csv("tables/ablate_modular.csv");
    f << "variant,params,val_nll,eval_rmse_mean\n";
    auto [nets, nll] = train_nets(cfg.rte.enabled, grouping, cfg.d_h, 9);
    long params = 0;
    for (const auto& gn : nets) params += gn.net.layout.total;
    MobNetEstimator modular(cfg.model, grouping, cfg.k0, cfg.log_dt, std::move(nets));
    std::snprintf(buf, sizeof(buf), "modular,%ld,%.6g,%.6g\n", params, nll,
                  eval_rmse_mean(modular));
    f << buf;

    const LimbGrouping single = derive_groups(cfg.model, true);
    // pick d_h for the single net so its parameter count approaches the
    // modular sum from below
    const GroupDataset probe = build_dataset(
        cfg.model, single, {read_simlog(ctx.path("logs/train_000.csv"))},
        TargetKind::Uncertainty, cfg.k0)[0];
    int dh1 = 1;
    for (int dh = 1; dh <= 16 * cfg.d_h; ++dh) {
      NetworkConfig probe_cfg{probe.d_in, dh, probe.n_g, cfg.horizon, cfg.sigma_min};
      if (NetLayout::make(probe_cfg).total <= params) dh1 = dh;
    }
    auto [nets1, nll1] = train_nets(cfg.rte.enabled, single, dh1, 10);
    const long params1 = nets1[0].net.layout.total;
    MobNetEstimator mono(cfg.model, single, cfg.k0, cfg.log_dt, std::move(nets1),
                         "MOB-Net-Single");
    std::snprintf(buf, sizeof(buf), "single,%ld,%.6g,%.6g\n", params1, nll1,
                  eval_rmse_mean(mono));
    f << buf;
  }

  // 3. hidden-size sweep
  if (!cfg.size_sweep.empty()) {
    auto f = ctx.open_csv("tables/ablate_size.csv");
    f << "d_h,params,val_nll,eval_rmse_mean\n";
    for (size_t si = 0; si < cfg.size_sweep.size(); ++si) {
      const int dh = cfg.size_sweep[si];
      auto [nets, nll] = train_nets(cfg.rte.enabled, grouping, dh, 11 + si);
      long params = 0;
      for (const auto& gn : nets) params += gn.net.layout.total;
      MobNetEstimator est(cfg.model, grouping, cfg.k0, cfg.log_dt, std::move(nets));
      std::snprintf(buf, sizeof(buf), "%d,%ld,%.6g,%.6g\n", dh, params, nll,
                    eval_rmse_mean(est));
      f << buf;
    }
  }
}

// --------------------------------------------------------------- driver

// returns 0 on success, 1 on config error, 2 on stage failure
inline int run_experiment(const std::string& subcommand, const std::string& config_path,
                          uint64_t seed, const std::string& out_dir, std::ostream& log) {
  StageContext ctx;
  try {
    ctx.cfg = load_experiment(config_path);
    ctx.cfg.seed = seed;
    ctx.cfg.out_dir = out_dir;
    std::filesystem::create_directories(out_dir);

    // hash guard: refuse to mix artifacts from different configs in one out dir
    const std::string hash_file = ctx.path("config_hash.txt");
    if (std::filesystem::exists(hash_file)) {
      std::ifstream hf(hash_file);
      std::string prev;
      hf >> prev;
      if (prev != ctx.cfg.hash)
        throw ConfigError("output dir " + out_dir + " holds artifacts of config " + prev +
                          ", current config is " + ctx.cfg.hash);
    } else {
      std::ofstream hf(hash_file);
      hf << ctx.cfg.hash << '\n';
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return 1;
  }

  const std::vector<std::string> order =
      subcommand == "all"
          ? std::vector<std::string>{"simulate", "collect", "train", "eval", "detect"}
          : std::vector<std::string>{subcommand};
  for (const auto& stage : order) {
    try {
      if (stage == "simulate") stage_simulate(ctx);
      else if (stage == "collect") stage_collect(ctx);
      else if (stage == "train") stage_train(ctx);
      else if (stage == "eval") stage_eval(ctx);
      else if (stage == "detect") stage_detect(ctx);
      else if (stage == "ablate") stage_ablate(ctx);
      else {
        log << "config error: unknown subcommand '" << stage << "'\n";
        return 1;
      }
      log << "stage " << stage << " done\n";
    } catch (const std::exception& e) {
      log << "stage " << stage << " failed: " << e.what() << "\n";
      log << "artifacts so far:\n";
      for (const auto& a : ctx.artifacts) log << "  " << a << "\n";
      return 2;
    }
  }
  for (const auto& a : ctx.artifacts) log << "wrote " << a << "\n";
  return 0;
}

}  // namespace mobnet
