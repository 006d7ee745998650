#pragma once

// Per-group training data from simulation logs. Feature layout per group, in
// declared order:
//   Q block: q then qd of the feature joints (ancestor chain, own actuated
//            joints, descendant joints, in that order)
//   T block: commanded torque of the group's own joints, load-bearing only
//   U block: the 12 base-IMU channels (rotation columns, angular velocity,
//            linear acceleration)
// Targets: r - tau_e (load-bearing and virtual groups) or r alone, per the
// group target mode; the external-torque kind regresses tau_e directly.

#include <stdexcept>
#include <string>
#include <vector>

#include "mobnet/observer.hpp"
#include "mobnet/simulator.hpp"

namespace mobnet {

enum class TargetKind { Uncertainty, External };

struct Trajectory {
  MatX X;  // d_in x T
  MatX Y;  // n_g x T
};

struct GroupDataset {
  std::string group_id;
  int d_in = 0, n_g = 0;
  std::vector<int> feature_joints;  // Q-block joint order
  std::vector<Trajectory> train, val;
  VecX feat_mean, feat_std;  // computed over the training split
};

namespace detail {

inline std::vector<int> feature_joints_of(const RobotModel& model, const LimbGroup& g) {
  std::vector<int> js = g.ancestor_chain;
  for (int j : g.joints)
    if (j >= model.n_virtual) js.push_back(j);  // virtual joints are not encoder channels
  js.insert(js.end(), g.descendants.begin(), g.descendants.end());
  return js;
}

inline int group_feature_width(const RobotModel& model, const LimbGroup& g) {
  const int nq = static_cast<int>(feature_joints_of(model, g).size());
  const int nt = g.load_bearing ? static_cast<int>(g.joints.size()) : 0;
  return 2 * nq + nt + 12;
}

}  // namespace detail

// feature vector for one group at one tick
inline VecX group_feature_vec(const RobotModel& model, const LimbGroup& g, const SimTick& tk) {
  const std::vector<int> js = detail::feature_joints_of(model, g);
  VecX x(detail::group_feature_width(model, g));
  int row = 0;
  for (int j : js) x[row++] = tk.q_m[j];
  for (int j : js) x[row++] = tk.qd_m[j];
  if (g.load_bearing)
    for (int j : g.joints) x[row++] = tk.tau_d[j];
  x.segment(row, 12) = tk.imu;
  return x;
}

// feature matrix (d_in x T) for one group over one log
inline MatX group_features(const RobotModel& model, const LimbGroup& g, const SimLog& log) {
  MatX X(detail::group_feature_width(model, g), log.ticks.size());
  for (size_t k = 0; k < log.ticks.size(); ++k)
    X.col(k) = group_feature_vec(model, g, log.ticks[k]);
  return X;
}

// residual stream (ticks x n_v) for one log under the nominal model
inline MatX log_residuals(const RobotModel& nominal, const SimLog& log, double k0 = 100.0) {
  MomentumObserver obs = MomentumObserver::reset(nominal, log.ticks[0].q_m,
                                                 log.ticks[0].qd_m, k0, log.dt);
  MatX R(log.ticks.size(), nominal.n_v());
  for (size_t k = 0; k < log.ticks.size(); ++k)
    R.row(k) = obs.update(nominal, log.ticks[k].q_m, log.ticks[k].qd_m, log.ticks[k].tau_d);
  return R;
}

// target matrix (n_g x T) for one group over one log
inline MatX group_targets(const LimbGroup& g, const SimLog& log, const MatX& residuals,
                          TargetKind kind) {
  const int ng = static_cast<int>(g.joints.size());
  MatX Y(ng, log.ticks.size());
  for (size_t k = 0; k < log.ticks.size(); ++k)
    for (int i = 0; i < ng; ++i) {
      const int j = g.joints[i];
      switch (kind) {
        case TargetKind::External:
          Y(i, k) = log.ticks[k].tau_e[j];
          break;
        case TargetKind::Uncertainty:
          Y(i, k) = g.target_mode == TargetMode::ResidualMinusExternal
                        ? residuals(k, j) - log.ticks[k].tau_e[j]
                        : residuals(k, j);
          break;
      }
    }
  return Y;
}

// Per-group datasets over a set of logs; 9:1 trajectory-level split (every
// tenth log is validation) and per-feature standardization from the training
// split. The nominal model supplies the observer residuals.
inline std::vector<GroupDataset> build_dataset(const RobotModel& model,
                                               const LimbGrouping& grouping,
                                               const std::vector<SimLog>& logs,
                                               TargetKind kind = TargetKind::Uncertainty,
                                               double k0 = 100.0) {
  if (logs.empty()) throw std::invalid_argument("build_dataset: no logs");
  const RobotModel nominal = perturb_inertial(model, model.nominal_inertial_scale);

  std::vector<MatX> residuals;
  residuals.reserve(logs.size());
  for (const auto& log : logs) {
    if (log.ticks.empty()) throw std::invalid_argument("build_dataset: empty log");
    residuals.push_back(log_residuals(nominal, log, k0));
  }

  std::vector<GroupDataset> out;
  for (const auto& g : grouping.groups) {
    GroupDataset ds;
    ds.group_id = g.id;
    ds.feature_joints = detail::feature_joints_of(model, g);
    ds.n_g = static_cast<int>(g.joints.size());
    ds.d_in = detail::group_feature_width(model, g);
    for (size_t i = 0; i < logs.size(); ++i) {
      Trajectory tr{group_features(model, g, logs[i]),
                    group_targets(g, logs[i], residuals[i], kind)};
      if (tr.X.hasNaN() || tr.Y.hasNaN())
        throw std::invalid_argument("build_dataset: NaN in log " + std::to_string(i));
      const bool val = logs.size() >= 2 && (i % 10 == 9 || (logs.size() < 10 && i + 1 == logs.size()));
      (val ? ds.val : ds.train).push_back(std::move(tr));
    }

    // standardization over the training split
    ds.feat_mean = VecX::Zero(ds.d_in);
    ds.feat_std = VecX::Ones(ds.d_in);
    long total = 0;
    for (const auto& tr : ds.train) {
      ds.feat_mean += tr.X.rowwise().sum();
      total += tr.X.cols();
    }
    ds.feat_mean /= static_cast<double>(total);
    VecX var = VecX::Zero(ds.d_in);
    for (const auto& tr : ds.train)
      var += (tr.X.colwise() - ds.feat_mean).cwiseAbs2().rowwise().sum();
    var /= static_cast<double>(total);
    for (int i = 0; i < ds.d_in; ++i)
      ds.feat_std[i] = var[i] > 1e-12 ? std::sqrt(var[i]) : 1.0;
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace mobnet
