#pragma once

// Collision detection from estimated torque/sigma streams, threshold
// calibration, and contact-wrench identification.
//
// Signal path: one-pole low-pass (15 Hz) -> per-joint threshold -> the
// exceedance must persist ceil(horizon / dt) consecutive ticks. Joints whose
// limb group is in expected contact are masked (counters reset, no events);
// virtual joints are masked whenever any expected contact is active, since
// the stance reaction always loads the base.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobnet/estimator.hpp"
#include "mobnet/filters.hpp"

namespace mobnet {

enum class DetectLogic { Or, MeanOnly, SigmaOnly };

struct DetectionConfig {
  VecX thr_mean, thr_sigma;  // per generalized coordinate; +inf disables
  double lpf_hz = 15.0;
  double horizon_s = 5e-3;
  double mask_settle_s = 0.01;  // keep a joint masked after unmasking until
                                // the low-pass state has shed the stance value
  DetectLogic logic = DetectLogic::Or;
};

struct DetectionEvent {
  double t = 0.0;
  int joint = -1;
  bool sigma_channel = false;
  double value = 0.0;  // filtered signal at trigger
  int window = -1;     // matched ground-truth collision window, set by evaluate
};

namespace detail {

// per-tick joint mask: true = suppressed (expected contact)
struct ContactMasker {
  std::vector<std::vector<int>> owner_joints;  // per contact link: joints of its group
  std::vector<int> virtual_joints;

  ContactMasker(const RobotModel& model, const LimbGrouping& grouping) {
    virtual_joints = grouping.virtual_joints;
    for (int cl : model.contact_links) {
      std::vector<int> joints;
      for (const auto& g : grouping.groups)
        for (int j : g.joints)
          if (model.joints[j].child_link == cl) joints = g.joints;
      owner_joints.push_back(std::move(joints));
    }
  }

  std::vector<bool> mask(const SimTick& tk, int n_v) const {
    std::vector<bool> m(n_v, false);
    bool any = false;
    for (size_t i = 0; i < tk.expected_contact.size() && i < owner_joints.size(); ++i)
      if (tk.expected_contact[i]) {
        any = true;
        for (int j : owner_joints[i]) m[j] = true;
      }
    if (any)
      for (int j : virtual_joints) m[j] = true;
    return m;
  }
};

// stateful mask with a settle window: a joint stays masked for settle_ticks
// after its expected contact clears, so filter tails from the masked phase
// cannot trip the thresholds
struct SettledMasker {
  ContactMasker raw;
  int settle_ticks;
  std::vector<int> since;  // ticks since last raw mask

  SettledMasker(const RobotModel& model, const LimbGrouping& grouping, double settle_s,
                double dt)
      : raw(model, grouping),
        settle_ticks(static_cast<int>(std::ceil(settle_s / dt))),
        since(model.n_v(), settle_ticks) {}

  std::vector<bool> mask(const SimTick& tk, int n_v) {
    std::vector<bool> m = raw.mask(tk, n_v);
    for (int j = 0; j < n_v; ++j) {
      if (m[j])
        since[j] = 0;
      else if (since[j]++ < settle_ticks)
        m[j] = true;
    }
    return m;
  }
};

}  // namespace detail

// threshold = 1.1 x max |low-passed signal| over unmasked calibration ticks;
// joints that are never observable get +inf (disabled), an identically-zero
// observable signal is rejected as degenerate
inline DetectionConfig calibrate_thresholds(const RobotModel& model,
                                            const LimbGrouping& grouping, Estimator& est,
                                            const std::vector<SimLog>& calibration,
                                            const DetectionConfig& base = {}) {
  if (calibration.empty()) throw std::invalid_argument("calibrate: empty calibration set");
  const int n = model.n_v();
  VecX max_mean = VecX::Constant(n, -1.0), max_sigma = VecX::Constant(n, -1.0);

  for (const auto& log : calibration) {
    est.reset();
    detail::SettledMasker masker(model, grouping, base.mask_settle_s, log.dt);
    OnePoleLPF lpf_m(n, base.lpf_hz, 1.0 / log.dt), lpf_s(n, base.lpf_hz, 1.0 / log.dt);
    for (const auto& tk : log.ticks) {
      const EstimatorOutput out = est.step(tk);
      const VecX fm = lpf_m.step(out.tau_e_hat);
      const VecX fs = lpf_s.step(out.sigma_u);
      const std::vector<bool> m = masker.mask(tk, n);
      for (int j = 0; j < n; ++j)
        if (!m[j]) {
          max_mean[j] = std::max(max_mean[j], std::abs(fm[j]));
          max_sigma[j] = std::max(max_sigma[j], std::abs(fs[j]));
        }
    }
  }

  DetectionConfig cfg = base;
  cfg.thr_mean.resize(n);
  cfg.thr_sigma.resize(n);
  const double inf = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    if (max_mean[j] < 0.0) {  // never unmasked: not a detection channel
      cfg.thr_mean[j] = inf;
      cfg.thr_sigma[j] = inf;
      continue;
    }
    if (max_mean[j] == 0.0)
      throw std::invalid_argument("calibrate: identically-zero signal on joint " +
                                  std::to_string(j));
    cfg.thr_mean[j] = 1.1 * max_mean[j];
    cfg.thr_sigma[j] = max_sigma[j] > 0.0 ? 1.1 * max_sigma[j] : inf;
  }
  return cfg;
}

// streaming detection over one log; events fire once per exceedance episode
inline std::vector<DetectionEvent> detect(const RobotModel& model,
                                          const LimbGrouping& grouping, Estimator& est,
                                          const SimLog& log, const DetectionConfig& cfg) {
  const int n = model.n_v();
  if (cfg.thr_mean.size() != n || cfg.thr_sigma.size() != n)
    throw std::invalid_argument("detect: thresholds not calibrated for this model");
  const int need = std::max<int>(1, static_cast<int>(std::ceil(cfg.horizon_s / log.dt)));
  detail::SettledMasker masker(model, grouping, cfg.mask_settle_s, log.dt);

  est.reset();
  OnePoleLPF lpf_m(n, cfg.lpf_hz, 1.0 / log.dt), lpf_s(n, cfg.lpf_hz, 1.0 / log.dt);
  std::vector<int> run_m(n, 0), run_s(n, 0);
  std::vector<bool> latched_m(n, false), latched_s(n, false);
  std::vector<DetectionEvent> events;

  for (const auto& tk : log.ticks) {
    const EstimatorOutput out = est.step(tk);
    const VecX fm = lpf_m.step(out.tau_e_hat);
    const VecX fs = lpf_s.step(out.sigma_u);
    const std::vector<bool> m = masker.mask(tk, n);
    for (int j = 0; j < n; ++j) {
      if (m[j]) {
        run_m[j] = run_s[j] = 0;
        latched_m[j] = latched_s[j] = false;
        continue;
      }
      const bool over_m = std::abs(fm[j]) > cfg.thr_mean[j];
      const bool over_s = fs[j] > cfg.thr_sigma[j];
      run_m[j] = over_m ? run_m[j] + 1 : 0;
      run_s[j] = over_s ? run_s[j] + 1 : 0;
      if (!over_m) latched_m[j] = false;
      if (!over_s) latched_s[j] = false;

      const bool use_m = cfg.logic != DetectLogic::SigmaOnly;
      const bool use_s = cfg.logic != DetectLogic::MeanOnly;
      if (use_m && run_m[j] >= need && !latched_m[j]) {
        events.push_back({tk.t, j, false, fm[j], -1});
        latched_m[j] = true;
      }
      if (use_s && run_s[j] >= need && !latched_s[j]) {
        events.push_back({tk.t, j, true, fs[j], -1});
        latched_s[j] = true;
      }
    }
  }
  return events;
}

// --------------------------------------------------------- ground truth match

struct DetectionReport {
  struct Window {
    double t0 = 0.0, t1 = 0.0;
    int joint = -1;
    bool detected = false;
    double delay_ms = 0.0;  // first matched event relative to t0
  };
  std::vector<Window> windows;
  int false_positives = 0;
  int detected = 0;
  double mean_delay_ms = 0.0;
};

// matches events to the log's collision windows (with slack for filter lag)
inline DetectionReport evaluate_detection(const SimLog& log,
                                          std::vector<DetectionEvent>& events,
                                          double slack = 0.1) {
  DetectionReport rep;
  for (const auto& c : log.collisions) rep.windows.push_back({c.t0, c.t1, c.joint});
  for (auto& e : events) {
    for (size_t w = 0; w < rep.windows.size(); ++w) {
      auto& win = rep.windows[w];
      if (e.t >= win.t0 && e.t <= win.t1 + slack) {
        e.window = static_cast<int>(w);
        const double delay = 1e3 * (e.t - win.t0);
        if (!win.detected || delay < win.delay_ms) win.delay_ms = delay;
        win.detected = true;
        break;
      }
    }
    if (e.window < 0) ++rep.false_positives;
  }
  double sum = 0.0;
  for (const auto& w : rep.windows)
    if (w.detected) {
      ++rep.detected;
      sum += w.delay_ms;
    }
  rep.mean_delay_ms = rep.detected > 0 ? sum / rep.detected : 0.0;
  return rep;
}

// ------------------------------------------------------ wrench identification

struct WrenchEstimate {
  Vec6 wrench = Vec6::Zero();  // [f(3); n(3)] world frame at the query point
  double residual = 0.0;
  int rank = 0;
  bool degraded = false;  // rank < 6: minimum-norm solution
};

// Least squares J_c^T F = tau_e over the support-path rows (joints from the
// contact link to the root, including virtual rows). include_virtual = false
// restricts to the actuated rows, which decouples the solve from wrenches
// acting directly on the base.
inline WrenchEstimate identify_wrench(const RobotModel& model, const VecX& q,
                                      const std::string& link_name, const Vec3& local_point,
                                      const VecX& tau_e_hat, bool include_virtual = true) {
  const Kinematics kin = Kinematics::compute(model, q);
  const int link = model.link_index(link_name);
  const MatX J = contact_jacobian_matrix(model, kin, link, local_point);

  std::vector<int> path;
  for (int j = model.links[link].parent_joint; j >= 0; j = model.parent_joint_of(j))
    if (include_virtual || j >= model.n_virtual) path.push_back(j);
  if (path.empty()) throw std::invalid_argument("identify_wrench: no usable support path");

  MatX A(path.size(), 6);
  VecX b(path.size());
  for (size_t i = 0; i < path.size(); ++i) {
    A.row(i) = J.col(path[i]).transpose();
    b[i] = tau_e_hat[path[i]];
  }
  Eigen::CompleteOrthogonalDecomposition<MatX> cod(A);
  WrenchEstimate out;
  out.rank = static_cast<int>(cod.rank());
  out.degraded = out.rank < 6;
  out.wrench = cod.solve(b);
  out.residual = (A * out.wrench - b).norm();
  return out;
}

// total base wrench (virtual rows) minus the expected-contact wrenches
// transported to the base origin
struct ExpectedContactFrame {
  std::string link;
  Vec3 local_point = Vec3::Zero();
};

inline WrenchEstimate unexpected_base_wrench(const RobotModel& model, const VecX& q,
                                             const VecX& tau_e_hat,
                                             const std::vector<ExpectedContactFrame>& expected) {
  if (model.n_virtual == 0)
    throw std::invalid_argument("unexpected_base_wrench: fixed-base model");
  const Kinematics kin = Kinematics::compute(model, q);
  const int base_link = model.joints[model.n_virtual - 1].child_link;
  const MatX Jb = contact_jacobian_matrix(model, kin, base_link, Vec3::Zero());

  MatX A(model.n_virtual, 6);
  VecX b(model.n_virtual);
  for (int j = 0; j < model.n_virtual; ++j) {
    A.row(j) = Jb.col(j).transpose();
    b[j] = tau_e_hat[j];
  }
  Eigen::CompleteOrthogonalDecomposition<MatX> cod(A);
  WrenchEstimate out;
  out.rank = static_cast<int>(cod.rank());
  out.degraded = out.rank < 6;
  out.wrench = cod.solve(b);
  out.residual = (A * out.wrench - b).norm();

  const Vec3 base_origin = kin.p_world[model.n_virtual - 1];
  for (const auto& ec : expected) {
    const WrenchEstimate w =
        identify_wrench(model, q, ec.link, ec.local_point, tau_e_hat, false);
    out.degraded = out.degraded || w.degraded;
    const int link = model.link_index(ec.link);
    const Vec3 p = kin.point_world(model.links[link].parent_joint, ec.local_point);
    out.wrench.head<3>() -= w.wrench.head<3>();
    out.wrench.tail<3>() -=
        w.wrench.tail<3>() + (p - base_origin).cross(Vec3(w.wrench.head<3>()));
  }
  return out;
}

}  // namespace mobnet
