#pragma once

// External-torque estimators sharing one streaming interface:
//   MOB          residual only (tau_u_hat = 0)
//   MOB-fric     residual minus a fitted Coulomb/viscous/stiction model
//   MOB-fric-BPF MOB-fric passed through a [2, 15] Hz band-pass
//   MOB-Net      residual minus per-group GRU uncertainty estimates
//   FTS-e2e      direct GRU regression of the external torque (no observer)
// Every estimator maintains the exact identity tau_e_hat = r - tau_u_hat.

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "mobnet/dataset.hpp"
#include "mobnet/filters.hpp"
#include "mobnet/gru.hpp"
#include "mobnet/observer.hpp"

namespace mobnet {

struct EstimatorOutput {
  VecX tau_e_hat, tau_u_hat, sigma_u, r;
  double latency = 0.0;  // wall seconds for this tick
};

class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual std::string name() const = 0;
  virtual void reset() = 0;
  virtual EstimatorOutput step(const SimTick& tick) = 0;
};

// ---------------------------------------------------------------- friction

struct FrictionFit {
  struct Joint {
    double coulomb = 0.0, viscous = 0.0, stiction = 0.0;
    double residual_rms = 0.0;
    bool degenerate = false;
  };
  std::vector<Joint> joints;  // indexed by generalized coordinate
  double eps_s = 0.01;        // breakaway velocity threshold, rad/s

  // model prediction sgn(qd) a + b qd + sgn(qd) c 1{|qd| < eps}
  VecX predict(const VecX& qd) const {
    VecX y = VecX::Zero(qd.size());
    for (int j = 0; j < qd.size() && j < static_cast<int>(joints.size()); ++j) {
      const double s = qd[j] > 0.0 ? 1.0 : (qd[j] < 0.0 ? -1.0 : 0.0);
      y[j] = s * joints[j].coulomb + joints[j].viscous * qd[j] +
             s * (std::abs(qd[j]) < eps_s ? joints[j].stiction : 0.0);
    }
    return y;
  }
};

// least squares for one joint over sample vectors qd, target y
inline FrictionFit::Joint fit_friction_joint(const VecX& qd, const VecX& y, double eps_s) {
  const Eigen::Index n = qd.size();
  MatX A(n, 3);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double s = qd[k] > 0.0 ? 1.0 : (qd[k] < 0.0 ? -1.0 : 0.0);
    A(k, 0) = s;
    A(k, 1) = qd[k];
    A(k, 2) = s * (std::abs(qd[k]) < eps_s ? 1.0 : 0.0);
  }
  FrictionFit::Joint out;
  Eigen::CompleteOrthogonalDecomposition<MatX> cod(A);
  if (cod.rank() < 3) {
    out.degenerate = true;
    if (cod.rank() == 0) {  // e.g. qd identically zero: fall back to the zero model
      out.residual_rms = n > 0 ? std::sqrt(y.squaredNorm() / n) : 0.0;
      return out;
    }
  }
  const VecX c = cod.solve(y);  // minimum-norm solution when rank-deficient
  out.coulomb = c[0];
  out.viscous = c[1];
  out.stiction = c[2];
  out.residual_rms = n > 0 ? std::sqrt((A * c - y).squaredNorm() / n) : 0.0;
  return out;
}

// fit per actuated joint against the group uncertainty targets of the logs
inline FrictionFit fit_friction(const RobotModel& model, const LimbGrouping& grouping,
                                const std::vector<SimLog>& logs, double eps_s = 0.01,
                                double k0 = 100.0) {
  if (logs.empty()) throw std::invalid_argument("fit_friction: no logs");
  const RobotModel nominal = perturb_inertial(model, model.nominal_inertial_scale);
  size_t total = 0;
  for (const auto& log : logs) total += log.ticks.size();

  MatX QD(total, model.n_v()), Y(total, model.n_v());
  size_t row = 0;
  for (const auto& log : logs) {
    const MatX R = log_residuals(nominal, log, k0);
    for (size_t k = 0; k < log.ticks.size(); ++k, ++row) {
      QD.row(row) = log.ticks[k].qd_m;
      Y.row(row) = R.row(k);
    }
    row -= log.ticks.size();
    for (const auto& g : grouping.groups)
      if (g.target_mode == TargetMode::ResidualMinusExternal)
        for (int j : g.joints)
          for (size_t k = 0; k < log.ticks.size(); ++k)
            Y(row + k, j) -= log.ticks[k].tau_e[j];
    row += log.ticks.size();
  }

  FrictionFit fit;
  fit.eps_s = eps_s;
  fit.joints.resize(model.n_v());
  for (int j = model.n_virtual; j < model.n_v(); ++j)
    fit.joints[j] = fit_friction_joint(QD.col(j), Y.col(j), eps_s);
  return fit;
}

// ---------------------------------------------------------------- MOB family

namespace detail {

class MobBase : public Estimator {
 public:
  MobBase(const RobotModel& nominal, double k0, double dt)
      : nominal_(nominal), k0_(k0), dt_(dt) {}

  void reset() override {
    started_ = false;
    reset_extra();
  }

  EstimatorOutput step(const SimTick& tk) override {
    const auto t0 = std::chrono::steady_clock::now();
    if (!started_) {
      obs_ = MomentumObserver::reset(nominal_, tk.q_m, tk.qd_m, k0_, dt_);
      started_ = true;
    }
    EstimatorOutput out;
    out.r = obs_.update(nominal_, tk.q_m, tk.qd_m, tk.tau_d);
    out.sigma_u = VecX::Constant(nominal_.n_v(), 1e-6);
    uncertainty(tk, out);
    out.tau_e_hat = out.r - out.tau_u_hat;
    out.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

 protected:
  // fills tau_u_hat (and optionally sigma_u / tau_e_hat post-processing hooks)
  virtual void uncertainty(const SimTick& tk, EstimatorOutput& out) = 0;
  virtual void reset_extra() {}

  RobotModel nominal_;
  double k0_, dt_;
  MomentumObserver obs_;
  bool started_ = false;
};

}  // namespace detail

class MobEstimator : public detail::MobBase {
 public:
  using MobBase::MobBase;
  std::string name() const override { return "MOB"; }

 protected:
  void uncertainty(const SimTick&, EstimatorOutput& out) override {
    out.tau_u_hat = VecX::Zero(out.r.size());
  }
};

class MobFricEstimator : public detail::MobBase {
 public:
  MobFricEstimator(const RobotModel& nominal, double k0, double dt, FrictionFit fit)
      : MobBase(nominal, k0, dt), fit_(std::move(fit)) {}
  std::string name() const override { return "MOB-fric"; }

 protected:
  void uncertainty(const SimTick& tk, EstimatorOutput& out) override {
    out.tau_u_hat = fit_.predict(tk.qd_m);
  }
  FrictionFit fit_;
};

class MobFricBpfEstimator : public detail::MobBase {
 public:
  MobFricBpfEstimator(const RobotModel& nominal, double k0, double dt, FrictionFit fit,
                      double f_lo = 2.0, double f_hi = 15.0)
      : MobBase(nominal, k0, dt), fit_(std::move(fit)), f_lo_(f_lo), f_hi_(f_hi),
        bpf_(nominal.n_v(), f_lo, f_hi, 1.0 / dt) {}
  std::string name() const override { return "MOB-fric-BPF"; }

 protected:
  void uncertainty(const SimTick& tk, EstimatorOutput& out) override {
    // band-passed estimate; tau_u_hat absorbs the rejected band so the
    // identity tau_e_hat = r - tau_u_hat stays exact
    const VecX filtered = bpf_.step(out.r - fit_.predict(tk.qd_m));
    out.tau_u_hat = out.r - filtered;
  }
  void reset_extra() override { bpf_.reset(); }

  FrictionFit fit_;
  double f_lo_, f_hi_;
  BandPass bpf_;
};

// --------------------------------------------------------------- GRU-backed

struct GroupNet {
  std::string group_id;
  Network net;
};

class MobNetEstimator : public detail::MobBase {
 public:
  MobNetEstimator(const RobotModel& model, const LimbGrouping& grouping, double k0,
                  double dt, std::vector<GroupNet> nets, std::string name = "MOB-Net")
      : MobBase(perturb_inertial(model, model.nominal_inertial_scale), k0, dt),
        model_(model), name_(std::move(name)) {
    for (auto& gn : nets) {
      const LimbGroup* g = grouping.find(gn.group_id);
      if (!g) throw std::invalid_argument("estimator: unknown group " + gn.group_id);
      const int want = detail::group_feature_width(model, *g);
      if (gn.net.cfg.d_in != want || gn.net.cfg.n_g != static_cast<int>(g->joints.size()))
        throw std::invalid_argument("estimator: checkpoint/grouping mismatch for " +
                                    gn.group_id);
      NetState st(gn.net);
      slots_.push_back({*g, std::move(gn.net), std::move(st)});
    }
  }
  std::string name() const override { return name_; }

 protected:
  void uncertainty(const SimTick& tk, EstimatorOutput& out) override {
    out.tau_u_hat = VecX::Zero(out.r.size());
    VecX mu, sigma;
    for (auto& s : slots_) {
      s.state.step(s.net, group_feature_vec(model_, s.group, tk), mu, sigma);
      for (size_t i = 0; i < s.group.joints.size(); ++i) {
        out.tau_u_hat[s.group.joints[i]] = mu[i];
        out.sigma_u[s.group.joints[i]] = sigma[i];
      }
    }
  }
  void reset_extra() override {
    for (auto& s : slots_) s.state = NetState(s.net);
  }

 private:
  struct Slot {
    LimbGroup group;
    Network net;
    NetState state;
  };
  RobotModel model_;
  std::string name_;
  std::vector<Slot> slots_;
};

// direct regression of tau_e; rows without a network stay zero
class FtsE2eEstimator : public Estimator {
 public:
  FtsE2eEstimator(const RobotModel& model, const LimbGrouping& grouping,
                  std::vector<GroupNet> nets)
      : model_(model) {
    for (auto& gn : nets) {
      const LimbGroup* g = grouping.find(gn.group_id);
      if (!g) throw std::invalid_argument("estimator: unknown group " + gn.group_id);
      if (gn.net.cfg.d_in != detail::group_feature_width(model, *g) ||
          gn.net.cfg.n_g != static_cast<int>(g->joints.size()))
        throw std::invalid_argument("estimator: checkpoint/grouping mismatch for " +
                                    gn.group_id);
      NetState st(gn.net);
      slots_.push_back({*g, std::move(gn.net), std::move(st)});
    }
  }
  std::string name() const override { return "FTS-e2e"; }

  void reset() override {
    for (auto& s : slots_) s.state = NetState(s.net);
  }

  EstimatorOutput step(const SimTick& tk) override {
    const auto t0 = std::chrono::steady_clock::now();
    EstimatorOutput out;
    const int n = model_.n_v();
    out.r = VecX::Zero(n);
    out.tau_e_hat = VecX::Zero(n);
    out.sigma_u = VecX::Constant(n, 1e-6);
    VecX mu, sigma;
    for (auto& s : slots_) {
      s.state.step(s.net, group_feature_vec(model_, s.group, tk), mu, sigma);
      for (size_t i = 0; i < s.group.joints.size(); ++i) {
        out.tau_e_hat[s.group.joints[i]] = mu[i];
        out.sigma_u[s.group.joints[i]] = sigma[i];
      }
    }
    out.tau_u_hat = -out.tau_e_hat;  // keeps tau_e_hat = r - tau_u_hat with r = 0
    out.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

 private:
  struct Slot {
    LimbGroup group;
    Network net;
    NetState state;
  };
  RobotModel model_;
  std::vector<Slot> slots_;
};

// convenience: run an estimator over a whole log (reset first)
struct EstimatorRun {
  MatX tau_e_hat, tau_u_hat, sigma_u, r;  // ticks x n_v
  std::vector<double> latency;
};

inline EstimatorRun run_estimator(Estimator& est, const SimLog& log) {
  est.reset();
  EstimatorRun run;
  const int T = static_cast<int>(log.ticks.size());
  const int n = log.n_v();
  run.tau_e_hat.resize(T, n);
  run.tau_u_hat.resize(T, n);
  run.sigma_u.resize(T, n);
  run.r.resize(T, n);
  run.latency.resize(T);
  for (int k = 0; k < T; ++k) {
    EstimatorOutput out = est.step(log.ticks[k]);
    run.tau_e_hat.row(k) = out.tau_e_hat;
    run.tau_u_hat.row(k) = out.tau_u_hat;
    run.sigma_u.row(k) = out.sigma_u;
    run.r.row(k) = out.r;
    run.latency[k] = out.latency;
  }
  return run;
}

// RMSE of the estimate against the low-pass-filtered true external torque
// (the observer law only reaches the filtered signal), per joint. An optional
// evaluation low-pass (applied to both streams) scores the tracking of the
// slow torque content rather than the white sensor-noise floor.
inline VecX rmse_vs_filtered_truth(const EstimatorRun& run, const SimLog& log,
                                   double k0 = 100.0, double eval_lpf_hz = 0.0) {
  MatX TE(log.ticks.size(), log.n_v());
  for (size_t k = 0; k < log.ticks.size(); ++k) TE.row(k) = log.ticks[k].tau_e;
  MatX ref = lowpass_k0(TE, k0, log.dt);
  MatX est = run.tau_e_hat;
  if (eval_lpf_hz > 0.0) {
    OnePoleLPF la(log.n_v(), eval_lpf_hz, 1.0 / log.dt), lb(la);
    for (Eigen::Index k = 0; k < est.rows(); ++k) {
      est.row(k) = la.step(est.row(k).transpose());
      ref.row(k) = lb.step(ref.row(k).transpose());
    }
  }
  return ((est - ref).cwiseAbs2().colwise().mean()).cwiseSqrt().transpose();
}

// r-RMSE: percentage of RMSE relative to the per-joint max |tau_e|
inline VecX relative_rmse(const VecX& rmse, const SimLog& log) {
  VecX peak = VecX::Zero(log.n_v());
  for (const auto& tk : log.ticks) peak = peak.cwiseMax(tk.tau_e.cwiseAbs());
  VecX out(rmse.size());
  for (int j = 0; j < rmse.size(); ++j)
    out[j] = peak[j] > 0.0 ? 100.0 * rmse[j] / peak[j] : 0.0;
  return out;
}

}  // namespace mobnet
