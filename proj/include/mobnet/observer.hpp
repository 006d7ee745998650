#pragma once

// Discretized generalized-momentum observer. The residual r tracks the
// first-order low-pass filtered sum of external and uncertainty torque:
//   r = K0 { p(t) - p(0) - integral(tau_v + beta + r) dt },  p = M qd.

#include <stdexcept>

#include "mobnet/dynamics.hpp"
#include "mobnet/model.hpp"

namespace mobnet {

struct MomentumObserver {
  VecX K0;   // per-joint gains, 1/s
  double dt = 1e-3;
  VecX p0;   // initial momentum
  VecX acc;  // integral accumulator
  VecX r;    // current residual

  static MomentumObserver reset(const RobotModel& nominal, const VecX& q, const VecX& qd,
                                const VecX& K0, double dt) {
    if ((K0.array() <= 0.0).any()) throw std::invalid_argument("observer: K0 must be > 0");
    if (dt <= 0.0) throw std::invalid_argument("observer: dt must be > 0");
    MomentumObserver o;
    o.K0 = K0;
    o.dt = dt;
    o.p0 = mass_matrix(nominal, q) * qd;
    o.acc = VecX::Zero(nominal.n_v());
    o.r = VecX::Zero(nominal.n_v());
    return o;
  }

  static MomentumObserver reset(const RobotModel& nominal, const VecX& q, const VecX& qd,
                                double k0 = 100.0, double dt = 1e-3) {
    return reset(nominal, q, qd, VecX::Constant(nominal.n_v(), k0), dt);
  }

  // One tick on measured signals; tau_v must carry zeros in the virtual rows.
  const VecX& update(const RobotModel& nominal, const VecX& q_m, const VecX& qd_m,
                     const VecX& tau_v) {
    // rectangular rule: the accumulator holds the integral up to the previous
    // tick when r is read, then absorbs the current sample
    const VecX p = mass_matrix(nominal, q_m) * qd_m;
    r = K0.cwiseProduct(p - p0 - acc);
    acc += (tau_v + beta_term(nominal, q_m, qd_m) + r) * dt;
    return r;
  }
};

// Offline first-order low-pass filter with cutoff k0, discretized with the
// same rectangular rule as the observer recursion (pole 1 - k0*dt, one-sample
// input latency), so that r = LPF(tau_e) + LPF(tau_u) holds up to quadrature
// error. Filter starts at rest.
inline MatX lowpass_k0(const MatX& rows_are_ticks, double k0, double dt) {
  MatX out = MatX::Zero(rows_are_ticks.rows(), rows_are_ticks.cols());
  const double a = 1.0 - k0 * dt;
  for (Eigen::Index k = 1; k < out.rows(); ++k)
    out.row(k) = a * out.row(k - 1) + k0 * dt * rows_are_ticks.row(k - 1);
  return out;
}

}  // namespace mobnet
