#pragma once

// Scenario orchestration on top of the simulator: scripted excitation
// (static hold, random sinusoids, quasi-static stepping gait), PD + gravity
// compensation control, scripted disturbances, and deterministic SimLog
// production.

#include <algorithm>
#include <cmath>

#include "mobnet/simulator.hpp"

namespace mobnet {

enum class ExcitationKind { StaticHold, Sinusoid, Gait };

struct GaitConfig {
  double period = 2.0;      // full two-step cycle, s
  double flex = 0.35;       // swing flexion amplitude, rad
  double swing_start = 0.1; // swing window within each half cycle, fraction
  double swing_end = 0.4;
  double contact_pad = 0.04;  // expected-contact margin (cycle fraction) at
                              // each end of the swing window: actual liftoff
                              // lags the command and touchdown precedes it
};

struct JointDisturbance {
  std::string joint;
  double torque = 0.0;
  double t0 = 0.0, duration = 0.1;
  bool expected = false;
};

struct WrenchDisturbance {
  std::string link;
  Vec3 point = Vec3::Zero();
  Vec6 wrench = Vec6::Zero();  // [f; n], world frame
  double t0 = 0.0, duration = 0.1;
  bool expected = false;
};

struct Scenario {
  double duration = 5.0;
  double control_dt = 5e-4;  // 2 kHz
  double log_dt = 1e-3;      // 1 kHz
  ExcitationKind excitation = ExcitationKind::StaticHold;
  double sine_amp = 0.3;     // rad, clipped to joint limits
  double sine_f_min = 0.2, sine_f_max = 1.2;  // Hz
  GaitConfig gait;
  double kp = 300.0, kd = 15.0;
  VecX q0;  // initial actuated pose; empty = excitation default
  std::vector<JointDisturbance> joint_disturbances;
  std::vector<WrenchDisturbance> wrench_disturbances;
  RteConfig rte;
};

namespace detail {

// leg index li swings during [swing_start, swing_end] of its half cycle
inline bool gait_in_swing(const GaitConfig& g, int leg, double t, double pad = 0.0) {
  const double phase = std::fmod(t, g.period) / g.period;  // [0, 1)
  const double lo = 0.5 * leg + 0.5 * g.swing_start + pad;
  const double hi = 0.5 * leg + 0.5 * g.swing_end - pad;
  return phase >= lo && phase < hi;
}

inline double gait_bump(const GaitConfig& g, int leg, double t) {
  if (!gait_in_swing(g, leg, t)) return 0.0;
  const double phase = std::fmod(t, g.period) / g.period;
  const double u = (phase - 0.5 * leg - 0.5 * g.swing_start) /
                   (0.5 * (g.swing_end - g.swing_start));
  const double s = std::sin(M_PI * u);
  return s * s;
}

}  // namespace detail

// Desired-trajectory generator for a scenario; phases/frequencies for the
// sinusoid mode are drawn once from the provided rng.
class Excitation {
 public:
  Excitation(const RobotModel& m, const Scenario& sc, std::mt19937_64& rng)
      : model_(&m), sc_(&sc), grouping_(derive_groups(m)) {
    const int na = m.n_actuated();
    q0_ = VecX::Zero(na);
    if (sc.q0.size() == na) {
      q0_ = sc.q0;
    } else if (sc.excitation == ExcitationKind::Gait ||
               (m.base_mode != BaseMode::Fixed && !m.contact_links.empty())) {
      // crouched stance: flexed hips/knees/ankles so swing flexion has room
      for (const auto& g : grouping_.groups) {
        if (!g.load_bearing || g.joints.size() < 3) continue;
        q0_[g.joints[0] - m.n_virtual] = -0.2;
        q0_[g.joints[1] - m.n_virtual] = 0.4;
        q0_[g.joints[2] - m.n_virtual] = -0.2;
      }
    }
    if (sc.excitation == ExcitationKind::Sinusoid) {
      amp_.resize(na);
      freq_.resize(na);
      phase_.resize(na);
      std::uniform_real_distribution<double> Uf(sc.sine_f_min, sc.sine_f_max);
      std::uniform_real_distribution<double> Up(0.0, 2.0 * M_PI);
      for (int j = 0; j < na; ++j) {
        const auto& lim = m.joints[m.n_virtual + j].limits;
        const double room =
            std::min(q0_[j] - lim.lower, lim.upper - q0_[j]);
        amp_[j] = std::min(sc.sine_amp, 0.9 * std::max(room, 0.0));
        freq_[j] = Uf(rng);
        phase_[j] = Up(rng);
      }
    }
    // legs with load-bearing groups used by the gait, in group order
    for (const auto& g : grouping_.groups)
      if (g.load_bearing && g.joints.size() >= 3) legs_.push_back(&g);
  }

  const VecX& initial_pose() const { return q0_; }
  int n_legs() const { return static_cast<int>(legs_.size()); }

  VecX desired(double t) const {
    const int na = model_->n_actuated();
    VecX q = q0_;
    switch (sc_->excitation) {
      case ExcitationKind::StaticHold:
        break;
      case ExcitationKind::Sinusoid:
        for (int j = 0; j < na; ++j)
          q[j] += amp_[j] * std::sin(2.0 * M_PI * freq_[j] * t + phase_[j]);
        break;
      case ExcitationKind::Gait:
        for (size_t li = 0; li < legs_.size(); ++li) {
          const double s = detail::gait_bump(sc_->gait, static_cast<int>(li % 2), t);
          const double A = sc_->gait.flex;
          q[legs_[li]->joints[0] - model_->n_virtual] += -A * s;
          q[legs_[li]->joints[1] - model_->n_virtual] += 2.0 * A * s;
          q[legs_[li]->joints[2] - model_->n_virtual] += -A * s;
        }
        break;
    }
    return q;
  }

  VecX desired_velocity(double t) const {
    const double h = 1e-5;
    return (desired(t + h) - desired(t - h)) / (2.0 * h);
  }

  // per contact link: is ground contact anticipated at time t
  std::vector<bool> expected_contact(double t) const {
    std::vector<bool> out(model_->contact_links.size(), true);
    if (sc_->excitation != ExcitationKind::Gait) return out;
    for (size_t li = 0; li < legs_.size() && li < out.size(); ++li)
      out[li] = !detail::gait_in_swing(sc_->gait, static_cast<int>(li % 2), t,
                                       sc_->gait.contact_pad);
    return out;
  }

 private:
  const RobotModel* model_;
  const Scenario* sc_;
  LimbGrouping grouping_;
  VecX q0_;
  std::vector<double> amp_, freq_, phase_;
  std::vector<const LimbGroup*> legs_;
};

namespace detail {

// full generalized initial pose: actuated = q0, base dropped so the lowest
// contact point rests at its static spring penetration
inline VecX initial_state(const RobotModel& m, const ContactConfig& cc, const VecX& q0_act) {
  VecX q = VecX::Zero(m.n_v());
  for (int j = 0; j < m.n_actuated(); ++j) q[m.n_virtual + j] = q0_act[j];
  if (m.n_virtual == 0 || m.contact_links.empty()) return q;
  const auto points = default_contact_points(m, cc);
  Kinematics kin = Kinematics::compute(m, q);
  double zmin = 1e9;
  int n_pts = 0;
  for (size_t li = 0; li < m.contact_links.size(); ++li) {
    const int ji = m.links[m.contact_links[li]].parent_joint;
    for (const Vec3& pt : points[li]) {
      zmin = std::min(zmin, kin.point_world(ji, pt).z());
      ++n_pts;
    }
  }
  double mass = 0.0;
  for (const auto& l : m.links) mass += l.mass;
  const double penetration = mass * m.gravity / (cc.k * n_pts);
  const int vz = m.base_mode == BaseMode::FloatingPlanar ? 1 : 2;
  q[vz] = -zmin - penetration;
  return q;
}

}  // namespace detail

inline SimLog run_scenario(const RobotModel& model, const Scenario& sc,
                           const UncertaintyConfig& ucfg, const ContactConfig& ccfg,
                           uint64_t seed) {
  for (const auto& d : sc.joint_disturbances) model.joint_index(d.joint);  // validate
  for (const auto& d : sc.wrench_disturbances) model.link_index(d.link);

  Simulator sim(model, ucfg, ccfg, seed);
  Excitation exc(model, sc, sim.rng());
  sim.set_state(detail::initial_state(model, ccfg, exc.initial_pose()), VecX::Zero(model.n_v()));
  RteOverlay rte(sc.rte, model.n_actuated(), sim.rng());

  const int n = model.n_v();
  const int steps_per_tick = std::max(1, static_cast<int>(std::lround(sc.log_dt / sc.control_dt)));
  const int n_ticks = static_cast<int>(std::lround(sc.duration / sc.log_dt));
  const RobotModel nominal = sim.nominal_model();

  SimLog log;
  log.dt = sc.log_dt;
  log.seed = seed;
  log.model_name = model.name;
  for (const auto& d : sc.joint_disturbances)
    if (!d.expected)
      log.collisions.push_back(
          {d.t0, d.t0 + d.duration, model.joint_index(d.joint), "", d.torque});
  for (const auto& d : sc.wrench_disturbances)
    if (!d.expected)
      log.collisions.push_back({d.t0, d.t0 + d.duration, -1, d.link, d.wrench.head<3>().norm()});

  log.ticks.reserve(n_ticks);
  for (int k = 0; k < n_ticks; ++k) {
    for (int s = 0; s < steps_per_tick; ++s) {
      const double t = sim.t();
      const VecX q_des = exc.desired(t);
      const VecX qd_des = exc.desired_velocity(t);
      VecX tau_d = VecX::Zero(n);
      const VecX grav = gravity_vector(nominal, sim.q());
      const VecX& rte_tau = rte.sample(t, sim.rng());
      for (int j = 0; j < model.n_actuated(); ++j) {
        const int gj = model.n_virtual + j;
        double tau = grav[gj] + sc.kp * (q_des[j] - sim.q()[gj]) +
                     sc.kd * (qd_des[j] - sim.qd()[gj]) + rte_tau[j];
        const double lim = model.joints[gj].limits.effort;
        tau_d[gj] = std::clamp(tau, -lim, lim);
      }

      VecX tau_e_joint = VecX::Zero(n);
      bool in_collision = false;
      for (const auto& d : sc.joint_disturbances) {
        if (t >= d.t0 && t < d.t0 + d.duration) {
          tau_e_joint[model.joint_index(d.joint)] += d.torque;
          if (!d.expected) in_collision = true;
        }
      }
      std::vector<ExternalWrench> scripted;
      for (const auto& d : sc.wrench_disturbances) {
        if (t >= d.t0 && t < d.t0 + d.duration) {
          ExternalWrench w;
          w.link = model.link_index(d.link);
          w.local_point = d.point;
          w.wrench = d.wrench;
          scripted.push_back(w);
          if (!d.expected) in_collision = true;
        }
      }

      sim.step(tau_d, scripted, tau_e_joint, sc.control_dt);
      if (s == 0) {
        SimTick tk = sim.make_tick();
        tk.expected_contact = exc.expected_contact(t);
        tk.collision = in_collision;
        log.ticks.push_back(std::move(tk));
      }
    }
  }
  return log;
}

}  // namespace mobnet
