#pragma once

// Ground-truth trajectory generation with controllable uncertainty injection:
// Stribeck + load-dependent friction with a torque-loss deadzone, inertial
// model error, Gaussian sensor noise, spring-damper ground contact, random
// torque excitation, and per-tick logging at half the control rate.

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobnet/dynamics.hpp"
#include "mobnet/model.hpp"

namespace mobnet {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class UncertaintyLevel { Ideal, SensorNoise, AllUncertainty };

struct NoiseVariances {
  double q = 1e-7;
  double qd = 2e-3;
  double base_lin_acc = 1e-4;
  double base_ang_vel = 5e-3;
};

struct FrictionParams {
  double f_c = 5.0;     // Coulomb
  double f_s = 2.0;     // static (Stribeck peak)
  double v_s = 1.51;    // Stribeck velocity
  double k_vf = 3.0;    // viscous
  double k_lf = 0.002;  // load-dependent
  double tau_loss = 8.0;  // deadzone threshold
};

struct UncertaintyConfig {
  UncertaintyLevel level = UncertaintyLevel::Ideal;
  NoiseVariances noise;
  FrictionParams friction_leg{5.0, 2.0, 1.51, 4.0, 0.002, 10.0};
  FrictionParams friction_upper{5.0, 2.0, 1.51, 3.0, 0.002, 8.0};
  std::vector<FrictionParams> friction_per_joint;  // optional n_actuated override

  bool has_noise() const { return level != UncertaintyLevel::Ideal; }
  bool has_friction() const { return level == UncertaintyLevel::AllUncertainty; }
  bool has_model_error() const { return level == UncertaintyLevel::AllUncertainty; }
};

struct RteConfig {
  bool enabled = false;
  double t_on_min = 0.1, t_on_max = 0.5;  // U(0.1, 0.5) s, both phases
  VecX tau_bound;                         // per actuated joint, symmetric
  std::vector<bool> excluded;             // per actuated joint
};

struct ContactConfig {
  double k = 5e4;    // normal stiffness, N/m
  double c = 5e2;    // normal damping, N s/m
  double c_t = 2e2;  // tangential viscous, N s/m
  // contact points per contact link, link-local; empty = model defaults
  std::vector<std::vector<Vec3>> points;
};

// sgn(0) = 0 throughout
inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Stribeck + viscous + load-dependent friction torque.
inline double friction_torque(double qd, double tau_m, const FrictionParams& p) {
  const double s = sgn(qd);
  return -s * (p.f_c + (p.f_s - p.f_c) * std::exp(-std::abs(qd / p.v_s))) - p.k_vf * qd -
         s * p.k_lf * tau_m * tau_m;
}

struct SimTick {
  double t = 0.0;
  VecX q, qd, qdd;   // true state and acceleration
  VecX q_m, qd_m;    // measured (noisy) state
  VecX tau_d;        // desired actuation (virtual rows zero)
  VecX tau_applied;  // post-deadzone actuation incl. friction (virtual rows zero)
  Eigen::Matrix<double, 12, 1> imu = Eigen::Matrix<double, 12, 1>::Zero();  // U^V
  VecX tau_e;  // true external generalized torque (contact + scripted)
  VecX tau_u;  // Definition-1 uncertainty torque, measured channels
  std::vector<bool> contact;           // per contact link, normal force > 0
  std::vector<bool> expected_contact;  // per contact link, per scenario script
  bool collision = false;              // inside an unexpected-disturbance window
};

struct CollisionWindow {
  double t0 = 0.0, t1 = 0.0;
  int joint = -1;    // generalized index, or -1 for a wrench event
  std::string link;  // set for wrench events
  double magnitude = 0.0;
};

struct SimLog {
  double dt = 1e-3;  // log tick spacing
  std::vector<SimTick> ticks;
  std::vector<CollisionWindow> collisions;
  uint64_t seed = 0;
  std::string model_name;
  std::string config_hash;

  int n_v() const { return ticks.empty() ? 0 : static_cast<int>(ticks[0].q.size()); }
};

namespace detail {

inline std::vector<std::vector<Vec3>> default_contact_points(const RobotModel& m,
                                                             const ContactConfig& cc) {
  if (!cc.points.empty()) return cc.points;
  std::vector<std::vector<Vec3>> pts;
  const bool planar = m.base_mode == BaseMode::FloatingPlanar;
  for (size_t i = 0; i < m.contact_links.size(); ++i) {
    if (planar)
      pts.push_back({Vec3(0.12, 0.0, -0.08), Vec3(-0.06, 0.0, -0.08)});
    else
      pts.push_back({Vec3(0.12, 0.04, -0.08), Vec3(0.12, -0.04, -0.08),
                     Vec3(-0.06, 0.04, -0.08), Vec3(-0.06, -0.04, -0.08)});
  }
  return pts;
}

}  // namespace detail

class Simulator {
 public:
  Simulator(const RobotModel& model, const UncertaintyConfig& ucfg, const ContactConfig& ccfg,
            uint64_t seed)
      : true_(model),
        nominal_(ucfg.has_model_error() ? perturb_inertial(model, model.nominal_inertial_scale)
                                        : model),
        ucfg_(ucfg),
        ccfg_(ccfg),
        contact_points_(detail::default_contact_points(model, ccfg)),
        rng_(seed),
        seed_(seed) {
    const int n = model.n_v();
    q_ = VecX::Zero(n);
    qd_ = VecX::Zero(n);
    friction_ = ucfg.friction_per_joint;
    if (friction_.empty()) {
      LimbGrouping g = derive_groups(model);
      friction_.resize(model.n_actuated(), ucfg.friction_upper);
      for (const auto& grp : g.groups)
        if (grp.load_bearing)
          for (int j : grp.joints) friction_[j - model.n_virtual] = ucfg.friction_leg;
    }
  }

  const RobotModel& true_model() const { return true_; }
  const RobotModel& nominal_model() const { return nominal_; }
  const VecX& q() const { return q_; }
  const VecX& qd() const { return qd_; }
  double t() const { return t_; }
  std::mt19937_64& rng() { return rng_; }
  uint64_t seed() const { return seed_; }

  void set_state(const VecX& q, const VecX& qd) {
    q_ = q;
    qd_ = qd;
  }

  // Ground-reaction wrenches from the spring-damper model at the current state.
  std::vector<ExternalWrench> contact_wrenches(std::vector<bool>* flags = nullptr) const {
    std::vector<ExternalWrench> out;
    if (flags) flags->assign(true_.contact_links.size(), false);
    if (true_.contact_links.empty()) return out;
    Kinematics kin = Kinematics::compute(true_, q_);
    for (size_t li = 0; li < true_.contact_links.size(); ++li) {
      const int link = true_.contact_links[li];
      const int ji = true_.links[link].parent_joint;
      for (const Vec3& pt : contact_points_[li]) {
        const Vec3 p = kin.point_world(ji, pt);
        if (p.z() >= 0.0) continue;
        const MatX J = contact_jacobian_matrix(true_, kin, link, pt);
        const Vec3 v = J.topRows<3>() * qd_;
        const double fz = -ccfg_.k * p.z() - ccfg_.c * v.z();
        if (fz <= 0.0) continue;  // unilateral: pushing only
        ExternalWrench w;
        w.link = link;
        w.local_point = pt;
        w.wrench.head<3>() = Vec3(-ccfg_.c_t * v.x(), -ccfg_.c_t * v.y(), fz);
        out.push_back(w);
        if (flags) (*flags)[li] = true;
      }
    }
    return out;
  }

  // One semi-implicit Euler control step at dt (2 kHz default). tau_d: desired
  // actuated torques in generalized layout (virtual rows zero). tau_e_joint:
  // scripted external generalized torque applied directly at joints. A
  // snapshot of the pre-step instant is kept for make_tick().
  void step(const VecX& tau_d, const std::vector<ExternalWrench>& scripted,
            const VecX& tau_e_joint, double dt) {
    const int n = true_.n_v();
    VecX tau_app = VecX::Zero(n);
    for (int j = true_.n_virtual; j < n; ++j) {
      const FrictionParams& fp = friction_[j - true_.n_virtual];
      double tau = tau_d[j];
      if (ucfg_.has_friction()) {
        tau += friction_torque(qd_[j], tau_d[j], fp);
        if (std::abs(tau) <= fp.tau_loss) tau = 0.0;
      }
      tau_app[j] = tau;
    }

    std::vector<ExternalWrench> wrenches = contact_wrenches(&snap_.contact);
    wrenches.insert(wrenches.end(), scripted.begin(), scripted.end());

    snap_.t = t_;
    snap_.q = q_;
    snap_.qd = qd_;
    snap_.tau_d = tau_d;
    snap_.tau_applied = tau_app;
    snap_.tau_e = external_generalized_force(true_, q_, wrenches) + tau_e_joint;
    snap_.qdd = forward_dynamics(true_, q_, qd_, tau_app + tau_e_joint, wrenches);

    qd_ += dt * snap_.qdd;
    q_ += dt * qd_;
    t_ += dt;
    if (!q_.allFinite() || !qd_.allFinite())
      throw SimError("simulation diverged at t=" + std::to_string(t_));
  }

  // Log record for the pre-step instant of the most recent step(). Sensor
  // noise is drawn here, so the noise stream advances once per log tick.
  SimTick make_tick() {
    const int n = true_.n_v();
    SimTick tk;
    tk.t = snap_.t;
    tk.q = snap_.q;
    tk.qd = snap_.qd;
    tk.qdd = snap_.qdd;
    tk.q_m = snap_.q;
    tk.qd_m = snap_.qd;
    tk.tau_d = snap_.tau_d;
    tk.tau_applied = snap_.tau_applied;
    tk.tau_e = snap_.tau_e;
    tk.contact = snap_.contact;
    tk.expected_contact = snap_.contact;

    std::normal_distribution<double> N(0.0, 1.0);
    if (ucfg_.has_noise()) {
      // encoder noise on the actuated channels; the virtual rows stand in for
      // the base state estimate, whose error model is out of scope (the noise
      // table covers encoders and the IMU)
      const double sq = std::sqrt(ucfg_.noise.q), sqd = std::sqrt(ucfg_.noise.qd);
      for (int i = true_.n_virtual; i < n; ++i) tk.q_m[i] += sq * N(rng_);
      for (int i = true_.n_virtual; i < n; ++i) tk.qd_m[i] += sqd * N(rng_);
    }

    // Definition 1 on the measured channels with the true acceleration:
    // tau_u = M_bar qdd + C_bar qd + g_bar - tau_d - tau_e.
    tk.tau_u = mass_matrix(nominal_, tk.q_m) * tk.qdd +
               bias_force(nominal_, tk.q_m, tk.qd_m) - tk.tau_d - tk.tau_e;

    if (true_.n_virtual > 0) {
      Kinematics kin = Kinematics::compute(true_, snap_.q);
      const int bj = true_.n_virtual - 1;
      const Mat3 R = kin.R_world[bj];
      Vec3 w_world = Vec3::Zero();
      Vec3 a_world = Vec3::Zero();
      for (int j = 0; j < true_.n_virtual; ++j) {
        if (true_.joints[j].type == JointType::Revolute)
          w_world += (kin.R_world[j] * true_.joints[j].axis) * snap_.qd[j];
        else
          a_world += (kin.R_world[j] * true_.joints[j].axis) * snap_.qdd[j];
      }
      Vec3 w_local = R.transpose() * w_world;
      Vec3 a_local = R.transpose() * (a_world + Vec3(0, 0, true_.gravity));
      if (ucfg_.has_noise()) {
        const double sw = std::sqrt(ucfg_.noise.base_ang_vel);
        const double sa = std::sqrt(ucfg_.noise.base_lin_acc);
        for (int i = 0; i < 3; ++i) w_local[i] += sw * N(rng_);
        for (int i = 0; i < 3; ++i) a_local[i] += sa * N(rng_);
      }
      tk.imu.segment<3>(0) = R.col(0);
      tk.imu.segment<3>(3) = R.col(1);
      tk.imu.segment<3>(6) = w_local;
      tk.imu.segment<3>(9) = a_local;
    }
    return tk;
  }

 private:
  RobotModel true_;
  RobotModel nominal_;
  UncertaintyConfig ucfg_;
  ContactConfig ccfg_;
  std::vector<std::vector<Vec3>> contact_points_;
  std::vector<FrictionParams> friction_;
  std::mt19937_64 rng_;
  uint64_t seed_ = 0;
  double t_ = 0.0;
  VecX q_, qd_;
  SimTick snap_;  // pre-step snapshot of the most recent step
};

// Per-joint piecewise-constant random excitation torque.
class RteOverlay {
 public:
  RteOverlay(const RteConfig& cfg, int n_actuated, std::mt19937_64& rng)
      : cfg_(cfg),
        value_(VecX::Zero(n_actuated)),
        next_switch_(n_actuated, 0.0),
        on_(n_actuated, false) {
    if (!cfg_.enabled) return;
    if (cfg_.tau_bound.size() != n_actuated) throw SimError("rte: tau_bound size mismatch");
    for (int j = 0; j < n_actuated; ++j) next_switch_[j] = draw_duration(rng);
  }

  // Additive torque for the actuated joints at time t.
  const VecX& sample(double t, std::mt19937_64& rng) {
    if (!cfg_.enabled) return value_;
    for (int j = 0; j < value_.size(); ++j) {
      if (!cfg_.excluded.empty() && cfg_.excluded[j]) {
        value_[j] = 0.0;
        continue;
      }
      while (t >= next_switch_[j]) {
        on_[j] = !on_[j];
        next_switch_[j] += draw_duration(rng);
        if (on_[j]) {
          std::uniform_real_distribution<double> U(-cfg_.tau_bound[j], cfg_.tau_bound[j]);
          value_[j] = U(rng);
        } else {
          value_[j] = 0.0;
        }
      }
    }
    return value_;
  }

 private:
  double draw_duration(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(cfg_.t_on_min, cfg_.t_on_max);
    return U(rng);
  }

  RteConfig cfg_;
  VecX value_;
  std::vector<double> next_switch_;
  std::vector<bool> on_;
};

}  // namespace mobnet
