#include <catch2/catch_amalgamated.hpp>

#include "mobnet/estimator.hpp"
#include "mobnet/scenario.hpp"

#include "helpers.hpp"

using namespace mobnet;

namespace {

std::vector<SimLog> friction_logs(const RobotModel& m, int count, uint64_t seed0) {
  UncertaintyConfig u;
  u.level = UncertaintyLevel::AllUncertainty;
  u.noise = {0.0, 0.0, 0.0, 0.0};
  u.friction_leg = u.friction_upper = FrictionParams{1.0, 0.5, 1.51, 0.5, 0.002, 0.3};
  std::vector<SimLog> logs;
  for (int i = 0; i < count; ++i) {
    Scenario sc;
    sc.duration = 2.0;
    sc.excitation = ExcitationKind::Sinusoid;
    sc.q0 = (VecX(2) << 0.8, 0.6).finished();
    logs.push_back(run_scenario(m, sc, u, ContactConfig{}, seed0 + i));
  }
  return logs;
}

std::vector<GroupNet> random_nets(const RobotModel& m, const LimbGrouping& grouping,
                                  int d_h, uint64_t seed) {
  std::vector<GroupNet> nets;
  for (const auto& g : grouping.groups) {
    NetworkConfig cfg;
    cfg.d_in = detail::group_feature_width(m, g);
    cfg.d_h = d_h;
    cfg.n_g = static_cast<int>(g.joints.size());
    nets.push_back({g.id, Network::init(cfg, seed++)});
  }
  return nets;
}

}  // namespace

TEST_CASE("friction fit recovers exact synthetic coefficients") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uqd(-2.0, 2.0);
  const int N = 500;
  VecX qd(N), y(N);
  for (int k = 0; k < N; ++k) {
    qd[k] = k % 17 == 0 ? 0.005 * uqd(rng) : uqd(rng);  // a few breakaway samples
    const double s = qd[k] > 0 ? 1.0 : (qd[k] < 0 ? -1.0 : 0.0);
    y[k] = s * 5.0 + 4.0 * qd[k] + s * (std::abs(qd[k]) < 0.01 ? 0.0 : 0.0);
  }
  FrictionFit::Joint j = fit_friction_joint(qd, y, 0.01);
  CHECK_FALSE(j.degenerate);
  CHECK(j.coulomb == Catch::Approx(5.0).margin(1e-6));
  CHECK(j.viscous == Catch::Approx(4.0).margin(1e-6));
  CHECK(std::abs(j.stiction) < 1e-6);
  CHECK(j.residual_rms < 1e-9);
}

TEST_CASE("friction fit degenerate regressor falls back to the zero model") {
  VecX qd = VecX::Zero(100);
  VecX y = VecX::Constant(100, 3.0);
  FrictionFit::Joint j = fit_friction_joint(qd, y, 0.01);
  CHECK(j.degenerate);
  CHECK(j.coulomb == 0.0);
  CHECK(j.viscous == 0.0);
  CHECK(j.stiction == 0.0);
  CHECK(j.residual_rms == Catch::Approx(3.0));
}

TEST_CASE("bandpass frequency response") {
  const double fs = 1000.0;
  auto gain_at = [&](double f) {
    BandPass bp(1, 2.0, 15.0, fs);
    double peak = 0.0;
    const int N = 4000;
    for (int k = 0; k < N; ++k) {
      VecX x(1);
      x << std::sin(2.0 * M_PI * f * k / fs);
      const double y = bp.step(x)[0];
      if (k > N / 2) peak = std::max(peak, std::abs(y));  // after transient
    }
    return peak;
  };

  SECTION("dc rejection") {
    BandPass bp(1, 2.0, 15.0, fs);
    double y = 0.0;
    for (int k = 0; k < 5000; ++k) y = bp.step(VecX::Constant(1, 1.0))[0];
    CHECK(std::abs(y) < 1e-4);
  }
  SECTION("passband and stopband") {
    CHECK(gain_at(8.0) >= 0.7);
    CHECK(gain_at(8.0) <= 1.0);
    CHECK(gain_at(100.0) < 0.05);
  }
  SECTION("invalid bands rejected") {
    CHECK_THROWS_AS(BandPass(1, 15.0, 2.0, fs), std::invalid_argument);
    CHECK_THROWS_AS(butter2_lowpass(600.0, fs), std::invalid_argument);
  }
}

TEST_CASE("MOB on an ideal log tracks the filtered external torque") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  Scenario sc;
  sc.duration = 2.0;
  sc.excitation = ExcitationKind::Gait;
  sc.control_dt = 5e-4;
  sc.log_dt = 5e-4;  // observer at the control rate: error is pure quadrature
  SimLog log = run_scenario(m, sc, UncertaintyConfig{}, ContactConfig{}, 3);

  MobEstimator mob(m, 100.0, log.dt);
  EstimatorRun run = run_estimator(mob, log);
  const VecX rmse = rmse_vs_filtered_truth(run, log);
  CHECK(rmse.mean() < 0.05);
  CHECK(rmse.maxCoeff() < 0.2);

  // r-RMSE normalizes by the per-joint peak
  const VecX rr = relative_rmse(rmse, log);
  CHECK(rr.minCoeff() >= 0.0);
  for (int j = 0; j < rr.size(); ++j) CHECK(rr[j] < 1.0);  // percent
}

TEST_CASE("estimator identity and causality") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  LimbGrouping grouping = derive_groups(m);
  Scenario sc;
  sc.duration = 0.5;
  sc.excitation = ExcitationKind::Gait;
  UncertaintyConfig u;
  u.level = UncertaintyLevel::SensorNoise;
  SimLog log = run_scenario(m, sc, u, ContactConfig{}, 7);

  MobNetEstimator est(m, grouping, 100.0, log.dt, random_nets(m, grouping, 16, 40));
  est.reset();
  std::vector<EstimatorOutput> outs;
  for (const auto& tk : log.ticks) outs.push_back(est.step(tk));
  for (const auto& o : outs) {
    REQUIRE((o.tau_e_hat - (o.r - o.tau_u_hat)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(o.sigma_u.minCoeff() > 0.0);
  }

  // causality: replaying a prefix reproduces the same prefix outputs
  est.reset();
  for (size_t k = 0; k < log.ticks.size() / 2; ++k) {
    EstimatorOutput o = est.step(log.ticks[k]);
    REQUIRE((o.tau_e_hat - outs[k].tau_e_hat).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((o.sigma_u - outs[k].sigma_u).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("checkpoint/grouping mismatch is rejected") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  LimbGrouping grouping = derive_groups(m);
  auto nets = random_nets(m, grouping, 8, 50);
  nets[0].net = Network::init(
      NetworkConfig{nets[0].net.cfg.d_in + 1, 8, nets[0].net.cfg.n_g, 50, 1e-6}, 1);
  CHECK_THROWS_AS(MobNetEstimator(m, grouping, 100.0, 1e-3, nets), std::invalid_argument);
  nets[0].group_id = "nope";
  CHECK_THROWS_AS(MobNetEstimator(m, grouping, 100.0, 1e-3, nets), std::invalid_argument);
}

TEST_CASE("fts-e2e with zero parameters emits the head bias") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  LimbGrouping grouping = derive_groups(m);
  auto nets = random_nets(m, grouping, 8, 60);
  for (auto& gn : nets) {
    gn.net.theta.setZero();
    nets::by(gn.net.layout, gn.net.theta).col(0).head(gn.net.cfg.n_g).setConstant(1.5);
  }
  FtsE2eEstimator est(m, grouping, nets);
  Scenario sc;
  sc.duration = 0.1;
  SimLog log = run_scenario(m, sc, UncertaintyConfig{}, ContactConfig{}, 9);
  EstimatorRun run = run_estimator(est, log);
  CHECK((run.tau_e_hat.array() - 1.5).cwiseAbs().maxCoeff() < 1e-12);
  // identity holds with r = 0
  CHECK((run.r.array() == 0.0).all());
  CHECK((run.tau_e_hat + run.tau_u_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("MOB-fric beats MOB on held-out friction-dominated logs") {
  RobotModel m = parse_model(load_model_text("two_link_arm.json"));
  LimbGrouping grouping = derive_groups(m);
  auto logs = friction_logs(m, 4, 900);
  SimLog held_out = friction_logs(m, 1, 990)[0];

  FrictionFit fit = fit_friction(m, grouping, logs);
  for (int j = 0; j < 2; ++j) {
    CHECK_FALSE(fit.joints[j].degenerate);
    // with an exact nominal model, tau_u = tau_applied - tau_d = the friction
    // torque itself, which resists motion: negative coulomb/viscous terms
    CHECK(fit.joints[j].coulomb < 0.0);
    CHECK(fit.joints[j].viscous < 0.0);
  }

  const RobotModel nominal = perturb_inertial(m, m.nominal_inertial_scale);
  MobEstimator mob(nominal, 100.0, held_out.dt);
  MobFricEstimator mobf(nominal, 100.0, held_out.dt, fit);
  const VecX e0 = rmse_vs_filtered_truth(run_estimator(mob, held_out), held_out);
  const VecX e1 = rmse_vs_filtered_truth(run_estimator(mobf, held_out), held_out);
  CHECK(e1.sum() < e0.sum());

  // the band-pass variant also improves on raw MOB at these frequencies
  MobFricBpfEstimator mobb(nominal, 100.0, held_out.dt, fit);
  const VecX e2 = rmse_vs_filtered_truth(run_estimator(mobb, held_out), held_out);
  CHECK(e2.sum() < e0.sum());
}
