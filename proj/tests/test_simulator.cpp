#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "mobnet/log_io.hpp"
#include "mobnet/scenario.hpp"

#include "helpers.hpp"

using namespace mobnet;

namespace {
template <typename A, typename B>
bool same(const A& a, const B& b) {
  return a.size() == b.size() && (a - b).cwiseAbs().maxCoeff() == 0.0;
}
}  // namespace

TEST_CASE("friction torque formula") {
  FrictionParams p{5.0, 2.0, 1.51, 4.0, 0.002, 10.0};

  CHECK(friction_torque(0.0, 50.0, p) == 0.0);  // sgn(0) = 0

  const double expect = -(5.0 + (2.0 - 5.0) * std::exp(-1.0 / 1.51)) - 4.0;
  CHECK(friction_torque(1.0, 0.0, p) == Catch::Approx(expect));
  CHECK(friction_torque(1.0, 0.0, p) == Catch::Approx(-7.4526).margin(5e-4));

  // load-dependent term adds -k_lf |tau_m|^2
  CHECK(friction_torque(1.0, 10.0, p) - friction_torque(1.0, 0.0, p) ==
        Catch::Approx(-0.2));
  // odd in velocity when load-free
  CHECK(friction_torque(-1.0, 0.0, p) == Catch::Approx(-expect));
}

TEST_CASE("ideal static equilibrium: state constant, tau_u identically zero") {
  RobotModel m = parse_model(load_model_text("two_link_arm.json"));
  Scenario sc;
  sc.duration = 1.0;
  sc.q0 = (VecX(2) << 0.8, 0.6).finished();
  SimLog log = run_scenario(m, sc, UncertaintyConfig{}, ContactConfig{}, 11);
  REQUIRE(log.ticks.size() == 1000);
  for (const auto& tk : log.ticks) {
    CHECK((tk.q - log.ticks[0].q).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(tk.tau_u.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(tk.tau_e.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("floating biped static hold: ground reaction carries the weight") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  Scenario sc;
  sc.duration = 1.0;
  SimLog log = run_scenario(m, sc, UncertaintyConfig{}, ContactConfig{}, 13);
  double mass = 0.0;
  for (const auto& l : m.links) mass += l.mass;
  const auto& tk = log.ticks.back();
  // vertical external torque row (v_z) equals total weight at equilibrium
  CHECK(tk.tau_e[1] == Catch::Approx(mass * m.gravity).epsilon(0.02));
  CHECK(tk.qd.cwiseAbs().maxCoeff() < 0.05);
  CHECK((tk.q - log.ticks[0].q).cwiseAbs().maxCoeff() < 0.05);
  // ideal level with true nominal model: tau_u stays at zero
  CHECK(tk.tau_u.cwiseAbs().maxCoeff() < 1e-9);
  for (bool c : tk.contact) CHECK(c);
}

TEST_CASE("sensor noise level: tau_u is noise-induced with zero mean") {
  RobotModel m = parse_model(load_model_text("two_link_arm.json"));
  Scenario sc;
  sc.duration = 4.0;
  sc.q0 = (VecX(2) << 0.8, 0.6).finished();
  UncertaintyConfig u;
  u.level = UncertaintyLevel::SensorNoise;
  SimLog log = run_scenario(m, sc, u, ContactConfig{}, 17);

  const int N = static_cast<int>(log.ticks.size());
  VecX mean = VecX::Zero(2), var = VecX::Zero(2);
  for (const auto& tk : log.ticks) mean += tk.tau_u;
  mean /= N;
  for (const auto& tk : log.ticks) var += (tk.tau_u - mean).cwiseAbs2();
  var /= N - 1;
  for (int j = 0; j < 2; ++j) {
    CHECK(var[j] > 0.0);  // noise actually present
    CHECK(std::abs(mean[j]) < 3.0 * std::sqrt(var[j] / N) + 1e-3);
  }
}

TEST_CASE("all-uncertainty static hold matches the closed-form model-error torque") {
  json doc = json::parse(load_model_text("two_link_arm.json"));
  doc["nominal"] = {{"inertial_scale", 0.9}};
  RobotModel m = parse_model(doc.dump());

  Scenario sc;
  sc.duration = 4.0;
  sc.q0 = (VecX(2) << 1.0, 0.5).finished();
  UncertaintyConfig u;
  u.level = UncertaintyLevel::AllUncertainty;
  u.noise = {0.0, 0.0, 0.0, 0.0};
  // viscous-only friction so the joint settles exactly (any sign-discontinuous
  // term would leave a discrete chatter limit cycle around the rest point)
  u.friction_leg = u.friction_upper = FrictionParams{0.0, 0.0, 1.51, 0.5, 0.0, 0.0};
  SimLog log = run_scenario(m, sc, u, ContactConfig{}, 19);

  const auto& tk = log.ticks.back();
  REQUIRE(tk.qd.cwiseAbs().maxCoeff() < 1e-5);  // settled
  // at rest friction vanishes, so tau_u = g_bar(q) - tau_d = -0.1 g(q)
  const VecX expect = -0.1 * gravity_vector(m, tk.q);
  CHECK((tk.tau_u - expect).cwiseAbs().maxCoeff() < 2e-3);
}

TEST_CASE("rte overlay: bounds, exclusion, determinism") {
  RteConfig cfg;
  SECTION("disabled gives zero") {
    std::mt19937_64 rng(1);
    RteOverlay r(cfg, 3, rng);
    CHECK(r.sample(0.7, rng).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("bounds and exclusion") {
    cfg.enabled = true;
    cfg.tau_bound = (VecX(3) << 50.0, 50.0, 20.0).finished();
    cfg.excluded = {false, true, false};
    std::mt19937_64 rng(2);
    RteOverlay r(cfg, 3, rng);
    bool any_on = false;
    for (int k = 0; k < 20000; ++k) {
      const VecX v = r.sample(k * 5e-4, rng);
      CHECK(std::abs(v[0]) <= 50.0);
      CHECK(v[1] == 0.0);
      CHECK(std::abs(v[2]) <= 20.0);
      any_on = any_on || v.cwiseAbs().maxCoeff() > 0.0;
    }
    CHECK(any_on);
  }
  SECTION("identical seed, identical sequence") {
    cfg.enabled = true;
    cfg.tau_bound = VecX::Constant(2, 30.0);
    std::mt19937_64 ra(5), rb(5);
    RteOverlay a(cfg, 2, ra), b(cfg, 2, rb);
    for (int k = 0; k < 5000; ++k)
      REQUIRE(same(a.sample(k * 5e-4, ra), b.sample(k * 5e-4, rb)));
  }
}

TEST_CASE("contact model is unilateral") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  Simulator sim(m, UncertaintyConfig{}, ContactConfig{}, 1);
  VecX q = VecX::Zero(m.n_v()), qd = VecX::Zero(m.n_v());
  q[1] = 0.85;  // penetration with straight legs (sole points at -0.98)
  sim.set_state(q, qd);
  auto w = sim.contact_wrenches();
  REQUIRE(!w.empty());
  for (const auto& e : w) CHECK(e.wrench[2] > 0.0);

  // rapid upward motion: damping would pull, so the contact must vanish
  qd[1] = 20.0;
  sim.set_state(q, qd);
  CHECK(sim.contact_wrenches().empty());

  // well above ground: no contact
  q[1] = 2.0;
  qd[1] = 0.0;
  sim.set_state(q, qd);
  CHECK(sim.contact_wrenches().empty());
}

TEST_CASE("scenario determinism: identical seed gives bit-identical logs") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  Scenario sc;
  sc.duration = 0.5;
  sc.excitation = ExcitationKind::Gait;
  sc.rte.enabled = true;
  sc.rte.tau_bound = VecX::Constant(6, 5.0);
  UncertaintyConfig u;
  u.level = UncertaintyLevel::AllUncertainty;
  u.friction_leg = u.friction_upper = FrictionParams{1.0, 0.5, 1.51, 0.5, 0.002, 0.3};
  SimLog a = run_scenario(m, sc, u, ContactConfig{}, 42);
  SimLog b = run_scenario(m, sc, u, ContactConfig{}, 42);
  SimLog c = run_scenario(m, sc, u, ContactConfig{}, 43);
  REQUIRE(a.ticks.size() == b.ticks.size());
  bool differs_from_c = false;
  for (size_t k = 0; k < a.ticks.size(); ++k) {
    REQUIRE(same(a.ticks[k].q, b.ticks[k].q));
    REQUIRE(same(a.ticks[k].q_m, b.ticks[k].q_m));
    REQUIRE(same(a.ticks[k].tau_u, b.ticks[k].tau_u));
    differs_from_c = differs_from_c || !same(a.ticks[k].q_m, c.ticks[k].q_m);
  }
  CHECK(differs_from_c);
}

TEST_CASE("gait scenario: swing windows, scripted knee step, annotations") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  Scenario sc;
  sc.duration = 2.0;
  sc.excitation = ExcitationKind::Gait;
  // 30 N*m step on the left knee during the left-leg swing window
  sc.joint_disturbances.push_back({"ll_knee", 30.0, 1.25, 0.1});
  SimLog log = run_scenario(m, sc, UncertaintyConfig{}, ContactConfig{}, 23);

  REQUIRE(log.collisions.size() == 1);
  CHECK(log.collisions[0].joint == m.joint_index("ll_knee"));
  CHECK(log.collisions[0].t0 == 1.25);

  const int kk = m.joint_index("ll_knee");
  bool saw_swing_rl = false, saw_swing_ll = false, saw_col = false;
  for (const auto& tk : log.ticks) {
    if (!tk.expected_contact[0]) saw_swing_rl = true;
    if (!tk.expected_contact[1]) saw_swing_ll = true;
    if (tk.t >= 1.25 && tk.t < 1.35) {
      CHECK(tk.collision);
      // swing-leg knee: stance-foot contact columns are zero there, so the
      // logged external torque is exactly the scripted step
      CHECK(tk.tau_e[kk] == Catch::Approx(30.0));
      saw_col = true;
    } else {
      CHECK_FALSE(tk.collision);
    }
    // joint limits respected throughout
    for (int j = m.n_virtual; j < m.n_v(); ++j) {
      CHECK(tk.q[j] >= m.joints[j].limits.lower - 0.05);
      CHECK(tk.q[j] <= m.joints[j].limits.upper + 0.05);
    }
  }
  CHECK(saw_swing_rl);
  CHECK(saw_swing_ll);
  CHECK(saw_col);
}

TEST_CASE("simlog CSV round-trip is exact") {
  RobotModel m = parse_model(load_model_text("planar_biped.json"));
  Scenario sc;
  sc.duration = 0.1;
  sc.excitation = ExcitationKind::Gait;
  sc.joint_disturbances.push_back({"rl_knee", 10.0, 0.02, 0.03});
  UncertaintyConfig u;
  u.level = UncertaintyLevel::SensorNoise;
  SimLog a = run_scenario(m, sc, u, ContactConfig{}, 31);
  a.config_hash = "deadbeef";

  const std::string path = "/tmp/mobnet_test_log.csv";
  write_simlog(a, path);
  SimLog b = read_simlog(path);
  std::remove(path.c_str());
  std::remove((path + ".meta.json").c_str());

  REQUIRE(a.ticks.size() == b.ticks.size());
  CHECK(a.dt == b.dt);
  CHECK(a.seed == b.seed);
  CHECK(a.config_hash == b.config_hash);
  REQUIRE(a.collisions.size() == b.collisions.size());
  CHECK(a.collisions[0].joint == b.collisions[0].joint);
  for (size_t k = 0; k < a.ticks.size(); ++k) {
    REQUIRE(a.ticks[k].t == b.ticks[k].t);
    REQUIRE(same(a.ticks[k].q, b.ticks[k].q));
    REQUIRE(same(a.ticks[k].qd, b.ticks[k].qd));
    REQUIRE(same(a.ticks[k].qdd, b.ticks[k].qdd));
    REQUIRE(same(a.ticks[k].q_m, b.ticks[k].q_m));
    REQUIRE(same(a.ticks[k].qd_m, b.ticks[k].qd_m));
    REQUIRE(same(a.ticks[k].tau_d, b.ticks[k].tau_d));
    REQUIRE(same(a.ticks[k].tau_applied, b.ticks[k].tau_applied));
    REQUIRE(same(a.ticks[k].imu, b.ticks[k].imu));
    REQUIRE(same(a.ticks[k].tau_e, b.ticks[k].tau_e));
    REQUIRE(same(a.ticks[k].tau_u, b.ticks[k].tau_u));
    REQUIRE(a.ticks[k].contact == b.ticks[k].contact);
    REQUIRE(a.ticks[k].expected_contact == b.ticks[k].expected_contact);
    REQUIRE(a.ticks[k].collision == b.ticks[k].collision);
  }
}
