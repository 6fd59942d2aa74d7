#include "oracles.hpp"
#include "rcbf/acc.hpp"
#include "rcbf/errors.hpp"
#include "rcbf/multirotor.hpp"

#include <doctest.h>

#include <cmath>

using namespace rcbf;

TEST_CASE("acc defaults are valid and start inside the safe set") {
  const AccScenario sc = acc_defaults();
  CHECK_NOTHROW(sc.validate());
  CHECK(sc.h(sc.x0) > 0.0);
  AccScenario bad = sc;
  bad.tau_d = 1.8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = sc;
  bad.M = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = sc;
  bad.sigma_V = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("acc uncertainty draws are seeded and bounded by the base") {
  const AccUncertainty base;
  const AccUncertainty s0 = acc_uncertainty_draw(0, base);
  CHECK(s0.amplitude == base.amplitude);
  CHECK(s0.mass_fraction == base.mass_fraction);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const AccUncertainty a = acc_uncertainty_draw(seed, base), b = acc_uncertainty_draw(seed, base);
    CHECK(a.amplitude == b.amplitude);
    CHECK(a.omega == b.omega);
    CHECK(a.amplitude >= 0.0);
    CHECK(a.amplitude <= base.amplitude);
    CHECK(a.omega >= 0.5 * base.omega);
    CHECK(a.omega <= base.omega);
    CHECK(a.drag_fraction <= base.drag_fraction);
    CHECK(a.mass_fraction <= base.mass_fraction);
  }
  CHECK(acc_uncertainty_draw(1).amplitude != acc_uncertainty_draw(2).amplitude);
}

TEST_CASE("acc mode names round-trip") {
  for (AccMode m : {AccMode::nominal, AccMode::method1, AccMode::method1_alt, AccMode::method2, AccMode::unprotected}) {
    CHECK(parse_acc_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_acc_mode("method3"), ConfigError);
  CHECK(is_robust(AccMode::method2));
  CHECK(!is_robust(AccMode::unprotected));
}

TEST_CASE("acc run logs the documented columns") {
  const AccScenario sc = acc_defaults();
  const SimulationTrace tr = run_acc(sc, AccMode::method2, IntegratorConfig{1e-3, 1.0});
  CHECK(tr.columns() == acc_trace_columns());
  CHECK(tr.size() == 1001);
  CHECK(tr.at(0, "delta_hat_1") == 0.0);
  CHECK(tr.at(0, "err_bound") == doctest::Approx(sc.delta_b * sc.gain().script_P));
  CHECK(tr.constraint_labels.at(0) == std::string(labels::method2_estimate));
  CHECK(tr.metrics.at("qp_fault_count") == 0.0);
}

TEST_CASE("rest-to-rest reference derivatives") {
  const Reference r = rest_to_rest_reference({-3.0, 0.0, 1.0}, {1.0, 2.0, 1.0}, 4.0, 0.3);
  CHECK((r(0.0).p - Eigen::Vector3d(-3.0, 0.0, 1.0)).norm() < 1e-15);
  CHECK((r(4.0).p - Eigen::Vector3d(1.0, 2.0, 1.0)).norm() < 1e-14);
  CHECK((r(9.0).p - Eigen::Vector3d(1.0, 2.0, 1.0)).norm() < 1e-14);
  CHECK(r(0.0).v.norm() == 0.0);
  CHECK(r(4.0).v.norm() < 1e-14);
  const double h = 1e-5;
  for (double t : {0.3, 1.1, 2.0, 3.7}) {
    CHECK(((r(t + h).p - r(t - h).p) / (2 * h) - r(t).v).norm() < 1e-8);
    CHECK(((r(t + h).v - r(t - h).v) / (2 * h) - r(t).a).norm() < 1e-8);
    CHECK(((r(t + h).a - r(t - h).a) / (2 * h) - r(t).j).norm() < 1e-7);
    CHECK(r(t).psi == 0.3);
  }
  CHECK_THROWS_AS(rest_to_rest_reference({0, 0, 0}, {1, 0, 0}, 0.0, 0.0), ConfigError);
}

TEST_CASE("multirotor attitude and input map") {
  const MultirotorScenario sc = multirotor_defaults();
  Vector x = Vector::Zero(10);
  x.segment<3>(6) << 0.5, -0.3, 0.2;
  x(9) = 0.4;
  const Eigen::Matrix3d R = sc.attitude(x);
  CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(R.determinant() == doctest::Approx(1.0));
  const Eigen::Vector3d thrust = x.segment<3>(6) + Eigen::Vector3d(0, 0, sc.gravity);
  CHECK((R.col(2) - thrust.normalized()).norm() < 1e-12);

  // The top rows of B_u are the jerk of T z_b under body rates ω and thrust rate Ṫ.
  const Eigen::Vector4d u(0.7, 0.2, -0.1, 0.3);
  const Eigen::Matrix4d B = sc.input_map(x);
  const double T = thrust.norm();
  const Eigen::Vector3d w(u(1), u(2), u(3));
  const Eigen::Vector3d jerk = u(0) * R.col(2) + T * R * w.cross(Eigen::Vector3d::UnitZ());
  CHECK(((B * u).head<3>() - jerk).norm() < 1e-12);
  CHECK(std::abs(B.determinant()) > 1e-3);

  Vector falling = Vector::Zero(10);
  falling(8) = -sc.gravity;
  CHECK_THROWS_AS(sc.input_map(falling), ScenarioFault);
}

TEST_CASE("multirotor uncertainty draws") {
  const MultirotorUncertainty u0 = multirotor_uncertainty_draw(0, 0.15, -0.005);
  CHECK((u0.c_d.array() == 0.15).all());
  CHECK((u0.delta_u.array() == -0.005).all());
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const MultirotorUncertainty u = multirotor_uncertainty_draw(s, 0.15, -0.005);
    CHECK((u.c_d.array() >= 0.3 * 0.15).all());
    CHECK((u.c_d.array() <= 0.15).all());
    CHECK((u.delta_u.array() <= 0.0).all());
    CHECK((u.delta_u.array() >= -0.005).all());
  }
}

TEST_CASE("multirotor tracker follows the reference without obstacles") {
  MultirotorScenario sc = multirotor_defaults();
  sc.obstacles.clear();
  sc.reference = rest_to_rest_reference({0, 0, 0}, {2, 1, 0.5}, 4.0, 0.2);
  const SimulationTrace tr = run_multirotor(sc, MultirotorMode::nominal, IntegratorConfig{1e-3, 8.0});
  CHECK(tr.at(tr.size() - 1, "track_err") < 1e-3);
  CHECK(std::abs(tr.at(tr.size() - 1, "psi") - 0.2) < 1e-3);
}

TEST_CASE("multirotor cascade derivative matches the filter terms along a trace") {
  const MultirotorScenario sc = multirotor_defaults();
  const IntegratorConfig cfg{1e-3, 12.0};
  const SimulationTrace tr = run_multirotor(sc, MultirotorMode::method2_hocbf, cfg);
  const ControlAffineModel m = sc.model();
  const HocbfCascade c = sc.cascade(0);
  double worst = 0.0, scale = 0.0;
  for (std::size_t k = 0; k + 1 < tr.size(); k += 7) {
    Vector x(10), d(10);
    Eigen::Vector4d u;
    for (int i = 0; i < 10; ++i) {
      x(i) = tr.at(k, 1 + static_cast<std::size_t>(i));
      d(i) = tr.at(k, "delta_true_" + std::to_string(i + 1));
    }
    for (int i = 0; i < 4; ++i) u(i) = tr.at(k, "u_" + std::to_string(i + 1));
    const HocbfTerms t = hocbf_terms(m, c, x);
    const double predicted = t.Lf_m + t.residual + t.Lg_Lf_m1.dot(u.transpose()) + t.grad_top.dot(d.transpose());
    const double fd = (tr.at(k + 1, "h_e_1") - tr.at(k, "h_e_1")) / cfg.dt;
    worst = std::max(worst, std::abs(fd - predicted));
    scale = std::max(scale, std::abs(predicted));
  }
  CHECK(worst <= 50.0 * cfg.dt * std::max(1.0, scale));
}

TEST_CASE("multirotor validation") {
  MultirotorScenario sc = multirotor_defaults();
  CHECK_NOTHROW(sc.validate());
  sc.cascade_gains = {1.0, 1.0};
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = multirotor_defaults();
  sc.obstacles[0].center = sc.reference(0.0).p;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = multirotor_defaults();
  sc.uncertainty.delta_u(0) = 0.5;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  CHECK_THROWS_AS(parse_multirotor_mode("method1"), ConfigError);
}
