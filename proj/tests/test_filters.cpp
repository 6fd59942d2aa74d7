#include "oracles.hpp"
#include "rcbf/acc.hpp"
#include "rcbf/errors.hpp"
#include "rcbf/filters.hpp"
#include "rcbf/multirotor.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace rcbf;

namespace {

std::vector<Vector> acc_states(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> v(0.0, 30.0), d(0.0, 100.0);
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back((Vector(2) << v(rng), d(rng)).finished());
  return out;
}

std::vector<Vector> multirotor_states(const MultirotorScenario& sc, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x = sc.reference_state(0.5 * static_cast<double>(i));
    x += 0.3 * oracle::random_vector(rng, 10);
    out.push_back(x);
  }
  return out;
}

bool same_row(const AffineConstraint& a, const AffineConstraint& b) {
  if (a.a.size() != b.a.size() || a.b != b.b) return false;
  for (Eigen::Index i = 0; i < a.a.size(); ++i) {
    if (a.a(i) != b.a(i)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("acc Lie derivatives match their closed forms") {
  const AccScenario sc = acc_defaults();
  const ControlAffineModel m = sc.model();
  const BarrierFunction h = sc.barrier();
  for (const auto& x : acc_states(100, 1)) {
    const LieTerms l = lie_terms(m, h, x);
    const double fr = sc.f0 + sc.f1 * x(0) + sc.f2 * x(0) * x(0);
    CHECK(std::abs(l.Lf - (sc.tau_d * fr / sc.M + sc.v_l - x(0))) <= 1e-10);
    CHECK(std::abs(l.Lg(0) - (-sc.tau_d / sc.M)) <= 1e-10);
    CHECK(l.h == doctest::Approx(x(1) - sc.tau_d * x(0)));
  }
}

TEST_CASE("analytic barrier gradients agree with finite differences") {
  const AccScenario acc = acc_defaults();
  CHECK(gradient_check(acc.barrier().h, acc.barrier().grad_h, acc_states(20, 2)) < 1e-7);
  const MultirotorScenario mr = multirotor_defaults();
  CHECK(gradient_check(mr.barrier(0).h, mr.barrier(0).grad_h, multirotor_states(mr, 20, 3)) < 1e-7);
  const GradientMap wrong = [](const Vector& x) { return RowVector::Zero(x.size()); };
  CHECK(gradient_check(acc.barrier().h, wrong, acc_states(3, 4)) > 0.1);
}

TEST_CASE("robust rows reduce exactly") {
  const AccScenario sc = acc_defaults();
  const ControlAffineModel m = sc.model();
  const BarrierFunction h = sc.barrier();
  const EstimatorGain g = sc.gain();
  std::mt19937_64 rng(5);
  for (const auto& x : acc_states(50, 6)) {
    const Vector zero = Vector::Zero(2);
    CHECK(same_row(method2_row(m, h, zero, g, 0.0, 0.0, x, 0.7), nominal_cbf_row(m, h, x)));

    const Vector dh = oracle::random_vector(rng, 2, -0.5, 0.5);
    const HocbfCascade c1 = make_cascade(m, h, {h.alpha.gain});
    CHECK(same_row(hocbf_method2_row(m, c1, dh, g, sc.delta_L, sc.delta_b, x, 0.3),
                   method2_row(m, h, dh, g, sc.delta_L, sc.delta_b, x, 0.3)));
  }
}

TEST_CASE("robust row terms") {
  const AccScenario sc = acc_defaults();
  const ControlAffineModel m = sc.model();
  const BarrierFunction h = sc.barrier();
  const EstimatorGain g = sc.gain();
  const Vector x = (Vector(2) << 20.0, 30.0).finished();
  const Vector dh = (Vector(2) << 0.1, 0.0).finished();
  const LieTerms l = lie_terms(m, h, x);
  const double eb = error_bound(g, sc.delta_L, sc.delta_b, 0.5);
  const double gnorm = std::sqrt(sc.tau_d * sc.tau_d + 1.0);

  const AffineConstraint r2 = method2_row(m, h, dh, g, sc.delta_L, sc.delta_b, x, 0.5);
  CHECK(r2.b == doctest::Approx(-sc.alpha * l.h - l.Lf + sc.tau_d * 0.1 + gnorm * eb));
  CHECK(r2.label == std::string(labels::method2_estimate));

  const AffineConstraint ra = method1_alt_row(m, h, g, sc.delta_L, sc.delta_b, x, 0.5);
  CHECK(ra.b == doctest::Approx(-sc.alpha * l.h - l.Lf + gnorm * eb));

  const Method1Params p = Method1Params::make(sc.mu_h, sc.sigma_V, g);
  CHECK(p.mu_e == doctest::Approx(25.0));
  CHECK(p.D == doctest::Approx(4 * 0.1 * 25.0 - 2 * 0.1 * 1.0));
  const AffineConstraint r1 = method1_row(m, h, p, x);
  const double S = -sc.mu_h * l.h + gnorm * gnorm / p.D + sc.sigma_V * sc.delta_L * sc.delta_L / (2 * 100.0);
  CHECK(r1.b == doctest::Approx(S - l.Lf));
  CHECK(r1.a(0) == doctest::Approx(-sc.tau_d / sc.M));
}

TEST_CASE("method1 parameters need a positive margin") {
  const EstimatorGain g = make_gain({1.0, 1.0}, 1.0);  // μ_e = 0.25
  CHECK_THROWS_AS(Method1Params::make(1.0, 0.1, g), ConfigError);
  CHECK_NOTHROW(Method1Params::make(0.2, 0.1, g));
}

TEST_CASE("matching matrix of the acc model is [M, 0]") {
  const AccScenario sc = acc_defaults();
  const Matrix Q = matching_matrix_Q(sc.model(), sc.x0);
  CHECK(Q(0, 0) == doctest::Approx(sc.M));
  CHECK(std::abs(Q(0, 1)) < 1e-12);
  const Vector u = method1_control(Vector::Constant(1, 100.0), Q, (Vector(2) << 0.01, 5.0).finished());
  CHECK(u(0) == doctest::Approx(100.0 - sc.M * 0.01));

  ControlAffineModel flat = sc.model();
  flat.g_hat = [](const Vector&) { return Matrix::Zero(2, 1); };
  CHECK_THROWS_AS(matching_matrix_Q(flat, sc.x0), MatchingError);
}

TEST_CASE("relaxed CLF row") {
  const AccScenario sc = acc_defaults();
  const ScalarMap V = [&](const Vector& x) { return (x(0) - sc.v_d) * (x(0) - sc.v_d); };
  const GradientMap dV = [&](const Vector& x) {
    RowVector g(2);
    g << 2 * (x(0) - sc.v_d), 0.0;
    return g;
  };
  const Vector x = (Vector(2) << 14.0, 40.0).finished();
  const AffineConstraint c = clf_row(V, dV, sc.model(), 0.7, x);
  const double fr = sc.f0 + sc.f1 * 14.0 + sc.f2 * 196.0;
  CHECK(c.a.size() == 2);
  CHECK(c.a(0) == doctest::Approx(-2 * (14.0 - sc.v_d) / sc.M));
  CHECK(c.a(1) == 1.0);
  CHECK(c.b == doctest::Approx(-2 * (14.0 - sc.v_d) * fr / sc.M + 0.7 * V(x)));
}

TEST_CASE("relative degrees of both scenarios") {
  const AccScenario acc = acc_defaults();
  const RelativeDegree ra =
      check_relative_degrees(acc.model(), acc.uncertainty_spec(), acc.barrier(), 3, acc_states(5, 8));
  CHECK(ra.ird == 1);
  CHECK(ra.drd == 1);
  CHECK(ra.matched);

  const MultirotorScenario mr = multirotor_defaults();
  const RelativeDegree rm = check_relative_degrees(mr.model(), mr.uncertainty_spec(), mr.barrier(0), 3,
                                                   multirotor_states(mr, 5, 9), mr.lie_chain(0));
  CHECK(rm.ird == 3);
  CHECK(rm.drd == 3);
  CHECK(rm.matched);
}

TEST_CASE("unmatched uncertainty is detected") {
  const AccScenario acc = acc_defaults();
  UncertaintySpec u = acc.uncertainty_spec();
  u.delta_f = [](const Vector&) { return (Vector(2) << 0.0, 1.0).finished(); };
  u.delta_g = [](const Vector&) { return Matrix::Zero(2, 1); };
  u.explicit_time_term = nullptr;
  // h = D − τ v_f sees the D-row disturbance at order 1 while the input also enters at order 1.
  RelativeDegree r = check_relative_degrees(acc.model(), u, acc.barrier(), 2, acc_states(3, 10));
  CHECK(r.matched);
  BarrierFunction hv;
  hv.h = [](const Vector& x) { return x(1); };
  hv.grad_h = [](const Vector&) { return (RowVector(2) << 0.0, 1.0).finished(); };
  r = check_relative_degrees(acc.model(), acc.uncertainty_spec(), hv, 3, acc_states(3, 11));
  CHECK(r.ird == 2);
  CHECK(r.drd == 2);
  u.delta_f = [](const Vector&) { return (Vector(2) << 0.0, 1.0).finished(); };
  r = check_relative_degrees(acc.model(), u, hv, 3, acc_states(3, 12));
  CHECK(r.ird == 2);
  CHECK(r.drd == 1);
  CHECK(!r.matched);
}

TEST_CASE("multirotor cascade is consistent") {
  const MultirotorScenario mr = multirotor_defaults();
  const auto states = multirotor_states(mr, 8, 13);
  const HocbfCascade c = mr.cascade(0);
  CHECK_NOTHROW(validate_cascade(mr.model(), c, states));

  const LieChain numeric = numeric_lie_chain(mr.model(), mr.barrier(0), 3);
  for (const auto& x : states) {
    const LieChainEval a = c.chain(x), n = numeric(x);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(a.values[j] == doctest::Approx(n.values[j]).epsilon(1e-6));
      CHECK((a.grads[j] - n.grads[j]).norm() <= 1e-4 * std::max(1.0, a.grads[j].norm()));
    }
  }

  HocbfCascade broken = c;
  broken.chain = [inner = c.chain](const Vector& x) {
    LieChainEval e = inner(x);
    e.values[2] += 0.5;
    return e;
  };
  CHECK_THROWS_AS(validate_cascade(mr.model(), broken, states), ConfigError);
}

TEST_CASE("cascade functions follow the gain polynomial") {
  const MultirotorScenario mr = multirotor_defaults();
  HocbfCascade c = mr.cascade(0);
  c.gains = {1.0, 2.0, 3.0};
  const Vector x = multirotor_states(mr, 1, 14)[0];
  const LieChainEval ev = c.chain(x);
  const HocbfTerms t = hocbf_terms(mr.model(), c, x);
  CHECK(t.phi[0] == doctest::Approx(ev.values[0]));
  CHECK(t.phi[1] == doctest::Approx(ev.values[1] + 1.0 * ev.values[0]));
  // (s + 1)(s + 2) = s² + 3s + 2
  CHECK(t.phi[2] == doctest::Approx(ev.values[2] + 3.0 * ev.values[1] + 2.0 * ev.values[0]));
  const Vector f = mr.model().f_hat(x);
  CHECK(t.residual == doctest::Approx(3.0 * ev.grads[1].dot(f.transpose()) + 2.0 * ev.grads[0].dot(f.transpose())));
}

TEST_CASE("shrunk barrier decrement check") {
  std::vector<double> t, hv;
  for (int k = 0; k <= 1000; ++k) {
    t.push_back(k * 1e-3);
    hv.push_back(std::exp(-0.5 * k * 1e-3));
  }
  CHECK(shrunk_barrier_decrement_check(t, hv, 1.0, 0.0).violations.empty());
  CHECK(!shrunk_barrier_decrement_check(t, hv, 0.1, 0.0).violations.empty());
  CHECK(h_V(2.0, 0.1, (Vector(2) << 3.0, 4.0).finished()) == doctest::Approx(2.0 - 0.1 * 12.5));
}
