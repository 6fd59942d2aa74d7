#include "rcbf/acc.hpp"

#include "rcbf/errors.hpp"
#include "rcbf/qp.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace rcbf {

AccMode parse_acc_mode(const std::string& s) {
  if (s == "nominal") return AccMode::nominal;
  if (s == "method1") return AccMode::method1;
  if (s == "method1_alt") return AccMode::method1_alt;
  if (s == "method2") return AccMode::method2;
  if (s == "unprotected") return AccMode::unprotected;
  throw ConfigError("unknown acc mode '" + s + "'");
}

const char* to_string(AccMode m) {
  switch (m) {
    case AccMode::nominal: return "nominal";
    case AccMode::method1: return "method1";
    case AccMode::method1_alt: return "method1_alt";
    case AccMode::method2: return "method2";
    case AccMode::unprotected: return "unprotected";
  }
  return "?";
}

bool is_robust(AccMode m) { return m == AccMode::method1 || m == AccMode::method1_alt || m == AccMode::method2; }

AccUncertainty acc_uncertainty_draw(std::uint64_t seed, const AccUncertainty& base) {
  if (seed == 0) return base;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AccUncertainty u;
  u.amplitude = base.amplitude * unit(rng);
  u.omega = 0.5 * base.omega * (1.0 + unit(rng));
  u.drag_fraction = base.drag_fraction * unit(rng);
  u.mass_fraction = base.mass_fraction * unit(rng);
  return u;
}

ControlAffineModel AccScenario::model() const {
  ControlAffineModel m;
  m.n = 2;
  m.m = 1;
  const AccScenario sc = *this;
  m.f_hat = [sc](const Vector& x) {
    Vector f(2);
    f << -sc.drag(x(0)) / sc.M, sc.v_l - x(0);
    return f;
  };
  m.g_hat = [M = M](const Vector&) {
    Matrix g(2, 1);
    g << 1.0 / M, 0.0;
    return g;
  };
  return m;
}

UncertaintySpec AccScenario::uncertainty_spec() const {
  UncertaintySpec u;
  const AccScenario sc = *this;
  const AccUncertainty d = uncertainty;
  u.delta_f = [sc, d](const Vector& x) {
    Vector v(2);
    v << d.drag_fraction * sc.drag(x(0)) / sc.M, 0.0;
    return v;
  };
  u.delta_g = [M = M, d](const Vector&) {
    Matrix g(2, 1);
    g << d.mass_fraction / M, 0.0;
    return g;
  };
  u.explicit_time_term = [M = M, d](double t) {
    Vector v(2);
    v << d.amplitude * std::sin(d.omega * t) / M, 0.0;
    return v;
  };
  u.delta_L = delta_L;
  u.delta_b = delta_b;
  return u;
}

TrueSystem AccScenario::true_system(bool with_uncertainty) const {
  return TrueSystem{model(), with_uncertainty ? uncertainty_spec() : zero_uncertainty(2, 1, delta_L, delta_b)};
}

BarrierFunction AccScenario::barrier() const {
  BarrierFunction b;
  const double tau = tau_d;
  b.h = [tau](const Vector& x) { return x(1) - tau * x(0); };
  b.grad_h = [tau](const Vector&) {
    RowVector g(2);
    g << -tau, 1.0;
    return g;
  };
  b.alpha.gain = alpha;
  return b;
}

EstimatorGain AccScenario::gain() const { return make_gain(lambda, delta_L); }

double AccScenario::reference_control(const Vector& x) const { return drag(x(0)) - M * k_p * (x(0) - v_d); }

void AccScenario::validate() const {
  auto pos = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("acc: ") + name + " must be positive");
  };
  pos(M, "M");
  pos(tau_d, "tau_d");
  pos(delta_L, "delta_L");
  pos(delta_b, "delta_b");
  pos(mu_h, "mu_h");
  pos(sigma_V, "sigma_V");
  pos(alpha, "alpha");
  pos(clf_rate, "clf_rate");
  pos(p_c, "p_c");
  if (!(k_p >= 0.0)) throw ConfigError("acc: k_p must be nonnegative");
  if (x0.size() != 2) throw ConfigError("acc: x0 must have 2 entries (v_f, D)");
  if (lambda.size() != 2) throw ConfigError("acc: estimator lambda must have 2 entries");
  if (h(x0) < 0.0) {
    std::ostringstream os;
    os << "acc: initial state outside the safe set, h(x0) = " << h(x0);
    throw ConfigError(os.str());
  }
  Method1Params::make(mu_h, sigma_V, gain());
}

AccScenario acc_defaults() { return AccScenario{}; }

const std::vector<std::string>& acc_trace_columns() {
  static const std::vector<std::string> cols{"t",        "v_f",          "D",           "u_applied", "u_tilde",
                                             "delta_c",  "h",            "h_V",         "V_clf",     "delta_true_1",
                                             "delta_hat_1", "err_norm", "err_bound",   "out_bound", "qp_status"};
  return cols;
}

SimulationTrace run_acc(const AccScenario& sc, AccMode mode, const IntegratorConfig& cfg, std::uint64_t seed) {
  sc.validate();
  cfg.validate();
  const bool with_unc = sc.uncertainty_enabled && mode != AccMode::nominal;
  const TrueSystem sys = sc.true_system(with_unc);
  const ControlAffineModel& model = sys.nominal;
  const EstimatorGain gain = sc.gain();
  const BarrierFunction barrier = sc.barrier();
  const Method1Params m1 = Method1Params::make(sc.mu_h, sc.sigma_V, gain);
  const bool compensate = mode == AccMode::method1 || mode == AccMode::method1_alt;

  const ScalarMap V = [&sc](const Vector& x) { return (x(0) - sc.v_d) * (x(0) - sc.v_d); };
  const GradientMap gradV = [&sc](const Vector& x) {
    RowVector g(2);
    g << 2.0 * (x(0) - sc.v_d), 0.0;
    return g;
  };

  struct Diag {
    double u_tilde = 0.0;
    double delta_c = 0.0;
    double status = 0.0;
  } diag;
  std::vector<std::size_t> warm;
  bool have_last = false;
  double last_u = 0.0, last_u_tilde = 0.0;
  double faults = 0.0, max_kkt = 0.0, solves = 0.0;
  std::string cbf_label;

  QpProblem qp;
  qp.dim = 2;
  qp.hessian_diag = (Vector(2) << 1.0 / (sc.M * sc.M), sc.p_c).finished();

  const Controller controller = [&](const StepContext& ctx) -> Vector {
    const Vector& x = ctx.x;
    AffineConstraint cbf;
    switch (mode) {
      case AccMode::nominal:
      case AccMode::unprotected: cbf = nominal_cbf_row(model, barrier, x); break;
      case AccMode::method1: cbf = method1_row(model, barrier, m1, x); break;
      case AccMode::method1_alt: cbf = method1_alt_row(model, barrier, gain, sc.delta_L, sc.delta_b, x, ctx.t); break;
      case AccMode::method2:
        cbf = method2_row(model, barrier, ctx.delta_hat, gain, sc.delta_L, sc.delta_b, x, ctx.t);
        break;
    }
    cbf_label = cbf.label;
    cbf.a.conservativeResize(2);
    cbf.a(1) = 0.0;

    qp.linear_ref = (Vector(2) << sc.reference_control(x), 0.0).finished();
    qp.constraints = {cbf, clf_row(V, gradV, model, sc.clf_rate, x)};
    const QpSolution sol = solve(qp, &warm);
    solves += 1.0;

    double u_tilde, u;
    if (sol.status == QpStatus::infeasible) {
      faults += 1.0;
      std::ostringstream os;
      os.precision(17);
      os << "t=" << ctx.t << " qp infeasible; holding last control";
      ctx.events.push_back(os.str());
      u_tilde = have_last ? last_u_tilde : qp.linear_ref(0);
      u = have_last ? last_u : u_tilde;
      diag.delta_c = 0.0;
      diag.status = 1.0;
    } else {
      warm = sol.active_set;
      max_kkt = std::max(max_kkt, sol.kkt_residual);
      u_tilde = sol.u_star(0);
      diag.delta_c = sol.u_star(1);
      diag.status = 0.0;
      u = u_tilde;
      if (compensate) {
        const Matrix Q = matching_matrix_Q(model, x);
        u = method1_control(Vector::Constant(1, u_tilde), Q, ctx.delta_hat)(0);
      }
    }
    diag.u_tilde = u_tilde;
    have_last = true;
    last_u = u;
    last_u_tilde = u_tilde;
    return Vector::Constant(1, u);
  };

  const std::vector<std::string>& cols = acc_trace_columns();
  TraceHook hook{std::vector<std::string>(cols.begin() + 3, cols.end()), [&](const StepRecord& r, std::span<double> o) {
                   const Vector e = r.delta_true - r.delta_hat;
                   const double h = sc.h(r.x);
                   o[0] = r.u(0);
                   o[1] = diag.u_tilde;
                   o[2] = diag.delta_c;
                   o[3] = h;
                   o[4] = h_V(h, sc.sigma_V, e);
                   o[5] = V(r.x);
                   o[6] = r.delta_true(0);
                   o[7] = r.delta_hat(0);
                   o[8] = e.norm();
                   o[9] = error_bound(gain, sc.delta_L, sc.delta_b, r.t);
                   o[10] = output_bound(gain, sc.delta_b, r.t);
                   o[11] = diag.status;
                 }};

  SimulationOptions opt;
  opt.estimator = gain;
  opt.state_names = {"v_f", "D"};
  opt.log_delta = false;
  opt.seed = seed;
  auto finish = [&](SimulationTrace& tr) {
    tr.constraint_labels = {cbf_label, labels::clf_relaxed};
    tr.metrics["qp_fault_count"] = faults;
    tr.metrics["max_kkt_residual"] = max_kkt;
    tr.metrics["qp_solves"] = solves;
  };
  try {
    SimulationTrace tr = simulate(sys, sc.x0, controller, cfg, {hook}, opt);
    finish(tr);
    return tr;
  } catch (IntegrationFault& f) {
    finish(f.partial);
    throw;
  }
}

}  // namespace rcbf
