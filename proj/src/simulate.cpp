#include "rcbf/simulate.hpp"

#include "rcbf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rcbf {

namespace {

std::vector<std::string> build_columns(int n, const std::vector<TraceHook>& hooks, const SimulationOptions& opt) {
  std::vector<std::string> cols{"t"};
  if (opt.log_state) {
    if (!opt.state_names.empty()) {
      if (static_cast<int>(opt.state_names.size()) != n) throw ConfigError("state_names size does not match n");
      cols.insert(cols.end(), opt.state_names.begin(), opt.state_names.end());
    } else {
      for (int i = 1; i <= n; ++i) cols.push_back("x_" + std::to_string(i));
    }
  }
  if (opt.log_delta) {
    for (int i = 1; i <= n; ++i) cols.push_back("delta_true_" + std::to_string(i));
    for (int i = 1; i <= n; ++i) cols.push_back("delta_hat_" + std::to_string(i));
  }
  for (const auto& h : hooks) cols.insert(cols.end(), h.columns.begin(), h.columns.end());
  return cols;
}

}  // namespace

SimulationTrace simulate(const TrueSystem& sys, const Vector& x0, const Controller& controller,
                         const IntegratorConfig& cfg, const std::vector<TraceHook>& hooks,
                         const SimulationOptions& options) {
  cfg.validate();
  const int n = sys.nominal.n;
  const int m = sys.nominal.m;
  if (x0.size() != n) throw ConfigError("simulate: x0 has wrong dimension");
  const bool with_est = options.estimator.has_value();
  if (with_est && options.estimator->dim() != n) throw ConfigError("simulate: estimator gain dimension differs from n");

  SimulationTrace trace(build_columns(n, hooks, options));
  trace.seed = options.seed;
  const std::size_t N = cfg.steps();
  trace.reserve_rows(N + 1);
  std::vector<double> row(trace.columns().size());

  Vector x = x0;
  Vector xi = with_est ? Vector(options.estimator->lambda.cwiseProduct(x0)) : Vector::Zero(n);
  Vector delta_hat = Vector::Zero(n);
  bool checked = false;

  // Stacked (x, ξ) derivative with u frozen over the step.
  Vector u_hold;
  const Derivative stacked = [&](double t, const Vector& s) -> Vector {
    const Vector xs = s.head(n);
    const Vector fg = sys.nominal.f_hat(xs) + sys.nominal.g_hat(xs) * u_hold;
    Vector out(with_est ? 2 * n : n);
    out.head(n) = fg + sys.uncertainty.evaluate(xs, u_hold, t);
    if (with_est) {
      const auto& lam = options.estimator->lambda;
      out.tail(n) = lam.cwiseProduct(fg + lam.cwiseProduct(xs) - s.tail(n));
    }
    return out;
  };

  for (std::size_t k = 0; k <= N; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    if (with_est) delta_hat = estimator_output(*options.estimator, xi, x);
    Vector u;
    try {
      u = controller(StepContext{t, x, delta_hat, xi, trace.events});
    } catch (const IntegrationFault&) {
      throw;
    } catch (const std::runtime_error& e) {
      // Scenario and solver faults end the run but keep the rows logged so far.
      IntegrationFault f(t, e.what());
      f.partial = trace;
      throw f;
    }
    if (u.size() != m) throw ConfigError("controller returned a control of wrong dimension");
    if (!checked) {
      sys.check_dimensions(x, u);
      checked = true;
    }
    const Vector delta_true = sys.uncertainty.evaluate(x, u, t);

    std::size_t c = 0;
    row[c++] = t;
    if (options.log_state) {
      for (int i = 0; i < n; ++i) row[c++] = x(i);
    }
    if (options.log_delta) {
      for (int i = 0; i < n; ++i) row[c++] = delta_true(i);
      for (int i = 0; i < n; ++i) row[c++] = delta_hat(i);
    }
    const StepRecord rec{t, x, u, delta_true, delta_hat, xi};
    for (const auto& h : hooks) {
      h.record(rec, std::span<double>(row.data() + c, h.columns.size()));
      c += h.columns.size();
    }
    trace.append_row(row);
    if (k == N) break;

    u_hold = std::move(u);
    Vector s(with_est ? 2 * n : n);
    s.head(n) = x;
    if (with_est) s.tail(n) = xi;
    try {
      s = rk4_step(stacked, s, t, cfg.dt);
    } catch (IntegrationFault& f) {
      f.partial = trace;
      throw;
    } catch (const std::runtime_error& e) {
      IntegrationFault f(t, e.what());
      f.partial = trace;
      throw f;
    }
    x = s.head(n);
    if (with_est) xi = s.tail(n);
  }
  return trace;
}

ProbeEstimate probe_uncertainty_bounds(const TrueSystem& sys, const ProbeSampler& sampler, std::size_t n_runs,
                                       const IntegratorConfig& cfg) {
  if (n_runs < 1) throw ConfigError("probe needs at least one run");
  ProbeEstimate est;
  for (std::size_t r = 0; r < n_runs; ++r) {
    ProbeCase pc = sampler(r);
    const TrueSystem& s = pc.system ? *pc.system : sys;
    Vector prev;
    bool have_prev = false;
    TraceHook hook{{}, [&](const StepRecord& rec, std::span<double>) {
                     est.delta_b = std::max(est.delta_b, rec.delta_true.norm());
                     if (have_prev) est.delta_L = std::max(est.delta_L, (rec.delta_true - prev).norm() / cfg.dt);
                     prev = rec.delta_true;
                     have_prev = true;
                   }};
    SimulationOptions opt;
    opt.estimator = pc.estimator;
    opt.log_state = false;
    opt.log_delta = false;
    simulate(s, pc.x0, pc.controller, cfg, {hook}, opt);
  }
  return est;
}

}  // namespace rcbf
