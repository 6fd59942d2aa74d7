#include "rcbf/errors.hpp"
#include "rcbf/estimator.hpp"
#include "rcbf/harness.hpp"
#include "rcbf/qp.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace rcbf;

#ifndef RCBF_VERSION
#define RCBF_VERSION "0.0.0"
#endif

namespace {

RunConfig make_config(const std::string& scenario, const std::string& mode,
                      const std::map<std::string, std::string>& overrides, std::optional<double> dt,
                      std::optional<double> t_final) {
  RunConfig cfg = default_config(parse_scenario_kind(scenario), mode);
  for (const auto& [k, v] : overrides) apply_override(cfg.parameters, k, v);
  if (dt) cfg.dt = *dt;
  if (t_final) cfg.t_final = *t_final;
  cfg.validate();
  return cfg;
}

py::dict trace_dict(const SimulationTrace& tr) {
  Matrix data(static_cast<Eigen::Index>(tr.size()), static_cast<Eigen::Index>(tr.columns().size()));
  for (std::size_t k = 0; k < tr.size(); ++k) {
    for (std::size_t j = 0; j < tr.columns().size(); ++j) data(k, j) = tr.at(k, j);
  }
  py::dict d;
  d["columns"] = tr.columns();
  d["data"] = data;
  d["seed"] = tr.seed;
  d["events"] = tr.events;
  d["metrics"] = tr.metrics;
  d["constraint_labels"] = tr.constraint_labels;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = RCBF_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SolverFault>(m, "SolverFault", PyExc_RuntimeError);
  py::register_exception<ScenarioFault>(m, "ScenarioFault", PyExc_RuntimeError);
  py::register_exception<MatchingError>(m, "MatchingError", PyExc_RuntimeError);
  py::register_exception<IntegrationFault>(m, "IntegrationFault", PyExc_RuntimeError);

  py::class_<EstimatorGain>(m, "EstimatorGain")
      .def_readonly("lambda_", &EstimatorGain::lambda)
      .def_readonly("lambda_min", &EstimatorGain::lambda_min)
      .def_readonly("lambda_max", &EstimatorGain::lambda_max)
      .def_readonly("P", &EstimatorGain::P)
      .def_readonly("P_norm", &EstimatorGain::P_norm)
      .def_readonly("script_P", &EstimatorGain::script_P)
      .def_readonly("mu_e", &EstimatorGain::mu_e)
      .def_readonly("gamma_deltaL", &EstimatorGain::gamma_deltaL);

  m.def("make_gain", &make_gain, py::arg("lambdas"), py::arg("delta_L"));
  m.def("error_bound", &error_bound, py::arg("gain"), py::arg("delta_L"), py::arg("delta_b"), py::arg("t"));
  m.def("output_bound", &output_bound, py::arg("gain"), py::arg("delta_b"), py::arg("t"));
  m.def("lyapunov_residual", &lyapunov_residual, py::arg("gain"));

  m.def(
      "solve_qp",
      [](const Vector& weights, const Vector& ref, const Matrix& A, const Vector& b, std::optional<Vector> lower,
         std::optional<Vector> upper) {
        QpProblem p;
        p.dim = static_cast<int>(ref.size());
        p.hessian_diag = weights;
        p.linear_ref = ref;
        if (A.rows() != b.size()) throw ConfigError("solve_qp: A and b have different row counts");
        for (Eigen::Index i = 0; i < A.rows(); ++i) p.constraints.push_back({A.row(i).transpose(), b(i), ""});
        if (lower || upper) {
          const double inf = std::numeric_limits<double>::infinity();
          p.box = BoxBounds{lower.value_or(Vector::Constant(p.dim, -inf)), upper.value_or(Vector::Constant(p.dim, inf))};
        }
        const QpSolution s = solve(p);
        py::dict d;
        d["status"] = to_string(s.status);
        d["u"] = s.u_star;
        d["multipliers"] = s.multipliers;
        d["active_set"] = s.active_set;
        d["kkt_residual"] = s.kkt_residual;
        d["farkas"] = s.farkas;
        return d;
      },
      py::arg("weights"), py::arg("ref"), py::arg("A"), py::arg("b"), py::arg("lower") = py::none(),
      py::arg("upper") = py::none(),
      "minimize 1/2 sum w_i (u_i - ref_i)^2 subject to A u >= b and optional box bounds");

  m.def(
      "resolved_config",
      [](const std::string& scenario, const std::string& mode, const std::map<std::string, std::string>& overrides) {
        return config_to_json(make_config(scenario, mode, overrides, std::nullopt, std::nullopt));
      },
      py::arg("scenario"), py::arg("mode"), py::arg("overrides") = std::map<std::string, std::string>{});
  m.def(
      "parse_config", [](const std::string& text) { return config_to_json(parse_config(text)); }, py::arg("text"),
      "validate a JSON run configuration and return it fully resolved");

  m.def(
      "run_scenario",
      [](const std::string& scenario, const std::string& mode, std::uint64_t seed,
         const std::map<std::string, std::string>& overrides, std::optional<double> dt,
         std::optional<double> t_final) {
        const RunConfig cfg = make_config(scenario, mode, overrides, dt, t_final);
        SimulationTrace tr;
        {
          py::gil_scoped_release release;
          tr = run_scenario(cfg, seed);
        }
        return trace_dict(tr);
      },
      py::arg("scenario"), py::arg("mode"), py::arg("seed") = 0,
      py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("dt") = py::none(),
      py::arg("t_final") = py::none(),
      "simulate one seed; returns columns, data (rows x columns), events and metrics");

  m.def(
      "probe_bounds",
      [](const std::string& scenario, const std::string& mode, std::size_t runs, double burn_in,
         std::optional<double> t_final) {
        const RunConfig cfg = make_config(scenario, mode, {}, std::nullopt, t_final);
        ProbeEstimate e;
        {
          py::gil_scoped_release release;
          e = probe_scenario(cfg, runs, burn_in);
        }
        return py::make_tuple(e.delta_b, e.delta_L);
      },
      py::arg("scenario"), py::arg("mode"), py::arg("runs") = 10, py::arg("burn_in") = 0.0,
      py::arg("t_final") = py::none(), "observed (delta_b, delta_L) over seeds 0..runs-1");
}
