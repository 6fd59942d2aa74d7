#pragma once

#include "rcbf/dynamics.hpp"
#include "rcbf/estimator.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rcbf {

/// What a controller sees at sample t_k = k·dt. `delta_hat` is zero when no estimator runs.
struct StepContext {
  double t;
  const Vector& x;
  const Vector& delta_hat;
  const Vector& xi;
  std::vector<std::string>& events;
};

/// Evaluated once per sample; the result is held constant over [t_k, t_{k+1}).
using Controller = std::function<Vector(const StepContext&)>;

struct StepRecord {
  double t;
  const Vector& x;
  const Vector& u;
  const Vector& delta_true;
  const Vector& delta_hat;
  const Vector& xi;
};

/// Appends `columns.size()` values per sample. Hooks run in declaration order after the controller.
struct TraceHook {
  std::vector<std::string> columns;
  std::function<void(const StepRecord&, std::span<double>)> record;
};

struct SimulationOptions {
  /// When set, ξ is co-integrated with the plant and Δ̂ = Λx − ξ is fed to the controller.
  std::optional<EstimatorGain> estimator;
  std::vector<std::string> state_names;  ///< defaults to x_1..x_n
  bool log_state = true;
  bool log_delta = true;  ///< delta_true_i, delta_hat_i
  std::uint64_t seed = 0;
};

/// Fixed-step closed-loop simulation with zero-order hold on u. Produces steps()+1 rows.
SimulationTrace simulate(const TrueSystem& sys, const Vector& x0, const Controller& controller,
                         const IntegratorConfig& cfg, const std::vector<TraceHook>& hooks = {},
                         const SimulationOptions& options = {});

struct ProbeCase {
  Vector x0;
  Controller controller;
  std::optional<TrueSystem> system;  ///< overrides the probe's base system for this run
  std::optional<EstimatorGain> estimator;
};

using ProbeSampler = std::function<ProbeCase(std::size_t run_index)>;

struct ProbeEstimate {
  double delta_b = 0.0;
  double delta_L = 0.0;
};

/// Max ‖Δ‖ and max forward-difference ‖Δ̇‖ over `n_runs` sampled closed loops.
ProbeEstimate probe_uncertainty_bounds(const TrueSystem& sys, const ProbeSampler& sampler, std::size_t n_runs,
                                       const IntegratorConfig& cfg);

}  // namespace rcbf
