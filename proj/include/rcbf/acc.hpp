#pragma once

#include "rcbf/dynamics.hpp"
#include "rcbf/estimator.hpp"
#include "rcbf/filters.hpp"
#include "rcbf/simulate.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rcbf {

enum class AccMode { nominal, method1, method1_alt, method2, unprotected };

AccMode parse_acc_mode(const std::string& s);
const char* to_string(AccMode m);
bool is_robust(AccMode m);

/// Δ_1(x,u,t) = amplitude·sin(ω t)/M + drag_fraction·F_r(v_f)/M + mass_fraction·u/M, Δ_2 = 0.
struct AccUncertainty {
  double amplitude = 2.0;
  double omega = 2.0 * 3.14159265358979323846;
  double drag_fraction = 0.2;
  double mass_fraction = 0.5;
};

/// Seed 0 returns `base` unchanged. Other seeds draw amplitude ∈ [0, A], ω ∈ [ω/2, ω],
/// drag_fraction ∈ [0, d], mass_fraction ∈ [0, m] uniformly, with (A, ω, d, m) taken from `base`.
AccUncertainty acc_uncertainty_draw(std::uint64_t seed, const AccUncertainty& base = {});

struct AccScenario {
  double M = 1650.0;
  double f0 = 0.1;
  double f1 = 5.0;
  double f2 = 0.25;
  double tau_d = 1.2;
  double v_l = 12.0;
  double v_d = 11.95;
  Vector x0 = (Vector(2) << 18.0, 24.0).finished();  ///< (v_f, D)

  AccUncertainty uncertainty;
  bool uncertainty_enabled = true;

  std::vector<double> lambda{100.0, 100.0};
  double delta_L = 26.0;
  double delta_b = 12.0;
  double mu_h = 1.0;
  double sigma_V = 0.1;
  double alpha = 1.0;       ///< class-K gain of the nominal / Method 2 rows
  double clf_rate = 0.7;
  double p_c = 100.0;
  double k_p = 0.3;         ///< proportional gain of the reference controller k_d [1/s]

  double drag(double v) const { return f0 + f1 * v + f2 * v * v; }
  double h(const Vector& x) const { return x(1) - tau_d * x(0); }

  ControlAffineModel model() const;
  UncertaintySpec uncertainty_spec() const;
  TrueSystem true_system(bool with_uncertainty) const;
  BarrierFunction barrier() const;
  EstimatorGain gain() const;
  /// k_d(x) = F_r(v_f) − M k_p (v_f − v_d).
  double reference_control(const Vector& x) const;

  /// Throws ConfigError when M, τ_d, gains are nonpositive or h(x0) < 0.
  void validate() const;
};

AccScenario acc_defaults();

/// Columns of the ACC trace (in order).
const std::vector<std::string>& acc_trace_columns();

SimulationTrace run_acc(const AccScenario& sc, AccMode mode, const IntegratorConfig& cfg, std::uint64_t seed = 0);

}  // namespace rcbf
