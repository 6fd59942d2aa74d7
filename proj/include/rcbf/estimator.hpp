#pragma once

#include "rcbf/dynamics.hpp"

#include <cstddef>
#include <vector>

namespace rcbf {

/// Diagonal estimator gain Λ = diag(λ_1..λ_n) together with the quantities the
/// error/output bounds are written in.
///
/// P solves the Lyapunov equation of the error dynamics ė = −Λe + Δ̇, i.e.
/// P(−Λ) + (−Λ)ᵀP = −I, which for diagonal Λ is P = diag(1/(2λ_i)).
struct EstimatorGain {
  Vector lambda;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  Matrix P;
  double P_norm = 0.0;
  double P_inv_norm = 0.0;
  double script_P = 0.0;  ///< sqrt(‖P⁻¹‖‖P‖)
  double mu_e = 0.0;      ///< λ_min / 4
  double gamma_deltaL = 0.0;  ///< δ_L² / (2 λ_min)

  int dim() const { return static_cast<int>(lambda.size()); }
  double lambda_norm() const { return lambda_max; }
};

/// Throws ConfigError on empty or nonpositive λ, or negative δ_L.
EstimatorGain make_gain(const std::vector<double>& lambdas, double delta_L);

/// Solves PA + AᵀP = −Q by Kronecker vectorization. Validation path only: O(n⁶).
Matrix solve_lyapunov_dense(const Matrix& A, const Matrix& Q);

/// max-norm of P(−Λ) + (−Λ)ᵀP + I.
double lyapunov_residual(const EstimatorGain& gain);

struct EstimatorState {
  Vector xi;
  EstimatorGain gain;
  Vector delta_hat_cached;
};

/// ξ(0) = Λx(0), so that Δ̂(0) = 0.
EstimatorState init_estimator(const EstimatorGain& gain, const Vector& x0);

/// Δ̂ = Λx − ξ.
Vector estimator_output(const EstimatorState& est, const Vector& x);
Vector estimator_output(const EstimatorGain& gain, const Vector& xi, const Vector& x);

/// ξ̇ = Λ(f̂(x) + ĝ(x)u + Δ̂).
Vector estimator_derivative(const EstimatorState& est, const ControlAffineModel& model, const Vector& x,
                            const Vector& u);
Vector estimator_derivative(const EstimatorGain& gain, const ControlAffineModel& model, const Vector& x,
                            const Vector& u, const Vector& delta_hat);

/// ‖e(t)‖ ≤ 𝒫(δ_b − 2δ_L‖P‖)e^{−t/(2‖P‖)} + 2𝒫‖P‖δ_L.
double error_bound(const EstimatorGain& gain, double delta_L, double delta_b, double t);

/// ‖Δ̂(t)‖ ≤ 2𝒫δ_b‖Λ‖‖P‖(1 − e^{−t/(2‖P‖)}).
double output_bound(const EstimatorGain& gain, double delta_b, double t);

struct IssReport {
  std::vector<std::size_t> violations;  ///< sample index k of offending interval [k, k+1]
  double max_excess = 0.0;              ///< max over intervals of V̇_fd − rhs (may be negative)
  std::size_t intervals = 0;
};

/// Estimation errors e_k = Δ_k − Δ̂_k rebuilt from the trace's delta_true_i / delta_hat_i columns.
std::vector<Vector> estimation_errors(const SimulationTrace& trace);

/// Checks V̇_e ≤ −(λ_min/2)‖e‖² + δ_L²/(2λ_min) + slack with V_e = ½eᵀe, V̇_e by forward
/// differences and the right-hand side averaged over each interval.
IssReport iss_decrement_check(const SimulationTrace& trace, const EstimatorGain& gain, double delta_L,
                              double slack);

}  // namespace rcbf
