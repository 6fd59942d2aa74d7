#include "rcbf/estimator.hpp"

#include "rcbf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace rcbf {

EstimatorGain make_gain(const std::vector<double>& lambdas, double delta_L) {
  if (lambdas.empty()) throw ConfigError("estimator gain needs at least one entry");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || !std::isfinite(lambdas[i])) {
      throw ConfigError("estimator lambda[" + std::to_string(i) + "] must be positive");
    }
  }
  if (!(delta_L >= 0.0)) throw ConfigError("delta_L must be nonnegative");

  EstimatorGain g;
  const int n = static_cast<int>(lambdas.size());
  g.lambda = Eigen::Map<const Vector>(lambdas.data(), n);
  g.lambda_min = g.lambda.minCoeff();
  g.lambda_max = g.lambda.maxCoeff();
  g.P = (0.5 * g.lambda.cwiseInverse()).asDiagonal();
  g.P_norm = 0.5 / g.lambda_min;
  g.P_inv_norm = 2.0 * g.lambda_max;
  g.script_P = std::sqrt(g.P_inv_norm * g.P_norm);
  g.mu_e = g.lambda_min / 4.0;
  g.gamma_deltaL = delta_L * delta_L / (2.0 * g.lambda_min);

  if (lyapunov_residual(g) > 1e-12) throw ConfigError("estimator Lyapunov residual above 1e-12");
  return g;
}

Matrix solve_lyapunov_dense(const Matrix& A, const Matrix& Q) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n) throw ConfigError("lyapunov: square n x n inputs required");
  // vec(PA + AᵀP) = (Aᵀ ⊗ I + I ⊗ Aᵀ) vec(P), column-major vec.
  const Matrix I = Matrix::Identity(n, n);
  Matrix K = Matrix::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n) += A(j, i) * I;
      if (i == j) K.block(i * n, j * n, n, n) += A.transpose();
    }
  }
  const Vector rhs = -Eigen::Map<const Vector>(Q.data(), n * n);
  const Vector p = K.fullPivLu().solve(rhs);
  Matrix P = Eigen::Map<const Matrix>(p.data(), n, n);
  return 0.5 * (P + P.transpose());
}

double lyapunov_residual(const EstimatorGain& gain) {
  const Matrix A = -Matrix(gain.lambda.asDiagonal());
  const Matrix R = gain.P * A + A.transpose() * gain.P + Matrix::Identity(gain.dim(), gain.dim());
  return R.cwiseAbs().maxCoeff();
}

EstimatorState init_estimator(const EstimatorGain& gain, const Vector& x0) {
  if (x0.size() != gain.dim()) throw ConfigError("init_estimator: state dimension does not match gain");
  EstimatorState s;
  s.gain = gain;
  s.xi = gain.lambda.cwiseProduct(x0);
  s.delta_hat_cached = Vector::Zero(gain.dim());
  return s;
}

Vector estimator_output(const EstimatorGain& gain, const Vector& xi, const Vector& x) {
  return gain.lambda.cwiseProduct(x) - xi;
}

Vector estimator_output(const EstimatorState& est, const Vector& x) { return estimator_output(est.gain, est.xi, x); }

Vector estimator_derivative(const EstimatorGain& gain, const ControlAffineModel& model, const Vector& x,
                            const Vector& u, const Vector& delta_hat) {
  return gain.lambda.cwiseProduct(model.f_hat(x) + model.g_hat(x) * u + delta_hat);
}

Vector estimator_derivative(const EstimatorState& est, const ControlAffineModel& model, const Vector& x,
                            const Vector& u) {
  return estimator_derivative(est.gain, model, x, u, estimator_output(est, x));
}

double error_bound(const EstimatorGain& gain, double delta_L, double delta_b, double t) {
  if (t < 0.0) throw ConfigError("error_bound: negative time");
  const double Pn = gain.P_norm;
  const double floor = 2.0 * gain.script_P * Pn * delta_L;
  if (t == 0.0) return gain.script_P * delta_b;
  return gain.script_P * (delta_b - 2.0 * delta_L * Pn) * std::exp(-t / (2.0 * Pn)) + floor;
}

double output_bound(const EstimatorGain& gain, double delta_b, double t) {
  if (t < 0.0) throw ConfigError("output_bound: negative time");
  const double Pn = gain.P_norm;
  return 2.0 * gain.script_P * delta_b * gain.lambda_norm() * Pn * (1.0 - std::exp(-t / (2.0 * Pn)));
}

std::vector<Vector> estimation_errors(const SimulationTrace& trace) {
  std::vector<std::size_t> dt_cols, dh_cols;
  for (int i = 1;; ++i) {
    const std::string a = "delta_true_" + std::to_string(i);
    if (!trace.has_column(a)) break;
    dt_cols.push_back(trace.column_index(a));
    dh_cols.push_back(trace.column_index("delta_hat_" + std::to_string(i)));
  }
  if (dt_cols.empty()) throw std::out_of_range("trace has no delta_true_* columns");
  std::vector<Vector> out(trace.size(), Vector(static_cast<Eigen::Index>(dt_cols.size())));
  for (std::size_t k = 0; k < trace.size(); ++k) {
    for (std::size_t i = 0; i < dt_cols.size(); ++i) {
      out[k](static_cast<Eigen::Index>(i)) = trace.at(k, dt_cols[i]) - trace.at(k, dh_cols[i]);
    }
  }
  return out;
}

IssReport iss_decrement_check(const SimulationTrace& trace, const EstimatorGain& gain, double delta_L,
                              double slack) {
  IssReport rep;
  if (trace.size() < 2) return rep;
  const std::vector<double> t = trace.column("t");
  const std::vector<Vector> e = estimation_errors(trace);
  const double c = gain.lambda_min / 2.0;
  const double g = delta_L * delta_L / (2.0 * gain.lambda_min);
  rep.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < e.size(); ++k) {
    const double e0 = e[k].squaredNorm();
    const double e1 = e[k + 1].squaredNorm();
    const double vdot = 0.5 * (e1 - e0) / (t[k + 1] - t[k]);
    const double rhs = -c * 0.5 * (e0 + e1) + g;
    const double excess = vdot - rhs;
    rep.max_excess = std::max(rep.max_excess, excess);
    if (excess > slack) rep.violations.push_back(k);
    ++rep.intervals;
  }
  return rep;
}

}  // namespace rcbf
