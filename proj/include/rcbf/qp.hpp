#pragma once

#include "rcbf/dynamics.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace rcbf {

/// a·z ≥ b.
struct AffineConstraint {
  Vector a;
  double b = 0.0;
  std::string label;
};

struct BoxBounds {
  Vector lower;
  Vector upper;
};

/// minimize ½ Σ w_i (z_i − ref_i)²  subject to the rows and the optional box.
struct QpProblem {
  int dim = 0;
  Vector hessian_diag;
  Vector linear_ref;
  std::vector<AffineConstraint> constraints;
  std::optional<BoxBounds> box;

  void validate() const;
};

enum class QpStatus { optimal, infeasible };

const char* to_string(QpStatus s);

struct QpSolution {
  QpStatus status = QpStatus::optimal;
  Vector u_star;
  /// Indices of tight rows. Box rows follow the general rows: lower bound of coordinate i is
  /// constraints.size() + 2i, upper bound constraints.size() + 2i + 1.
  std::vector<std::size_t> active_set;
  /// Multipliers of the rows in the original scaling (stationarity: W(u − ref) = Σ μ_i a_i).
  Vector multipliers;
  double kkt_residual = 0.0;
  /// For infeasible problems: y ≥ 0 with Σ y_i a_i = 0 and Σ y_i b_i > 0.
  Vector farkas;
  int iterations = 0;
};

/// Dual active-set (nonnegative least squares on the least-distance dual). `warm_start` is the
/// previous active set; it is used only if its equality-constrained multipliers are nonnegative.
QpSolution solve(const QpProblem& p, const std::vector<std::size_t>* warm_start = nullptr);

/// Max of stationarity, primal/dual feasibility and complementarity violation, evaluated in the
/// scaled coordinates z = √w(u − ref) with unit-norm rows.
double kkt_residual(const QpProblem& p, const Vector& u, const Vector& multipliers);

/// Closed-form Euclidean projection of kd onto {a·u ≥ b}.
Vector oracle_project(const Vector& kd, const AffineConstraint& c);

}  // namespace rcbf
