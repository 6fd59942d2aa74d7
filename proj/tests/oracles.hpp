#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include "rcbf/dynamics.hpp"
#include "rcbf/qp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

using rcbf::Matrix;
using rcbf::Vector;

// Enumerates every active set and keeps the feasible KKT point with the smallest cost.
// Exponential in the row count; meant for m ≤ 6.
inline std::optional<Vector> brute_force_qp(const rcbf::QpProblem& p) {
  std::vector<rcbf::AffineConstraint> rows = p.constraints;
  if (p.box) {
    for (int i = 0; i < p.dim; ++i) {
      Vector e = Vector::Zero(p.dim);
      e(i) = 1.0;
      rows.push_back({e, p.box->lower(i), ""});
      rows.push_back({-e, -p.box->upper(i), ""});
    }
  }
  const int m = static_cast<int>(rows.size());
  const Matrix W = p.hessian_diag.asDiagonal();
  std::optional<Vector> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      if (mask & (1 << i)) act.push_back(i);
    }
    const int k = static_cast<int>(act.size());
    if (k > p.dim) continue;
    Matrix K = Matrix::Zero(p.dim + k, p.dim + k);
    Vector r = Vector::Zero(p.dim + k);
    K.topLeftCorner(p.dim, p.dim) = W;
    r.head(p.dim) = W * p.linear_ref;
    for (int j = 0; j < k; ++j) {
      K.block(0, p.dim + j, p.dim, 1) = -rows[act[j]].a;
      K.block(p.dim + j, 0, 1, p.dim) = rows[act[j]].a.transpose();
      r(p.dim + j) = rows[act[j]].b;
    }
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible()) continue;
    const Vector s = lu.solve(r);
    const Vector u = s.head(p.dim);
    bool ok = (s.tail(k).array() >= -1e-10).all();
    for (int i = 0; i < m && ok; ++i) ok = rows[i].a.dot(u) >= rows[i].b - 1e-9;
    if (!ok) continue;
    const double cost = 0.5 * (u - p.linear_ref).dot(W * (u - p.linear_ref));
    if (cost < best_cost - 1e-14) {
      best_cost = cost;
      best = u;
    }
  }
  return best;
}

inline double qp_cost(const rcbf::QpProblem& p, const Vector& u) {
  const Vector d = u - p.linear_ref;
  return 0.5 * d.dot(p.hessian_diag.cwiseProduct(d));
}

// x(t) for ẋ = a x.
inline double exp_solution(double a, double x0, double t) { return x0 * std::exp(a * t); }

// Estimator output for scalar ẋ = c (constant lumped disturbance), Δ̂(0) = 0.
inline double constant_disturbance_estimate(double c, double lambda, double t) {
  return c * (1.0 - std::exp(-lambda * t));
}

inline Vector random_vector(std::mt19937_64& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

}  // namespace oracle
