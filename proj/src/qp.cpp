#include "rcbf/qp.hpp"

#include "rcbf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rcbf {

namespace {

struct ScaledRows {
  Matrix A;                   // d × p, unit columns
  Vector b;                   // p
  Vector scale;               // ‖√w⁻¹ a_i‖ per original row
  std::vector<std::size_t> map;  // scaled column -> original row index
  std::vector<std::size_t> vacuous_zero;  // zero rows with b ≤ 0
  std::optional<std::size_t> contradictory;  // zero row with b > 0
};

struct RawRow {
  Vector a;
  double b;
};

std::vector<RawRow> collect_rows(const QpProblem& p) {
  std::vector<RawRow> rows;
  rows.reserve(p.constraints.size() + (p.box ? 2 * p.dim : 0));
  for (const auto& c : p.constraints) rows.push_back({c.a, c.b});
  if (p.box) {
    for (int i = 0; i < p.dim; ++i) {
      Vector e = Vector::Zero(p.dim);
      e(i) = 1.0;
      rows.push_back({e, p.box->lower(i)});
      rows.push_back({-e, -p.box->upper(i)});
    }
  }
  return rows;
}

ScaledRows scale_rows(const QpProblem& p, const std::vector<RawRow>& rows) {
  const Vector isw = p.hessian_diag.cwiseSqrt().cwiseInverse();
  ScaledRows s;
  s.A.resize(p.dim, static_cast<Eigen::Index>(rows.size()));
  s.b.resize(static_cast<Eigen::Index>(rows.size()));
  s.scale = Vector::Zero(static_cast<Eigen::Index>(rows.size()));
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector at = rows[i].a.cwiseProduct(isw);
    const double nrm = at.norm();
    const double bt = rows[i].b - rows[i].a.dot(p.linear_ref);
    s.scale(static_cast<Eigen::Index>(i)) = nrm;
    if (nrm == 0.0) {
      if (bt > 0.0 && !s.contradictory) s.contradictory = i;
      if (bt <= 0.0) s.vacuous_zero.push_back(i);
      continue;
    }
    s.A.col(col) = at / nrm;
    s.b(col) = bt / nrm;
    s.map.push_back(i);
    ++col;
  }
  s.A.conservativeResize(Eigen::NoChange, col);
  s.b.conservativeResize(col);
  return s;
}

// Solves min ‖E_P s − f‖ over the passive columns.
Vector passive_ls(const Matrix& E, const Vector& f, const std::vector<Eigen::Index>& P) {
  Matrix Ep(E.rows(), static_cast<Eigen::Index>(P.size()));
  for (std::size_t j = 0; j < P.size(); ++j) Ep.col(static_cast<Eigen::Index>(j)) = E.col(P[j]);
  Eigen::ColPivHouseholderQR<Matrix> qr(Ep);
  if (qr.rank() < Ep.cols()) throw SolverFault("qp: dependent active rows");
  return qr.solve(f);
}

// Lawson–Hanson NNLS, optionally seeded with a passive set.
Vector nnls(const Matrix& E, const Vector& f, std::vector<Eigen::Index> passive, int& iterations) {
  const Eigen::Index p = E.cols();
  Vector y = Vector::Zero(p);
  std::vector<bool> inP(static_cast<std::size_t>(p), false);

  if (!passive.empty()) {
    bool ok = true;
    Vector s;
    try {
      s = passive_ls(E, f, passive);
    } catch (const SolverFault&) {
      ok = false;
    }
    if (ok) ok = (s.array() > 0.0).all();
    if (ok) {
      for (std::size_t j = 0; j < passive.size(); ++j) {
        y(passive[j]) = s(static_cast<Eigen::Index>(j));
        inP[static_cast<std::size_t>(passive[j])] = true;
      }
    } else {
      passive.clear();
    }
  }

  const double tol = 1e-13 * std::max(1.0, E.cwiseAbs().maxCoeff());
  const int max_outer = 3 * static_cast<int>(p) + 20;
  for (int outer = 0;; ++outer) {
    if (outer > max_outer) throw SolverFault("qp: active-set iteration limit");
    ++iterations;
    const Vector w = E.transpose() * (f - E * y);
    Eigen::Index t = -1;
    double best = tol;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!inP[static_cast<std::size_t>(j)] && w(j) > best) {
        best = w(j);
        t = j;
      }
    }
    if (t < 0) break;
    passive.push_back(t);
    inP[static_cast<std::size_t>(t)] = true;

    for (int inner = 0;; ++inner) {
      if (inner > max_outer) throw SolverFault("qp: active-set inner iteration limit");
      const Vector s = passive_ls(E, f, passive);
      if (!s.allFinite()) throw SolverFault("qp: non-finite least-squares step");
      if ((s.array() > 0.0).all()) {
        for (std::size_t j = 0; j < passive.size(); ++j) y(passive[j]) = s(static_cast<Eigen::Index>(j));
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < passive.size(); ++j) {
        const double sj = s(static_cast<Eigen::Index>(j));
        if (sj <= 0.0) {
          const double yj = y(passive[j]);
          alpha = std::min(alpha, yj / (yj - sj));
        }
      }
      for (std::size_t j = 0; j < passive.size(); ++j) {
        const Eigen::Index c = passive[j];
        y(c) += alpha * (s(static_cast<Eigen::Index>(j)) - y(c));
      }
      std::vector<Eigen::Index> keep;
      for (const Eigen::Index c : passive) {
        if (y(c) > tol) {
          keep.push_back(c);
        } else {
          y(c) = 0.0;
          inP[static_cast<std::size_t>(c)] = false;
        }
      }
      passive.swap(keep);
      if (passive.empty()) break;
    }
  }
  return y;
}

}  // namespace

const char* to_string(QpStatus s) { return s == QpStatus::optimal ? "optimal" : "infeasible"; }

void QpProblem::validate() const {
  if (dim <= 0) throw ConfigError("qp: dim must be positive");
  if (hessian_diag.size() != dim || linear_ref.size() != dim) throw ConfigError("qp: weight/reference size mismatch");
  if (!((hessian_diag.array() > 0.0).all()) || !hessian_diag.allFinite()) {
    throw ConfigError("qp: hessian_diag entries must be positive");
  }
  for (const auto& c : constraints) {
    if (c.a.size() != dim) throw ConfigError("qp: constraint '" + c.label + "' has wrong width");
  }
  if (box && (box->lower.size() != dim || box->upper.size() != dim)) throw ConfigError("qp: box size mismatch");
}

QpSolution solve(const QpProblem& p, const std::vector<std::size_t>* warm_start) {
  p.validate();
  if (!p.linear_ref.allFinite()) throw SolverFault("qp: non-finite reference");
  for (const auto& c : p.constraints) {
    if (!c.a.allFinite() || !std::isfinite(c.b)) throw SolverFault("qp: non-finite row '" + c.label + "'");
  }

  const std::vector<RawRow> rows = collect_rows(p);
  const ScaledRows s = scale_rows(p, rows);
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  QpSolution sol;
  sol.multipliers = Vector::Zero(n_rows);

  if (s.contradictory) {
    sol.status = QpStatus::infeasible;
    sol.u_star = p.linear_ref;
    sol.farkas = Vector::Zero(n_rows);
    sol.farkas(static_cast<Eigen::Index>(*s.contradictory)) = 1.0;
    return sol;
  }

  const Eigen::Index d = p.dim;
  const Eigen::Index q = s.A.cols();
  if (q == 0) {
    sol.u_star = p.linear_ref;
    sol.kkt_residual = kkt_residual(p, sol.u_star, sol.multipliers);
    return sol;
  }

  // Least-distance dual: min ‖E y − f‖, y ≥ 0, E = [A; bᵀ], f = e_{d+1}.
  Matrix E(d + 1, q);
  E.topRows(d) = s.A;
  E.row(d) = s.b.transpose();
  Vector f = Vector::Zero(d + 1);
  f(d) = 1.0;

  std::vector<Eigen::Index> seed;
  if (warm_start) {
    for (const std::size_t orig : *warm_start) {
      const auto it = std::find(s.map.begin(), s.map.end(), orig);
      if (it != s.map.end()) seed.push_back(static_cast<Eigen::Index>(it - s.map.begin()));
    }
  }
  const Vector y = nnls(E, f, seed, sol.iterations);
  const Vector r = E * y - f;

  if (r.norm() <= 1e-10 || -r(d) <= 1e-12) {
    sol.status = QpStatus::infeasible;
    sol.u_star = p.linear_ref;
    sol.farkas = Vector::Zero(n_rows);
    for (Eigen::Index j = 0; j < q; ++j) {
      sol.farkas(static_cast<Eigen::Index>(s.map[static_cast<std::size_t>(j)])) = y(j) / s.scale(static_cast<Eigen::Index>(s.map[static_cast<std::size_t>(j)]));
    }
    return sol;
  }

  const double denom = -r(d);
  Vector z = r.head(d) / denom;
  Vector lam = y / denom;

  // Re-solve the primal on the identified active set; the dual recovery loses digits when z is large.
  std::vector<Eigen::Index> act;
  for (Eigen::Index j = 0; j < q; ++j) {
    if (lam(j) > 0.0) act.push_back(j);
  }
  if (!act.empty() && static_cast<Eigen::Index>(act.size()) <= d) {
    Matrix Ap(d, static_cast<Eigen::Index>(act.size()));
    Vector bp(static_cast<Eigen::Index>(act.size()));
    for (std::size_t j = 0; j < act.size(); ++j) {
      Ap.col(static_cast<Eigen::Index>(j)) = s.A.col(act[j]);
      bp(static_cast<Eigen::Index>(j)) = s.b(act[j]);
    }
    const Eigen::ColPivHouseholderQR<Matrix> qr(Ap.transpose() * Ap);
    if (qr.rank() == Ap.cols()) {
      const Vector yr = qr.solve(bp);
      const Vector zr = Ap * yr;
      const bool dual_ok = (yr.array() > 0.0).all();
      const bool primal_ok = ((s.A.transpose() * zr - s.b).array() >= -1e-12).all();
      if (dual_ok && primal_ok && zr.allFinite()) {
        z = zr;
        lam.setZero();
        for (std::size_t j = 0; j < act.size(); ++j) lam(act[j]) = yr(static_cast<Eigen::Index>(j));
      }
    }
  }
  const Vector isw = p.hessian_diag.cwiseSqrt().cwiseInverse();
  sol.u_star = p.linear_ref + z.cwiseProduct(isw);
  for (Eigen::Index j = 0; j < q; ++j) {
    const auto orig = s.map[static_cast<std::size_t>(j)];
    if (lam(j) > 0.0) {
      sol.multipliers(static_cast<Eigen::Index>(orig)) = lam(j) / s.scale(static_cast<Eigen::Index>(orig));
      sol.active_set.push_back(orig);
    }
  }
  std::sort(sol.active_set.begin(), sol.active_set.end());
  if (!sol.u_star.allFinite()) throw SolverFault("qp: non-finite solution");
  sol.kkt_residual = kkt_residual(p, sol.u_star, sol.multipliers);
  return sol;
}

double kkt_residual(const QpProblem& p, const Vector& u, const Vector& multipliers) {
  const std::vector<RawRow> rows = collect_rows(p);
  if (multipliers.size() != static_cast<Eigen::Index>(rows.size())) {
    throw ConfigError("kkt_residual: multiplier count does not match rows");
  }
  const Vector sw = p.hessian_diag.cwiseSqrt();
  const Vector z = sw.cwiseProduct(u - p.linear_ref);
  Vector grad = z;
  double res = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector at = rows[i].a.cwiseQuotient(sw);
    const double nrm = at.norm();
    const double mu = multipliers(static_cast<Eigen::Index>(i));
    if (nrm == 0.0) {
      res = std::max(res, std::max(0.0, rows[i].b));
      continue;
    }
    const double lam = mu * nrm;
    const double slack = (rows[i].a.dot(u) - rows[i].b) / nrm;
    grad -= lam * at / nrm;
    res = std::max(res, std::max(0.0, -slack));
    res = std::max(res, std::max(0.0, -lam));
    res = std::max(res, std::abs(lam * slack));
  }
  res = std::max(res, grad.cwiseAbs().maxCoeff());
  return res;
}

Vector oracle_project(const Vector& kd, const AffineConstraint& c) {
  const double nn = c.a.squaredNorm();
  if (nn == 0.0) throw ConfigError("oracle_project: zero row");
  const double viol = c.b - c.a.dot(kd);
  if (viol <= 0.0) return kd;
  return kd + c.a * (viol / nn);
}

}  // namespace rcbf
