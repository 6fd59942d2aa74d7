#include "rcbf/filters.hpp"

#include "rcbf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace rcbf {

namespace {

RowVector central_gradient(const ScalarMap& f, const Vector& x, double step) {
  RowVector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double hi = step * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + hi;
    const double fp = f(xp);
    xp(i) = x(i) - hi;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * hi);
  }
  return g;
}

// Shared tail of every Method-2 style row, so the reductions hold bit-for-bit.
AffineConstraint robust_row(const RowVector& a, double alpha_term, double drift, const RowVector& grad,
                            const Vector& delta_hat, double bound, const char* label) {
  AffineConstraint c;
  c.a = a.transpose();
  c.b = -alpha_term - drift - grad.dot(delta_hat.transpose()) + grad.norm() * bound;
  c.label = label;
  return c;
}

}  // namespace

double gradient_check(const ScalarMap& f, const GradientMap& grad, const std::vector<Vector>& states, double step) {
  double worst = 0.0;
  for (const auto& x : states) {
    const RowVector g = grad(x);
    const RowVector fd = central_gradient(f, x, step);
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
  }
  return worst;
}

LieTerms lie_terms(const ControlAffineModel& model, const BarrierFunction& h, const Vector& x) {
  LieTerms l;
  l.h = h.h(x);
  l.grad = h.grad_h(x);
  l.Lf = l.grad.dot(model.f_hat(x).transpose());
  l.Lg = l.grad * model.g_hat(x);
  return l;
}

LieChain numeric_lie_chain(const ControlAffineModel& model, const BarrierFunction& h, int m, double step) {
  if (m < 1) throw ConfigError("lie chain order must be >= 1");
  // levels[j] evaluates L_f^j h; level 0 and its gradient come from h directly.
  auto levels = std::make_shared<std::vector<ScalarMap>>();
  auto grads = std::make_shared<std::vector<GradientMap>>();
  levels->push_back(h.h);
  grads->push_back(h.grad_h);
  for (int j = 1; j < m; ++j) {
    const GradientMap gprev = (*grads)[static_cast<std::size_t>(j - 1)];
    ScalarMap lj = [gprev, model](const Vector& x) { return gprev(x).dot(model.f_hat(x).transpose()); };
    levels->push_back(lj);
    grads->push_back([lj, step](const Vector& x) { return central_gradient(lj, x, step); });
  }
  return [levels, grads, m](const Vector& x) {
    LieChainEval e;
    for (int j = 0; j < m; ++j) {
      e.values.push_back((*levels)[static_cast<std::size_t>(j)](x));
      e.grads.push_back((*grads)[static_cast<std::size_t>(j)](x));
    }
    return e;
  };
}

HocbfCascade make_cascade(const ControlAffineModel& model, BarrierFunction h0, std::vector<double> gains,
                          LieChain chain) {
  if (gains.empty()) throw ConfigError("hocbf cascade needs at least one gain");
  for (const double k : gains) {
    if (!(k > 0.0)) throw ConfigError("hocbf gains must be positive");
  }
  HocbfCascade c;
  c.h0 = std::move(h0);
  c.gains = std::move(gains);
  c.chain = chain ? std::move(chain) : numeric_lie_chain(model, c.h0, c.order());
  return c;
}

HocbfTerms hocbf_terms(const ControlAffineModel& model, const HocbfCascade& c, const Vector& x) {
  const int m = c.order();
  const LieChainEval ev = c.chain(x);
  if (static_cast<int>(ev.values.size()) != m || static_cast<int>(ev.grads.size()) != m) {
    throw ConfigError("lie chain returned the wrong number of levels");
  }
  const Vector f = model.f_hat(x);
  // next[j] = L_f^{j+1} h
  std::vector<double> next(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) next[static_cast<std::size_t>(j)] = ev.grads[static_cast<std::size_t>(j)].dot(f.transpose());

  // coef[i] holds the coefficients of ∏_{l≤i}(s + k_l) in increasing powers.
  HocbfTerms out;
  std::vector<double> coef{1.0};
  out.phi.push_back(ev.values[0]);
  for (int i = 1; i < m; ++i) {
    std::vector<double> nc(coef.size() + 1, 0.0);
    for (std::size_t j = 0; j < coef.size(); ++j) {
      nc[j] += c.gains[static_cast<std::size_t>(i - 1)] * coef[j];
      nc[j + 1] += coef[j];
    }
    coef.swap(nc);
    double phi = 0.0;
    for (std::size_t j = 0; j < coef.size(); ++j) phi += coef[j] * ev.values[j];
    out.phi.push_back(phi);
  }
  double residual = 0.0;
  for (int j = 0; j + 1 < m; ++j) residual += coef[static_cast<std::size_t>(j)] * next[static_cast<std::size_t>(j)];
  out.residual = residual;
  out.Lf_m = next[static_cast<std::size_t>(m - 1)];
  out.grad_top = ev.grads[static_cast<std::size_t>(m - 1)];
  out.Lg_Lf_m1 = out.grad_top * model.g_hat(x);
  return out;
}

void validate_cascade(const ControlAffineModel& model, const HocbfCascade& c, const std::vector<Vector>& states,
                      double tol) {
  const int m = c.order();
  for (const auto& x : states) {
    const LieChainEval ev = c.chain(x);
    const Vector f = model.f_hat(x);
    const Matrix g = model.g_hat(x);
    for (int j = 0; j < m; ++j) {
      const auto J = static_cast<std::size_t>(j);
      const ScalarMap level = [&c, J](const Vector& y) { return c.chain(y).values[J]; };
      const RowVector fd = central_gradient(level, x, 1e-6);
      const double err = (ev.grads[J] - fd).norm() / std::max(1.0, ev.grads[J].norm());
      if (err > tol) {
        std::ostringstream os;
        os << "hocbf cascade: gradient of level " << j << " disagrees with finite differences (rel " << err << ")";
        throw ConfigError(os.str());
      }
      if (j + 1 < m) {
        const double lf = ev.grads[J].dot(f.transpose());
        if (std::abs(lf - ev.values[J + 1]) > tol * std::max(1.0, std::abs(lf))) {
          throw ConfigError("hocbf cascade: level " + std::to_string(j + 1) + " is not the drift derivative of level " +
                            std::to_string(j));
        }
        const double lg = (ev.grads[J] * g).norm();
        if (lg > tol * std::max(1.0, ev.grads[J].norm() * g.norm())) {
          throw ConfigError("hocbf cascade: input appears at level " + std::to_string(j + 1) + " < m");
        }
      }
    }
  }
}

RelativeDegree check_relative_degrees(const ControlAffineModel& model, const UncertaintySpec& unc,
                                      const BarrierFunction& h, int max_order, const std::vector<Vector>& states,
                                      const LieChain& chain) {
  if (max_order < 1) throw ConfigError("max_order must be >= 1");
  if (states.empty()) throw ConfigError("relative degree probe needs sample states");
  const LieChain fallback = numeric_lie_chain(model, h, max_order);
  RelativeDegree rd;
  const double rel = 1e-6;
  auto appears = [rel](const RowVector& G, const Matrix& B) {
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
      const double scale = G.norm() * B.col(j).norm();
      if (scale > 0.0 && std::abs(G.dot(B.col(j).transpose())) > rel * scale) return true;
    }
    return false;
  };
  for (const auto& x : states) {
    const LieChainEval ev_fb = fallback(x);
    LieChainEval ev_an;
    if (chain) ev_an = chain(x);
    const Matrix g = model.g_hat(x);
    const Vector df = unc.delta_f(x);
    const Matrix dg = unc.delta_g(x);
    Matrix chan(model.n, 1 + dg.cols() + (unc.explicit_time_term ? 3 : 0));
    chan.col(0) = df;
    chan.middleCols(1, dg.cols()) = dg;
    if (unc.explicit_time_term) {
      chan.col(1 + dg.cols()) = unc.explicit_time_term(0.0);
      chan.col(2 + dg.cols()) = unc.explicit_time_term(0.13);
      chan.col(3 + dg.cols()) = unc.explicit_time_term(0.37);
    }
    for (int k = 0; k < max_order; ++k) {
      const auto K = static_cast<std::size_t>(k);
      const RowVector& G = (chain && K < ev_an.grads.size()) ? ev_an.grads[K] : ev_fb.grads[K];
      if ((rd.ird < 0 || k + 1 < rd.ird) && appears(G, g)) rd.ird = k + 1;
      if ((rd.drd < 0 || k + 1 < rd.drd) && appears(G, chan)) rd.drd = k + 1;
    }
  }
  rd.inconclusive = rd.ird < 0 || rd.drd < 0;
  rd.matched = !rd.inconclusive && rd.ird == rd.drd;
  return rd;
}

Method1Params Method1Params::make(double mu_h, double sigma_V, const EstimatorGain& gain) {
  if (!(mu_h > 0.0)) throw ConfigError("method1: mu_h must be positive");
  if (!(sigma_V > 0.0)) throw ConfigError("method1: sigma_V must be positive");
  Method1Params p;
  p.mu_h = mu_h;
  p.sigma_V = sigma_V;
  p.mu_e = gain.mu_e;
  p.D = 4.0 * sigma_V * gain.mu_e - 2.0 * sigma_V * mu_h;
  p.gamma_deltaL = gain.gamma_deltaL;
  if (!(p.D > 0.0)) {
    std::ostringstream os;
    os << "method1: D = 4 sigma_V mu_e - 2 sigma_V mu_h = " << p.D << " must be positive";
    throw ConfigError(os.str());
  }
  return p;
}

AffineConstraint nominal_cbf_row(const ControlAffineModel& model, const BarrierFunction& h, const Vector& x) {
  const LieTerms l = lie_terms(model, h, x);
  AffineConstraint c;
  c.a = l.Lg.transpose();
  c.b = -h.alpha(l.h) - l.Lf;
  c.label = labels::nominal_cbf;
  return c;
}

Matrix matching_matrix_Q(const ControlAffineModel& model, const Vector& x) {
  const Matrix g = model.g_hat(x);
  if (g.cols() > g.rows()) throw MatchingError("matching matrix: m > n");
  const Eigen::JacobiSVD<Matrix> svd(g);
  const double smin = svd.singularValues().minCoeff();
  if (!(smin > 1e-10)) {
    std::ostringstream os;
    os << "matching matrix: rank(g_hat) < m (smallest singular value " << smin << ")";
    throw MatchingError(os.str());
  }
  const Matrix gtg = g.transpose() * g;
  const Matrix Q = gtg.ldlt().solve(g.transpose());
  // ĝQ must act as the identity on range(ĝ).
  const Vector probe = g * Vector::LinSpaced(g.cols(), 1.0, 2.0);
  if ((g * (Q * probe) - probe).norm() > 1e-9 * std::max(1.0, probe.norm())) {
    throw MatchingError("matching matrix: projection identity failed");
  }
  return Q;
}

AffineConstraint method1_row(const ControlAffineModel& model, const BarrierFunction& h, const Method1Params& p,
                             const Vector& x) {
  const LieTerms l = lie_terms(model, h, x);
  const double S = -p.mu_h * l.h + l.grad.squaredNorm() / p.D + p.sigma_V * p.gamma_deltaL;
  AffineConstraint c;
  c.a = l.Lg.transpose();
  c.b = S - l.Lf;
  c.label = labels::method1_shrunk_set;
  return c;
}

Vector method1_control(const Vector& u_tilde, const Matrix& Q, const Vector& delta_hat) {
  if (Q.rows() != u_tilde.size() || Q.cols() != delta_hat.size()) {
    throw ConfigError("method1_control: dimension mismatch");
  }
  return u_tilde - Q * delta_hat;
}

AffineConstraint method1_alt_row(const ControlAffineModel& model, const BarrierFunction& h,
                                 const EstimatorGain& gain, double delta_L, double delta_b, const Vector& x, double t) {
  AffineConstraint c = nominal_cbf_row(model, h, x);
  c.b += h.grad_h(x).norm() * error_bound(gain, delta_L, delta_b, t);
  c.label = labels::method1_error_bound;
  return c;
}

AffineConstraint method2_row(const ControlAffineModel& model, const BarrierFunction& h, const Vector& delta_hat,
                             const EstimatorGain& gain, double delta_L, double delta_b, const Vector& x, double t) {
  const LieTerms l = lie_terms(model, h, x);
  const double bound = error_bound(gain, delta_L, delta_b, t);
  return robust_row(l.Lg, h.alpha(l.h), l.Lf, l.grad, delta_hat, bound, labels::method2_estimate);
}

AffineConstraint hocbf_method2_row(const ControlAffineModel& model, const HocbfCascade& c, const Vector& delta_hat,
                                   const EstimatorGain& gain, double delta_L, double delta_b, const Vector& x,
                                   double t) {
  const HocbfTerms ht = hocbf_terms(model, c, x);
  const double bound = error_bound(gain, delta_L, delta_b, t);
  const double alpha_term = c.gains.back() * ht.phi.back();
  const double drift = ht.Lf_m + ht.residual;
  return robust_row(ht.Lg_Lf_m1, alpha_term, drift, ht.grad_top, delta_hat, bound, labels::method2_hocbf);
}

AffineConstraint clf_row(const ScalarMap& V, const GradientMap& grad_V, const ControlAffineModel& model,
                         double lambda_rate, const Vector& x) {
  const RowVector gv = grad_V(x);
  const double LfV = gv.dot(model.f_hat(x).transpose());
  const RowVector LgV = gv * model.g_hat(x);
  AffineConstraint c;
  c.a.resize(model.m + 1);
  c.a.head(model.m) = -LgV.transpose();
  c.a(model.m) = 1.0;
  c.b = LfV + lambda_rate * V(x);
  c.label = labels::clf_relaxed;
  return c;
}

double h_V(double h, double sigma_V, const Vector& e) { return h - sigma_V * 0.5 * e.squaredNorm(); }

DecrementReport shrunk_barrier_decrement_check(const std::vector<double>& t, const std::vector<double>& hv,
                                               double mu_h, double slack) {
  if (t.size() != hv.size()) throw ConfigError("shrunk barrier check: length mismatch");
  DecrementReport rep;
  rep.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double dh = (hv[k + 1] - hv[k]) / (t[k + 1] - t[k]);
    const double excess = -(dh + mu_h * 0.5 * (hv[k] + hv[k + 1]));
    rep.max_excess = std::max(rep.max_excess, excess);
    if (excess > slack) rep.violations.push_back(k);
  }
  return rep;
}

}  // namespace rcbf
