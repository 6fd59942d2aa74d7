#include "rcbf/multirotor.hpp"

#include "rcbf/errors.hpp"
#include "rcbf/qp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace rcbf {

namespace {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

Vec3 seg(const Vector& x, int i) { return x.segment<3>(i); }

}  // namespace

MultirotorMode parse_multirotor_mode(const std::string& s) {
  if (s == "nominal") return MultirotorMode::nominal;
  if (s == "method2_hocbf") return MultirotorMode::method2_hocbf;
  if (s == "unprotected") return MultirotorMode::unprotected;
  throw ConfigError("unknown multirotor mode '" + s + "'");
}

const char* to_string(MultirotorMode m) {
  switch (m) {
    case MultirotorMode::nominal: return "nominal";
    case MultirotorMode::method2_hocbf: return "method2_hocbf";
    case MultirotorMode::unprotected: return "unprotected";
  }
  return "?";
}

bool is_robust(MultirotorMode m) { return m == MultirotorMode::method2_hocbf; }

Reference straight_line_reference(const Eigen::Vector3d& p0, const Eigen::Vector3d& vel, double psi) {
  return [p0, vel, psi](double t) {
    ReferenceSample r;
    r.p = p0 + vel * t;
    r.v = vel;
    r.a.setZero();
    r.j.setZero();
    r.psi = psi;
    r.psi_dot = 0.0;
    return r;
  };
}

Reference rest_to_rest_reference(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, double duration, double psi) {
  if (!(duration > 0.0)) throw ConfigError("reference duration must be positive");
  const Vec3 d = p1 - p0;
  return [p0, d, duration, psi](double t) {
    const double tau = std::clamp(t / duration, 0.0, 1.0);
    const double t2 = tau * tau, t3 = t2 * tau, t4 = t3 * tau;
    // s = 35τ⁴ − 84τ⁵ + 70τ⁶ − 20τ⁷
    const double s = t4 * (35.0 - 84.0 * tau + 70.0 * t2 - 20.0 * t3);
    const double s1 = 140.0 * t3 * std::pow(1.0 - tau, 3);
    const double s2 = 420.0 * t2 * std::pow(1.0 - tau, 2) * (1.0 - 2.0 * tau);
    const double s3 = 840.0 * tau * (1.0 - tau) * (1.0 - 5.0 * tau + 5.0 * t2);
    ReferenceSample r;
    r.p = p0 + s * d;
    r.v = s1 / duration * d;
    r.a = s2 / (duration * duration) * d;
    r.j = s3 / (duration * duration * duration) * d;
    r.psi = psi;
    return r;
  };
}

MultirotorUncertainty multirotor_uncertainty_draw(std::uint64_t seed, double c_max, double delta_u_min) {
  MultirotorUncertainty u;
  u.c_d = Vec3::Constant(c_max);
  u.delta_u = Eigen::Vector4d::Constant(delta_u_min);
  if (seed == 0) return u;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 3; ++i) u.c_d(i) = c_max * (0.3 + 0.7 * unit(rng));
  for (int i = 0; i < 4; ++i) u.delta_u(i) = delta_u_min * unit(rng);
  return u;
}

Mat3 MultirotorScenario::attitude(const Vector& x) const {
  const Vec3 thrust = seg(x, 6) + Vec3(0.0, 0.0, gravity);
  const double T = thrust.norm();
  if (!(T > min_thrust_ratio * gravity)) {
    std::ostringstream os;
    os << "multirotor: thrust " << T << " below chart limit";
    throw ScenarioFault(os.str());
  }
  const Vec3 zb = thrust / T;
  const Vec3 xc(std::cos(x(9)), std::sin(x(9)), 0.0);
  Vec3 yb = zb.cross(xc);
  const double ny = yb.norm();
  if (!(ny > min_cos_theta)) throw ScenarioFault("multirotor: pitch left the Euler chart");
  yb /= ny;
  const Vec3 xb = yb.cross(zb);
  Mat3 R;
  R.col(0) = xb;
  R.col(1) = yb;
  R.col(2) = zb;
  return R;
}

Eigen::Matrix4d MultirotorScenario::input_map(const Vector& x) const {
  const Mat3 R = attitude(x);
  const double T = (seg(x, 6) + Vec3(0.0, 0.0, gravity)).norm();
  // ZYX angles of R.
  const double theta = -std::asin(std::clamp(R(2, 0), -1.0, 1.0));
  const double phi = std::atan2(R(2, 1), R(2, 2));
  const double ct = std::cos(theta);
  if (!(ct > min_cos_theta)) throw ScenarioFault("multirotor: cos(theta) below chart limit");
  Eigen::Matrix4d B = Eigen::Matrix4d::Zero();
  B.block<3, 1>(0, 0) = R.col(2);
  B.block<3, 1>(0, 1) = -T * R.col(1);
  B.block<3, 1>(0, 2) = T * R.col(0);
  B(3, 2) = std::sin(phi) / ct;
  B(3, 3) = std::cos(phi) / ct;
  return B;
}

ControlAffineModel MultirotorScenario::model() const {
  ControlAffineModel m;
  m.n = 10;
  m.m = 4;
  m.f_hat = [](const Vector& x) {
    Vector f = Vector::Zero(10);
    f.segment<6>(0) = x.segment<6>(3);
    return f;
  };
  const MultirotorScenario sc = *this;
  m.g_hat = [sc](const Vector& x) {
    Matrix g = Matrix::Zero(10, 4);
    g.bottomRows(4) = sc.input_map(x);
    return g;
  };
  return m;
}

UncertaintySpec MultirotorScenario::uncertainty_spec() const {
  UncertaintySpec u;
  const Vec3 cd = uncertainty.c_d;
  const Eigen::Vector4d du = uncertainty.delta_u;
  u.delta_f = [cd](const Vector& x) {
    Vector d = Vector::Zero(10);
    d.segment<3>(6) = cd.cwiseProduct(seg(x, 3).array().tanh().matrix());
    return d;
  };
  const MultirotorScenario sc = *this;
  u.delta_g = [sc, du](const Vector& x) {
    Matrix g = Matrix::Zero(10, 4);
    g.bottomRows(4) = sc.input_map(x) * du.asDiagonal();
    return g;
  };
  u.delta_L = delta_L;
  u.delta_b = delta_b;
  return u;
}

TrueSystem MultirotorScenario::true_system(bool with_uncertainty) const {
  return TrueSystem{model(), with_uncertainty ? uncertainty_spec() : zero_uncertainty(10, 4, delta_L, delta_b)};
}

EstimatorGain MultirotorScenario::gain() const { return make_gain(lambda, delta_L); }

Vector MultirotorScenario::reference_state(double t) const {
  const ReferenceSample r = reference(t);
  Vector x(10);
  x << r.p, r.v, r.a, r.psi;
  return x;
}

Vector MultirotorScenario::initial_state() const { return reference_state(0.0) + eta0; }

BarrierFunction MultirotorScenario::barrier(std::size_t i) const {
  const Vec3 c = obstacles.at(i).center;
  const double r = obstacles.at(i).radius + r0;
  BarrierFunction b;
  b.h = [c, r](const Vector& x) { return (seg(x, 0) - c).norm() - r; };
  b.grad_h = [c](const Vector& x) {
    RowVector g = RowVector::Zero(10);
    g.segment<3>(0) = (seg(x, 0) - c).normalized().transpose();
    return g;
  };
  b.alpha.gain = cascade_gains.at(0);
  return b;
}

LieChain MultirotorScenario::lie_chain(std::size_t i) const {
  const Vec3 c = obstacles.at(i).center;
  const double r = obstacles.at(i).radius + r0;
  return [c, r](const Vector& x) {
    const Vec3 d = seg(x, 0) - c;
    const Vec3 v = seg(x, 3);
    const Vec3 a = seg(x, 6);
    const double rho = d.norm();
    const Vec3 n = d / rho;
    const Mat3 Pp = (Mat3::Identity() - n * n.transpose()) / rho;
    const double nv = n.dot(v);
    const double q = v.squaredNorm() - nv * nv;

    LieChainEval e;
    e.values = {rho - r, nv, v.dot(Pp * v) + n.dot(a)};
    RowVector g0 = RowVector::Zero(10), g1 = RowVector::Zero(10), g2 = RowVector::Zero(10);
    g0.segment<3>(0) = n.transpose();
    g1.segment<3>(0) = (Pp * v).transpose();
    g1.segment<3>(3) = n.transpose();
    g2.segment<3>(0) = (Pp * a - 2.0 * nv * (Pp * v) / rho - q * n / (rho * rho)).transpose();
    g2.segment<3>(3) = (2.0 * Pp * v).transpose();
    g2.segment<3>(6) = n.transpose();
    e.grads = {g0, g1, g2};
    return e;
  };
}

HocbfCascade MultirotorScenario::cascade(std::size_t i) const {
  return make_cascade(model(), barrier(i), cascade_gains, lie_chain(i));
}

Vector MultirotorScenario::tracking_control(const Vector& x, double t) const {
  // ∏(s − p_i) = s³ + c2 s² + c1 s + c0
  const double p1 = tracker_poles[0], p2 = tracker_poles[1], p3 = tracker_poles[2];
  const double c2 = -(p1 + p2 + p3);
  const double c1 = p1 * p2 + p1 * p3 + p2 * p3;
  const double c0 = -(p1 * p2 * p3);
  const ReferenceSample r = reference(t);
  const Vec3 e = seg(x, 0) - r.p;
  const Vec3 ed = seg(x, 3) - r.v;
  const Vec3 edd = seg(x, 6) - r.a;
  Eigen::Vector4d v;
  v.head<3>() = r.j - c0 * e - c1 * ed - c2 * edd;
  v(3) = r.psi_dot - yaw_gain * (x(9) - r.psi);
  const Eigen::Matrix4d B = input_map(x);
  const Eigen::Vector4d u = B.partialPivLu().solve(v);
  return u;
}

void MultirotorScenario::validate() const {
  if (!(gravity > 0.0)) throw ConfigError("multirotor: gravity must be positive");
  if (eta0.size() != 10) throw ConfigError("multirotor: eta0 must have 10 entries");
  if (!reference) throw ConfigError("multirotor: reference trajectory missing");
  if (cascade_gains.size() != 3) throw ConfigError("multirotor: cascade needs 3 gains (k1, k2, k3)");
  for (double k : cascade_gains) {
    if (!(k > 0.0)) throw ConfigError("multirotor: cascade gains must be positive");
  }
  if (tracker_poles.size() != 3) throw ConfigError("multirotor: tracker needs 3 poles");
  for (double p : tracker_poles) {
    if (!(p < 0.0)) throw ConfigError("multirotor: tracker poles must be negative");
  }
  if (!(yaw_gain > 0.0)) throw ConfigError("multirotor: yaw_gain must be positive");
  if (!(r0 >= 0.0)) throw ConfigError("multirotor: r0 must be nonnegative");
  if (lambda.size() != 10) throw ConfigError("multirotor: estimator lambda must have 10 entries");
  if (!(delta_L > 0.0) || !(delta_b > 0.0)) throw ConfigError("multirotor: delta_L and delta_b must be positive");
  for (int i = 0; i < 4; ++i) {
    const double d = uncertainty.delta_u(i);
    if (!(d > -1.0 && d <= 0.0)) throw ConfigError("multirotor: delta_u entries must lie in (-1, 0]");
  }
  if (!(uncertainty.c_d.array() >= 0.0).all()) throw ConfigError("multirotor: c_d must be nonnegative");
  const Vector x0 = initial_state();
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    if (!(obstacles[i].radius > 0.0)) throw ConfigError("multirotor: obstacle radius must be positive");
    const double h = barrier(i).h(x0);
    if (h < 0.0) {
      std::ostringstream os;
      os << "multirotor: initial state inside obstacle " << i << " (h = " << h << ")";
      throw ConfigError(os.str());
    }
  }
  gain();
}

MultirotorScenario multirotor_defaults() {
  MultirotorScenario sc;
  sc.uncertainty = multirotor_uncertainty_draw(0, sc.c_max, sc.delta_u_min);
  return sc;
}

SimulationTrace run_multirotor(const MultirotorScenario& sc, MultirotorMode mode, const IntegratorConfig& cfg,
                               std::uint64_t seed) {
  sc.validate();
  cfg.validate();
  const bool with_unc = sc.uncertainty_enabled && mode != MultirotorMode::nominal;
  const TrueSystem sys = sc.true_system(with_unc);
  const ControlAffineModel& model = sys.nominal;
  const EstimatorGain gain = sc.gain();
  const std::size_t nb = sc.obstacles.size();
  std::vector<HocbfCascade> cascades;
  for (std::size_t i = 0; i < nb; ++i) cascades.push_back(sc.cascade(i));
  const bool robust = mode == MultirotorMode::method2_hocbf;

  struct Diag {
    std::vector<double> h_e;
    double status = 0.0;
  } diag;
  diag.h_e.assign(nb, 0.0);
  std::vector<std::size_t> warm;
  Vector last_u;
  double faults = 0.0, max_kkt = 0.0, solves = 0.0;

  QpProblem qp;
  qp.dim = 4;
  const Vector zero10 = Vector::Zero(10);

  const Controller controller = [&](const StepContext& ctx) -> Vector {
    const Vector& x = ctx.x;
    const Vector u_des = sc.tracking_control(x, ctx.t);
    const double T = (seg(x, 6) + Vec3(0.0, 0.0, sc.gravity)).norm();
    qp.hessian_diag = (Vector(4) << 1.0, T * T, T * T, 1.0).finished();
    qp.linear_ref = u_des;
    qp.constraints.clear();
    for (std::size_t i = 0; i < nb; ++i) {
      AffineConstraint row =
          robust ? hocbf_method2_row(model, cascades[i], ctx.delta_hat, gain, sc.delta_L, sc.delta_b, x, ctx.t)
                 : hocbf_method2_row(model, cascades[i], zero10, gain, 0.0, 0.0, x, ctx.t);
      if (!robust) row.label = labels::nominal_cbf;
      qp.constraints.push_back(std::move(row));
      diag.h_e[i] = hocbf_terms(model, cascades[i], x).phi.back();
    }
    const QpSolution sol = solve(qp, &warm);
    solves += 1.0;
    Vector u;
    if (sol.status == QpStatus::infeasible) {
      faults += 1.0;
      std::ostringstream os;
      os.precision(17);
      os << "t=" << ctx.t << " qp infeasible; holding last control";
      ctx.events.push_back(os.str());
      u = last_u.size() == 4 ? last_u : u_des;
      diag.status = 1.0;
    } else {
      warm = sol.active_set;
      max_kkt = std::max(max_kkt, sol.kkt_residual);
      u = sol.u_star;
      diag.status = 0.0;
    }
    last_u = u;
    return u;
  };

  std::vector<std::string> cols;
  for (int i = 1; i <= 4; ++i) cols.push_back("u_" + std::to_string(i));
  cols.insert(cols.end(), {"err_norm", "err_bound", "out_bound", "track_err"});
  for (std::size_t i = 1; i <= nb; ++i) cols.push_back("h_" + std::to_string(i));
  for (std::size_t i = 1; i <= nb; ++i) cols.push_back("h_e_" + std::to_string(i));
  cols.push_back("qp_status");

  std::vector<BarrierFunction> barriers;
  for (std::size_t i = 0; i < nb; ++i) barriers.push_back(sc.barrier(i));

  TraceHook hook{cols, [&](const StepRecord& r, std::span<double> o) {
                   std::size_t c = 0;
                   for (int i = 0; i < 4; ++i) o[c++] = r.u(i);
                   o[c++] = (r.delta_true - r.delta_hat).norm();
                   o[c++] = error_bound(gain, sc.delta_L, sc.delta_b, r.t);
                   o[c++] = output_bound(gain, sc.delta_b, r.t);
                   o[c++] = (seg(r.x, 0) - sc.reference(r.t).p).norm();
                   for (std::size_t i = 0; i < nb; ++i) o[c++] = barriers[i].h(r.x);
                   for (std::size_t i = 0; i < nb; ++i) o[c++] = diag.h_e[i];
                   o[c++] = diag.status;
                 }};

  SimulationOptions opt;
  opt.estimator = gain;
  opt.state_names = {"p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "a_x", "a_y", "a_z", "psi"};
  opt.seed = seed;
  auto finish = [&](SimulationTrace& tr) {
    tr.constraint_labels = {robust ? labels::method2_hocbf : labels::nominal_cbf};
    tr.metrics["qp_fault_count"] = faults;
    tr.metrics["max_kkt_residual"] = max_kkt;
    tr.metrics["qp_solves"] = solves;
  };
  try {
    SimulationTrace tr = simulate(sys, sc.initial_state(), controller, cfg, {hook}, opt);
    finish(tr);
    return tr;
  } catch (IntegrationFault& f) {
    finish(f.partial);
    throw;
  }
}

}  // namespace rcbf
