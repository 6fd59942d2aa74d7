#include "rcbf/dynamics.hpp"

#include "rcbf/errors.hpp"

#include <cmath>
#include <sstream>

namespace rcbf {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

std::string dim_message(const char* what, Eigen::Index rows, Eigen::Index cols, int n, int m) {
  std::ostringstream os;
  os << what << " has shape " << rows << "x" << cols << ", expected " << n << "x" << m;
  return os.str();
}

}  // namespace

Vector ControlAffineModel::drift(const Vector& x) const { return f_hat(x); }

Matrix ControlAffineModel::input_matrix(const Vector& x) const { return g_hat(x); }

Vector ControlAffineModel::operator()(const Vector& x, const Vector& u) const {
  return f_hat(x) + g_hat(x) * u;
}

Vector UncertaintySpec::evaluate(const Vector& x, const Vector& u, double t) const {
  Vector d = delta_f(x) + delta_g(x) * u;
  if (explicit_time_term) d += explicit_time_term(t);
  return d;
}

UncertaintySpec zero_uncertainty(int n, int m, double delta_L, double delta_b) {
  UncertaintySpec spec;
  spec.delta_f = [n](const Vector&) { return Vector::Zero(n); };
  spec.delta_g = [n, m](const Vector&) { return Matrix::Zero(n, m); };
  spec.delta_L = delta_L;
  spec.delta_b = delta_b;
  return spec;
}

void TrueSystem::check_dimensions(const Vector& x, const Vector& u) const {
  const int n = nominal.n;
  const int m = nominal.m;
  if (x.size() != n) throw ConfigError(dim_message("state", x.size(), 1, n, 1));
  if (u.size() != m) throw ConfigError(dim_message("control", u.size(), 1, m, 1));
  const Vector f = nominal.f_hat(x);
  if (f.size() != n) throw ConfigError(dim_message("f_hat(x)", f.size(), 1, n, 1));
  const Matrix g = nominal.g_hat(x);
  if (g.rows() != n || g.cols() != m) throw ConfigError(dim_message("g_hat(x)", g.rows(), g.cols(), n, m));
  const Vector df = uncertainty.delta_f(x);
  if (df.size() != n) throw ConfigError(dim_message("delta_f(x)", df.size(), 1, n, 1));
  const Matrix dg = uncertainty.delta_g(x);
  if (dg.rows() != n || dg.cols() != m) {
    throw ConfigError(dim_message("delta_g(x)", dg.rows(), dg.cols(), n, m));
  }
  if (uncertainty.explicit_time_term) {
    const Vector d = uncertainty.explicit_time_term(0.0);
    if (d.size() != n) throw ConfigError(dim_message("explicit_time_term(t)", d.size(), 1, n, 1));
  }
}

void IntegratorConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("integrator dt must be positive");
  if (!(t_final >= dt)) throw ConfigError("integrator t_final must be >= dt");
  const double ratio = t_final / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-6 * std::max(1.0, ratio)) {
    throw ConfigError("integrator t_final must be an integer multiple of dt");
  }
}

std::size_t IntegratorConfig::steps() const {
  return static_cast<std::size_t>(std::llround(t_final / dt));
}

SimulationTrace::SimulationTrace(std::vector<std::string> columns) : columns_(std::move(columns)) {}

bool SimulationTrace::has_column(std::string_view name) const {
  for (const auto& c : columns_) {
    if (c == name) return true;
  }
  return false;
}

std::size_t SimulationTrace::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i] == name) return i;
  }
  throw std::out_of_range("trace has no column '" + std::string(name) + "'");
}

std::vector<double> SimulationTrace::column(std::string_view name) const {
  const std::size_t c = column_index(name);
  std::vector<double> out(size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = at(k, c);
  return out;
}

std::span<const double> SimulationTrace::row(std::size_t k) const {
  return {data_.data() + k * columns_.size(), columns_.size()};
}

void SimulationTrace::append_row(std::span<const double> values) {
  if (values.size() != columns_.size()) {
    throw std::invalid_argument("trace row width does not match column count");
  }
  data_.insert(data_.end(), values.begin(), values.end());
}

IntegrationFault::IntegrationFault(double t, const std::string& what)
    : std::runtime_error(what), time(t) {}

Vector eval_true_dynamics(const TrueSystem& sys, const Vector& x, const Vector& u, double t) {
  sys.check_dimensions(x, u);
  return sys.nominal(x, u) + sys.uncertainty.evaluate(x, u, t);
}

Vector rk4_step(const Derivative& deriv, const Vector& x, double t, double dt) {
  auto stage = [&](double ts, const Vector& xs) {
    Vector k = deriv(ts, xs);
    if (!all_finite(k)) {
      std::ostringstream os;
      os << "non-finite state derivative at t=" << ts;
      throw IntegrationFault(ts, os.str());
    }
    return k;
  };
  const double half = 0.5 * dt;
  const Vector k1 = stage(t, x);
  const Vector k2 = stage(t + half, x + half * k1);
  const Vector k3 = stage(t + half, x + half * k2);
  const Vector k4 = stage(t + dt, x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace rcbf
