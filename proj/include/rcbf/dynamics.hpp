#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rcbf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

using StateMap = std::function<Vector(const Vector&)>;
using InputMatrixMap = std::function<Matrix(const Vector&)>;

/// Nominal control-affine model  ẋ = f̂(x) + ĝ(x) u.
struct ControlAffineModel {
  int n = 0;
  int m = 0;
  StateMap f_hat;
  InputMatrixMap g_hat;

  Vector drift(const Vector& x) const;
  Matrix input_matrix(const Vector& x) const;
  Vector operator()(const Vector& x, const Vector& u) const;
};

/// Lumped model error  Δ(x,u,t) = Δf(x) + Δg(x) u + d(t)  with declared bounds
/// ‖Δ‖ ≤ delta_b and ‖Δ̇‖ ≤ delta_L.
struct UncertaintySpec {
  StateMap delta_f;
  InputMatrixMap delta_g;
  std::function<Vector(double)> explicit_time_term;  // optional
  double delta_L = 0.0;
  double delta_b = 0.0;

  Vector evaluate(const Vector& x, const Vector& u, double t) const;
};

/// Δ ≡ 0 with the given declared bounds.
UncertaintySpec zero_uncertainty(int n, int m, double delta_L = 1.0, double delta_b = 1.0);

struct TrueSystem {
  ControlAffineModel nominal;
  UncertaintySpec uncertainty;

  /// Throws ConfigError when the uncertainty maps disagree with (n, m) at x.
  void check_dimensions(const Vector& x, const Vector& u) const;
};

struct IntegratorConfig {
  double dt = 1e-3;
  double t_final = 1.0;

  void validate() const;
  std::size_t steps() const;
};

/// Column-oriented time series. Row k holds the sample at t = k·dt.
class SimulationTrace {
 public:
  SimulationTrace() = default;
  explicit SimulationTrace(std::vector<std::string> columns);

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t size() const { return columns_.empty() ? 0 : data_.size() / columns_.size(); }
  bool empty() const { return size() == 0; }

  bool has_column(std::string_view name) const;
  std::size_t column_index(std::string_view name) const;
  std::vector<double> column(std::string_view name) const;
  double at(std::size_t row, std::size_t col) const { return data_[row * columns_.size() + col]; }
  double at(std::size_t row, std::string_view name) const { return at(row, column_index(name)); }
  std::span<const double> row(std::size_t k) const;

  void append_row(std::span<const double> values);
  void reserve_rows(std::size_t rows) { data_.reserve(rows * columns_.size()); }

  std::uint64_t seed = 0;
  /// Faults and policy events (e.g. QP infeasibility holds), in order of occurrence.
  std::vector<std::string> events;
  /// Provenance labels of the constraint rows the controller emitted.
  std::vector<std::string> constraint_labels;
  /// Run-level counters (e.g. qp_fault_count, max_kkt_residual).
  std::map<std::string, double> metrics;

 private:
  std::vector<std::string> columns_;
  std::vector<double> data_;
};

/// Non-finite state derivative. `partial` carries whatever was recorded before the fault.
class IntegrationFault : public std::runtime_error {
 public:
  IntegrationFault(double time, const std::string& what);

  double time;
  SimulationTrace partial;
};

using Derivative = std::function<Vector(double t, const Vector& x)>;

/// ẋ = f̂(x) + ĝ(x)u + Δ(x,u,t).
Vector eval_true_dynamics(const TrueSystem& sys, const Vector& x, const Vector& u, double t);

/// One classical fourth-order Runge–Kutta step. Throws IntegrationFault on non-finite stages.
Vector rk4_step(const Derivative& deriv, const Vector& x, double t, double dt);

}  // namespace rcbf
