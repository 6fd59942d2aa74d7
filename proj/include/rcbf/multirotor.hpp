#pragma once

#include "rcbf/dynamics.hpp"
#include "rcbf/estimator.hpp"
#include "rcbf/filters.hpp"
#include "rcbf/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rcbf {

enum class MultirotorMode { nominal, method2_hocbf, unprotected };

MultirotorMode parse_multirotor_mode(const std::string& s);
const char* to_string(MultirotorMode m);
bool is_robust(MultirotorMode m);

struct ReferenceSample {
  Eigen::Vector3d p, v, a, j;  ///< position and its first three derivatives
  double psi = 0.0;
  double psi_dot = 0.0;
};

using Reference = std::function<ReferenceSample(double t)>;

/// p_d(t) = p0 + vel·t, constant yaw.
Reference straight_line_reference(const Eigen::Vector3d& p0, const Eigen::Vector3d& vel, double psi);

/// Rest-to-rest move from p0 to p1 over `duration` along the septic smoothstep (zero velocity,
/// acceleration and jerk at both ends), then holds p1.
Reference rest_to_rest_reference(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, double duration, double psi);

struct Obstacle {
  Eigen::Vector3d center;
  double radius = 0.0;
};

/// Drag and input-reduction parameters of one uncertainty draw.
struct MultirotorUncertainty {
  Eigen::Vector3d c_d = Eigen::Vector3d::Constant(0.15);
  Eigen::Vector4d delta_u = Eigen::Vector4d::Constant(-0.005);
};

/// Seed 0 is the reference draw (largest drag, largest input reduction); other seeds draw
/// c_d,i ∈ [0.3, 1]·c_max and δ_u,i ∈ [δ_min, 0] uniformly.
MultirotorUncertainty multirotor_uncertainty_draw(std::uint64_t seed, double c_max, double delta_u_min);

/// State x = (p, ṗ, p̈, ψ) ∈ R¹⁰ in world coordinates. p̈ is the gravity-compensated acceleration,
/// so the thrust direction is z_b = (p̈ + g e3)/T with T = ‖p̈ + g e3‖.
struct MultirotorScenario {
  double gravity = 9.81;
  Vector eta0 = Vector::Zero(10);
  /// Approach that ends inside the obstacle, so the filter has to stop the vehicle at the boundary.
  Reference reference = rest_to_rest_reference({-3.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, 6.0, 0.0);
  std::vector<Obstacle> obstacles{{{0.0, 0.0, 0.0}, 0.4}};
  double r0 = 0.15;

  double c_max = 0.15;
  double delta_u_min = -0.005;
  MultirotorUncertainty uncertainty;
  bool uncertainty_enabled = true;

  std::vector<double> cascade_gains{0.7, 0.7, 0.7};  ///< k_1, k_2, k_3
  std::vector<double> tracker_poles{-2.0, -2.5, -3.0};
  double yaw_gain = 2.0;

  std::vector<double> lambda = std::vector<double>(10, 20.0);
  double delta_L = 0.1;
  double delta_b = 0.1;

  /// Smallest admissible T/g and cos θ before the chart is considered left.
  double min_thrust_ratio = 0.2;
  double min_cos_theta = 0.2;

  ControlAffineModel model() const;
  UncertaintySpec uncertainty_spec() const;
  TrueSystem true_system(bool with_uncertainty) const;
  EstimatorGain gain() const;

  Vector initial_state() const;
  Vector reference_state(double t) const;

  /// B_u(x): maps u = (Ṫ, ω_x, ω_y, ω_z) to (p⃛, ψ̇). Throws ScenarioFault outside the chart.
  Eigen::Matrix4d input_map(const Vector& x) const;
  /// R(x) with R e3 = z_b and ZYX yaw ψ.
  Eigen::Matrix3d attitude(const Vector& x) const;

  BarrierFunction barrier(std::size_t i) const;
  LieChain lie_chain(std::size_t i) const;
  HocbfCascade cascade(std::size_t i) const;

  /// Pole-placement tracker v = p⃛_d − K(η) and ψ̇_d − k_ψ e_ψ, mapped through B_u⁻¹.
  Vector tracking_control(const Vector& x, double t) const;

  void validate() const;
};

MultirotorScenario multirotor_defaults();

SimulationTrace run_multirotor(const MultirotorScenario& sc, MultirotorMode mode, const IntegratorConfig& cfg,
                               std::uint64_t seed = 0);

}  // namespace rcbf
