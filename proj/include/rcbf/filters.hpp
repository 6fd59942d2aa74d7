#pragma once

#include "rcbf/dynamics.hpp"
#include "rcbf/estimator.hpp"
#include "rcbf/qp.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rcbf {

namespace labels {
inline constexpr const char* nominal_cbf = "nominal.cbf";
inline constexpr const char* method1_shrunk_set = "method1.shrunk_set";
inline constexpr const char* method1_error_bound = "method1.error_bound";
inline constexpr const char* method2_estimate = "method2.estimate";
inline constexpr const char* method2_hocbf = "method2.hocbf";
inline constexpr const char* clf_relaxed = "clf.relaxed";
inline constexpr const char* box = "box";
}  // namespace labels

/// Extended class-K function. Linear α(h) = gain·h unless `custom` is set.
struct ClassK {
  double gain = 1.0;
  std::function<double(double)> custom;

  double operator()(double h) const { return custom ? custom(h) : gain * h; }
};

using ScalarMap = std::function<double(const Vector&)>;
using GradientMap = std::function<RowVector(const Vector&)>;

struct BarrierFunction {
  ScalarMap h;
  GradientMap grad_h;
  ClassK alpha;
};

/// Max relative error between grad_h and central differences of h over the given states.
double gradient_check(const ScalarMap& f, const GradientMap& grad, const std::vector<Vector>& states,
                      double step = 1e-6);

struct LieTerms {
  double h = 0.0;
  RowVector grad;
  double Lf = 0.0;
  RowVector Lg;
};

LieTerms lie_terms(const ControlAffineModel& model, const BarrierFunction& h, const Vector& x);

/// L_f^j h and ∇L_f^j h for j = 0..m−1. L_f^m h is taken as ∇L_f^{m−1}h · f̂.
struct LieChainEval {
  std::vector<double> values;
  std::vector<RowVector> grads;
};
using LieChain = std::function<LieChainEval(const Vector&)>;

/// Chain built by nested central differences from h and grad_h. Usable for small m.
LieChain numeric_lie_chain(const ControlAffineModel& model, const BarrierFunction& h, int m, double step = 1e-4);

/// φ_0 = h, φ_i = φ̇_{i−1} + k_i φ_{i−1} with linear gains k_1..k_m.
struct HocbfCascade {
  BarrierFunction h0;
  std::vector<double> gains;
  LieChain chain;

  int order() const { return static_cast<int>(gains.size()); }
};

HocbfCascade make_cascade(const ControlAffineModel& model, BarrierFunction h0, std::vector<double> gains,
                          LieChain chain = {});

struct HocbfTerms {
  std::vector<double> phi;  ///< φ_0..φ_{m−1}
  double Lf_m = 0.0;        ///< L_f^m h
  RowVector Lg_Lf_m1;       ///< L_g L_f^{m−1} h
  RowVector grad_top;       ///< ∇L_f^{m−1} h
  double residual = 0.0;    ///< O(h): the lower-order drift of φ_{m−1}
};

HocbfTerms hocbf_terms(const ControlAffineModel& model, const HocbfCascade& c, const Vector& x);

/// Throws ConfigError if the chain's gradients disagree with finite differences of its values, if
/// L_f^{j+1}h ≠ ∇L_f^j h·f̂, or if u enters below the top level.
void validate_cascade(const ControlAffineModel& model, const HocbfCascade& c, const std::vector<Vector>& states,
                      double tol = 1e-5);

struct RelativeDegree {
  int ird = -1;
  int drd = -1;
  bool matched = false;
  bool inconclusive = false;
};

/// Orders at which u and Δ first appear in the derivatives of h, probed at `states`.
RelativeDegree check_relative_degrees(const ControlAffineModel& model, const UncertaintySpec& unc,
                                      const BarrierFunction& h, int max_order, const std::vector<Vector>& states,
                                      const LieChain& chain = {});

struct Method1Params {
  double mu_h = 1.0;
  double sigma_V = 0.1;
  double mu_e = 0.0;
  double D = 0.0;
  double gamma_deltaL = 0.0;

  /// Throws ConfigError unless D = 4σ_Vμ_e − 2σ_Vμ_h > 0.
  static Method1Params make(double mu_h, double sigma_V, const EstimatorGain& gain);
};

AffineConstraint nominal_cbf_row(const ControlAffineModel& model, const BarrierFunction& h, const Vector& x);

/// (ĝᵀĝ)⁻¹ĝᵀ. Throws MatchingError when the smallest singular value of ĝ(x) is ≤ 1e−10.
Matrix matching_matrix_Q(const ControlAffineModel& model, const Vector& x);

/// a = L_ĝh, b = −μ_h h + ‖∂h‖²/D + σ_Vγ − L_f̂h.
AffineConstraint method1_row(const ControlAffineModel& model, const BarrierFunction& h, const Method1Params& p,
                             const Vector& x);

/// u = ũ − QΔ̂.
Vector method1_control(const Vector& u_tilde, const Matrix& Q, const Vector& delta_hat);

/// Nominal row with b raised by ‖∂h‖·error_bound(t).
AffineConstraint method1_alt_row(const ControlAffineModel& model, const BarrierFunction& h,
                                 const EstimatorGain& gain, double delta_L, double delta_b, const Vector& x, double t);

/// a = L_ĝh, b = −α(h) − L_f̂h − ∂h·Δ̂ + ‖∂h‖·error_bound(t).
AffineConstraint method2_row(const ControlAffineModel& model, const BarrierFunction& h, const Vector& delta_hat,
                             const EstimatorGain& gain, double delta_L, double delta_b, const Vector& x, double t);

/// a = L_ĝL_f̂^{m−1}h, b = −k_mφ_{m−1} − L_f̂^m h − O(h) − ∇L_f̂^{m−1}h·Δ̂ + ‖∇L_f̂^{m−1}h‖·error_bound(t).
AffineConstraint hocbf_method2_row(const ControlAffineModel& model, const HocbfCascade& c, const Vector& delta_hat,
                                   const EstimatorGain& gain, double delta_L, double delta_b, const Vector& x,
                                   double t);

/// Relaxed CLF row over z = (u, δ_c): −L_ĝV·u + δ_c ≥ L_f̂V + λV.
AffineConstraint clf_row(const ScalarMap& V, const GradientMap& grad_V, const ControlAffineModel& model,
                         double lambda_rate, const Vector& x);

/// h_V = h − σ_V·½‖e‖².
double h_V(double h, double sigma_V, const Vector& e);

struct DecrementReport {
  std::vector<std::size_t> violations;
  double max_excess = 0.0;  ///< max of −(ḣ_V + μ_h h̄_V), where a positive value means decrease faster than allowed
};

/// Forward-difference check of ḣ_V ≥ −μ_h h_V − slack, h_V averaged over each interval.
DecrementReport shrunk_barrier_decrement_check(const std::vector<double>& t, const std::vector<double>& hv,
                                               double mu_h, double slack);

}  // namespace rcbf
