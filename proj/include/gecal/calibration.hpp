#pragma once

#include <Eigen/Dense>
#include <string>

#include "gecal/entropy.hpp"

namespace gecal {

// Calibration modes.
//   GecKnown        minimize sum G(w_i)       s.t. sum w_i z_i = T, last column of z is g(d_i)
//   DsBenchmarkOnly minimize sum d_i G(w_i/d_i) s.t. benchmark constraints only
//   DsWithDebias    as DsBenchmarkOnly plus the debiasing control (last column g(d_i))
//   GecScaled       minimize sum G((n/N) w_i) s.t. constraints with g*(d_i) = g(n d_i / N)
//   ModelAssisted   minimize sum c_i G(w_i)   s.t. benchmark plus sum w_i g(d_i) c_i control
enum class CalibMode { GecKnown, DsBenchmarkOnly, DsWithDebias, GecScaled, ModelAssisted };

struct CalibrationProblem {
  Eigen::MatrixXd z;        // n x k constraint covariates, in primal scale
  Eigen::VectorXd totals;   // k control totals T = sum_U z_i
  CalibMode mode = CalibMode::GecKnown;
  EntropySpec entropy = EntropySpec::make(EntropyKind::EmpiricalLikelihood);
  Eigen::VectorXd d;        // design weights on the sample
  Eigen::VectorXd costs;    // unit costs c_i > 0 (ModelAssisted), else empty
  double n_over_N = 1.0;    // GecScaled only
};

enum class SolveStatus { Converged, Nonconvergence, SingularHessian, InfeasibleStart };

const char* to_string(SolveStatus status);

struct CalibrationResult {
  Eigen::VectorXd omega;
  Eigen::VectorXd lambda;
  int iterations = 0;
  double grad_norm = 0.0;
  // max_k |sum_A omega_i z_ik - T_k| / (1 + |T_k|)
  double constraint_residual = 0.0;
  double hessian_condition = 0.0;
  SolveStatus status = SolveStatus::Nonconvergence;
  std::string message;
  bool converged() const { return status == SolveStatus::Converged; }
};

// Generalized entropy calibration (modes GecKnown and ModelAssisted).
CalibrationResult solve_gec(const CalibrationProblem& problem);

// Divergence calibration of the design weights (modes DsBenchmarkOnly,
// DsWithDebias): weights w_i = d_i f(lambda^T z_i).
CalibrationResult solve_ds(const CalibrationProblem& problem);

// Scaled variant: (n/N) w_i = f(lambda^T z_i); covariates must already use
// g*(d_i) = g(n d_i / N).
CalibrationResult solve_gec_scaled(const CalibrationProblem& problem, int n, double N);

namespace detail {

// Damped Newton on the dual objective sum_i m_i F(u_i) - lambda^T target with
// u_i = lambda^T Z_i + offset_i.  Armijo backtracking (c = 1e-4, halving) and
// a fraction-to-boundary cap: each step consumes at most 99% of any unit's
// distance to the boundary of g(V).  Stops when |grad_k| <= tol_k for all k.
struct DualOutcome {
  Eigen::VectorXd lambda;
  int iterations = 0;
  double grad_norm = 0.0;
  double condition = 0.0;
  SolveStatus status = SolveStatus::Nonconvergence;
  std::string message;
};

DualOutcome dual_newton(const EntropySpec& entropy, const Eigen::MatrixXd& z,
                        const Eigen::VectorXd& mult, const Eigen::VectorXd& target,
                        const Eigen::VectorXd& tol, const Eigen::VectorXd& init,
                        const Eigen::VectorXd& offset = Eigen::VectorXd());

}  // namespace detail

}  // namespace gecal
