#pragma once

#include <Eigen/Dense>

#include "gecal/calibration.hpp"
#include "gecal/entropy.hpp"

namespace gecal {

// Adjusted-entropy calibration for an unknown debiasing total N * alpha_N,
// alpha_N = N^{-1} sum_U g(d_i).  The adjustment term K_hat(alpha):
//   K1: K(a) = a                                   (profile out alpha)
//   K2: K(a) = (alpha_ht + 1) log|a + 1|           (Qin-Lawless shrinkage)
// where alpha_ht = N^{-1} sum_A d_i g(d_i).
enum class KKind { K1Identity, K2QinShrink };

struct KSpec {
  KKind kind = KKind::K1Identity;
  double alpha_ht = 0.0;  // used by K2 only
};

struct KEval {
  double K;
  double k;       // dK/dalpha
  double kprime;  // d2K/dalpha2
};

KSpec make_kspec(KKind kind, const EntropySpec& entropy, const Eigen::VectorXd& d, double N);
KEval k_eval(const KSpec& spec, double alpha);

struct AdjustedProblem {
  Eigen::MatrixXd x;         // n x p benchmark covariates (include an intercept
                             // column when a size control sum w_i = N is wanted)
  Eigen::VectorXd x_totals;  // p benchmark totals
  Eigen::VectorXd d;         // design weights
  EntropySpec entropy = EntropySpec::make(EntropyKind::EmpiricalLikelihood);
  KSpec kspec;
  double N = 0.0;
};

struct AdjustedResult {
  CalibrationResult result;  // lambda holds (lambda_1, lambda_2)
  double alpha_hat = 0.0;
  int outer_iterations = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

// K1: pins lambda_2 = 1 and solves the reduced dual over lambda_1 with
// per-unit offsets g(d_i); alpha_hat = N^{-1} sum_A w_i g(d_i).
// K2: safeguarded root-find on h(alpha) = k(alpha) - lambda_2(alpha), each
// evaluation an inner GEC solve at debias total N * alpha.
AdjustedResult solve_adjusted(const AdjustedProblem& problem);

// Local-constant kernel regression of g(d) on x at the query points:
//   m(x) = sum_A d_i g(d_i) K_h(x_i, x) / sum_A d_i K_h(x_i, x),
// Gaussian product kernel; bandwidth <= 0 selects Silverman's rule per
// coordinate (constant coordinates are skipped).  Throws std::runtime_error
// when every kernel weight underflows at some query point.
Eigen::VectorXd kernel_m_hat(const Eigen::MatrixXd& x_s, const Eigen::VectorXd& d,
                             const EntropySpec& entropy, const Eigen::MatrixXd& queries,
                             double bandwidth = 0.0);

// N^{-1} sum_{i in U} m(x_i) over the population covariates.
double kernel_alpha(const Eigen::MatrixXd& pop_x, const Eigen::MatrixXd& x_s,
                    const Eigen::VectorXd& d, const EntropySpec& entropy,
                    double bandwidth = 0.0);

}  // namespace gecal
