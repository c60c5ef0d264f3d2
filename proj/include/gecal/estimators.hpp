#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gecal/adjusted.hpp"
#include "gecal/entropy.hpp"
#include "gecal/population.hpp"

namespace gecal {

// Horvitz-Thompson total sum_A d_i y_i.
double ht_total(const Eigen::VectorXd& d, const Eigen::VectorXd& y);

// Hajek mean sum_A d_i y_i / sum_A d_i.
double hajek_mean(const Eigen::VectorXd& d, const Eigen::VectorXd& y);

struct GregEstimate {
  double theta_total = 0.0;
  Eigen::VectorXd beta;       // (sum_A d x x^T)^{-1} sum_A d x y
  Eigen::VectorXd residuals;  // y - x^T beta
};

// GREG total: sum_U x^T beta + sum_A d (y - x^T beta).
GregEstimate greg_estimate(const Eigen::MatrixXd& x_s, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& d, const Eigen::VectorXd& x_totals);

// Entropy regression coefficient with weights 1/g'(d_i) (divided further by
// c_i when costs are supplied):
//   gamma = { sum_A z z^T / g'(d) }^{-1} sum_A z y / g'(d).
Eigen::VectorXd gamma_hat(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                          const EntropySpec& entropy, const Eigen::VectorXd& d,
                          const Eigen::VectorXd& costs = Eigen::VectorXd());

// Design-optimal coefficient under Poisson sampling (population oracle):
//   gamma_opt = ( sum_U pi q z z^T )^{-1} sum_U pi q z y,  q = pi^{-2} - pi^{-1}.
Eigen::VectorXd gamma_opt(const Eigen::MatrixXd& z_pop, const Eigen::VectorXd& y_pop,
                          const Eigen::VectorXd& pi);

// sum w_i y_i, divided by N when as_mean.
double calibrated_estimate(const Eigen::VectorXd& omega, const Eigen::VectorXd& y,
                           double N, bool as_mean);

// Design variance of a total from residuals:
//   sum_{i,j in A} (pi_ij - pi_i pi_j)/pi_ij * (eps_i/pi_i)(eps_j/pi_j).
// The general form uses the design's joint-inclusion rule; the Poisson
// shortcut keeps only the diagonal sum (1 - pi) eps^2 / pi^2.
double variance_estimate(const DesignInfo& design, const std::vector<int>& indices,
                         const Eigen::VectorXd& residuals);
double variance_poisson(const Eigen::VectorXd& pi_s, const Eigen::VectorXd& residuals);

// m-hat correction for the unknown-alpha variance estimator.  proj is the
// 1/g'(d)-weighted linear projection of g(d) on x; K1 uses m = proj, K2
// shrinks it by (alpha_hat + 1)/(Sigma_gg.x + alpha_hat + 1).
struct MhatCorrection {
  Eigen::VectorXd m_hat;
  Eigen::VectorXd proj_coef;
  double sigma_gg_x = 0.0;
  double shrink = 1.0;
};

MhatCorrection m_hat_correction(const Eigen::MatrixXd& x_s, const Eigen::VectorXd& d,
                                const EntropySpec& entropy, KKind kind, double alpha_hat,
                                double N);

// Adjusted variance: the quadratic form above with z_i^T gamma replaced by
// (x_i^T, m_hat_i) gamma.
double variance_estimate_adjusted(const DesignInfo& design, const std::vector<int>& indices,
                                  const Eigen::MatrixXd& x_s, const Eigen::VectorXd& m_hat,
                                  const Eigen::VectorXd& y, const Eigen::VectorXd& gamma);

}  // namespace gecal
