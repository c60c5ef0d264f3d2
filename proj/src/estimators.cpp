#include "gecal/estimators.hpp"

#include <cmath>

#include "gecal/linalg.hpp"

namespace gecal {

double ht_total(const Eigen::VectorXd& d, const Eigen::VectorXd& y) {
  if (d.size() != y.size()) throw std::invalid_argument("length mismatch");
  return d.dot(y);
}

double hajek_mean(const Eigen::VectorXd& d, const Eigen::VectorXd& y) {
  if (d.size() != y.size()) throw std::invalid_argument("length mismatch");
  return d.dot(y) / d.sum();
}

GregEstimate greg_estimate(const Eigen::MatrixXd& x_s, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& d, const Eigen::VectorXd& x_totals) {
  if (x_s.rows() != y.size() || x_s.rows() != d.size() || x_s.cols() != x_totals.size())
    throw std::invalid_argument("greg_estimate dimension mismatch");
  Eigen::MatrixXd gram = x_s.transpose() * d.asDiagonal() * x_s;
  Eigen::VectorXd moment = x_s.transpose() * (d.cwiseProduct(y));
  GregEstimate est;
  est.beta = spd_solve(gram, moment, "greg_estimate");
  est.residuals = y - x_s * est.beta;
  est.theta_total = x_totals.dot(est.beta) + d.dot(est.residuals);
  return est;
}

Eigen::VectorXd gamma_hat(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                          const EntropySpec& entropy, const Eigen::VectorXd& d,
                          const Eigen::VectorXd& costs) {
  const auto n = z.rows();
  if (y.size() != n || d.size() != n) throw std::invalid_argument("gamma_hat dimension mismatch");
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w[i] = 1.0 / entropy.gprime(d[i]);
    if (costs.size() > 0) w[i] /= costs[i];
  }
  Eigen::MatrixXd gram = z.transpose() * w.asDiagonal() * z;
  Eigen::VectorXd moment = z.transpose() * (w.cwiseProduct(y));
  return spd_solve(gram, moment, "gamma_hat");
}

Eigen::VectorXd gamma_opt(const Eigen::MatrixXd& z_pop, const Eigen::VectorXd& y_pop,
                          const Eigen::VectorXd& pi) {
  const auto N = z_pop.rows();
  if (y_pop.size() != N || pi.size() != N) throw std::invalid_argument("gamma_opt dimension mismatch");
  Eigen::VectorXd w(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double q = 1.0 / (pi[i] * pi[i]) - 1.0 / pi[i];
    w[i] = pi[i] * q;  // = 1/pi - 1
  }
  Eigen::MatrixXd gram = z_pop.transpose() * w.asDiagonal() * z_pop;
  Eigen::VectorXd moment = z_pop.transpose() * (w.cwiseProduct(y_pop));
  return spd_solve(gram, moment, "gamma_opt");
}

double calibrated_estimate(const Eigen::VectorXd& omega, const Eigen::VectorXd& y,
                           double N, bool as_mean) {
  if (omega.size() != y.size()) throw std::invalid_argument("length mismatch");
  const double total = omega.dot(y);
  return as_mean ? total / N : total;
}

double variance_estimate(const DesignInfo& design, const std::vector<int>& indices,
                         const Eigen::VectorXd& residuals) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  if (residuals.size() != n) throw std::invalid_argument("residual length mismatch");
  double total = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    const double pi_a = design.pi[indices[a]];
    for (Eigen::Index b = 0; b < n; ++b) {
      if (a == b) {
        // pi_ii = pi_i, so the diagonal factor is exactly 1 - pi_i.
        total += (1.0 - pi_a) * (residuals[a] / pi_a) * (residuals[a] / pi_a);
        continue;
      }
      const double pi_b = design.pi[indices[b]];
      const double pi_ab = joint_inclusion(design, indices[a], indices[b]);
      const double delta = pi_ab - pi_a * pi_b;
      if (delta == 0.0) continue;
      total += delta / pi_ab * (residuals[a] / pi_a) * (residuals[b] / pi_b);
    }
  }
  return total;
}

double variance_poisson(const Eigen::VectorXd& pi_s, const Eigen::VectorXd& residuals) {
  if (pi_s.size() != residuals.size()) throw std::invalid_argument("length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < pi_s.size(); ++i) {
    const double scaled = residuals[i] / pi_s[i];
    total += (1.0 - pi_s[i]) * scaled * scaled;
  }
  return total;
}

MhatCorrection m_hat_correction(const Eigen::MatrixXd& x_s, const Eigen::VectorXd& d,
                                const EntropySpec& entropy, KKind kind, double alpha_hat,
                                double N) {
  const auto n = x_s.rows();
  if (d.size() != n) throw std::invalid_argument("m_hat_correction dimension mismatch");
  Eigen::VectorXd w(n), gd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w[i] = 1.0 / entropy.gprime(d[i]);
    gd[i] = entropy.g(d[i]);
  }
  // Sigma blocks normalized by N; the N cancels in the projection but sets
  // the scale of Sigma_gg.x used by the K2 shrinkage factor.
  Eigen::MatrixXd sxx = x_s.transpose() * w.asDiagonal() * x_s / N;
  Eigen::VectorXd sxg = x_s.transpose() * (w.cwiseProduct(gd)) / N;
  const double sgg = gd.cwiseProduct(w).dot(gd) / N;

  MhatCorrection corr;
  corr.proj_coef = spd_solve(sxx, sxg, "m_hat_correction");
  corr.sigma_gg_x = sgg - sxg.dot(corr.proj_coef);
  if (kind == KKind::K2QinShrink)
    corr.shrink = (alpha_hat + 1.0) / (corr.sigma_gg_x + alpha_hat + 1.0);
  corr.m_hat = corr.shrink * (x_s * corr.proj_coef);
  return corr;
}

double variance_estimate_adjusted(const DesignInfo& design, const std::vector<int>& indices,
                                  const Eigen::MatrixXd& x_s, const Eigen::VectorXd& m_hat,
                                  const Eigen::VectorXd& y, const Eigen::VectorXd& gamma) {
  const auto n = x_s.rows();
  if (m_hat.size() != n || y.size() != n || gamma.size() != x_s.cols() + 1)
    throw std::invalid_argument("variance_estimate_adjusted dimension mismatch");
  Eigen::VectorXd residuals =
      y - x_s * gamma.head(gamma.size() - 1) - gamma[gamma.size() - 1] * m_hat;
  return variance_estimate(design, indices, residuals);
}

}  // namespace gecal
