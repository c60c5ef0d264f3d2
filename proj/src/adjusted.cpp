#include "gecal/adjusted.hpp"

#include <cmath>
#include <optional>

namespace gecal {

namespace {

constexpr double kRootTol = 1e-8;  // |k(alpha) - lambda_2(alpha)| target

Eigen::VectorXd relative_tol(const Eigen::VectorXd& totals) {
  Eigen::VectorXd tol(totals.size());
  for (Eigen::Index k = 0; k < totals.size(); ++k)
    tol[k] = 1e-9 * (1.0 + std::abs(totals[k]));
  return tol;
}

}  // namespace

KSpec make_kspec(KKind kind, const EntropySpec& entropy, const Eigen::VectorXd& d, double N) {
  KSpec spec;
  spec.kind = kind;
  if (kind == KKind::K2QinShrink) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) sum += d[i] * entropy.g(d[i]);
    spec.alpha_ht = sum / N;
  }
  return spec;
}

KEval k_eval(const KSpec& spec, double alpha) {
  if (spec.kind == KKind::K1Identity) return {alpha, 1.0, 0.0};
  const double shifted = alpha + 1.0;
  if (shifted == 0.0) throw std::domain_error("K2 is undefined at alpha = -1");
  const double scale = spec.alpha_ht + 1.0;
  return {scale * std::log(std::abs(shifted)), scale / shifted, -scale / (shifted * shifted)};
}

namespace {

struct InnerSolve {
  CalibrationResult result;
  double lambda2 = 0.0;
  double alpha_realized = 0.0;  // N^{-1} sum w_i g(d_i)
};

// One GEC solve at debias total N*alpha over z = [x, g(d)], warm-started.
std::optional<InnerSolve> inner_solve(const AdjustedProblem& p, const Eigen::MatrixXd& z,
                                      const Eigen::VectorXd& gd, double alpha,
                                      Eigen::VectorXd& warm) {
  const auto n = p.x.rows();
  const auto k = z.cols();
  Eigen::VectorXd target(k);
  target.head(k - 1) = p.x_totals;
  target[k - 1] = p.N * alpha;

  auto outcome = detail::dual_newton(p.entropy, z, Eigen::VectorXd::Ones(n), target,
                                     relative_tol(target), warm);
  if (outcome.status != SolveStatus::Converged) return std::nullopt;
  warm = outcome.lambda;

  InnerSolve inner;
  inner.result.lambda = outcome.lambda;
  inner.result.iterations = outcome.iterations;
  inner.result.grad_norm = outcome.grad_norm;
  inner.result.hessian_condition = outcome.condition;
  inner.result.status = outcome.status;
  inner.result.omega.resize(n);
  Eigen::VectorXd u = z * outcome.lambda;
  double alpha_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    inner.result.omega[i] = p.entropy.f(u[i]);
    alpha_sum += inner.result.omega[i] * gd[i];
  }
  inner.alpha_realized = alpha_sum / p.N;
  inner.lambda2 = outcome.lambda[k - 1];

  Eigen::VectorXd achieved = p.x.transpose() * inner.result.omega;
  double rel = 0.0;
  for (Eigen::Index kk = 0; kk < p.x_totals.size(); ++kk)
    rel = std::max(rel, std::abs(achieved[kk] - p.x_totals[kk]) /
                            (1.0 + std::abs(p.x_totals[kk])));
  inner.result.constraint_residual = rel;
  return inner;
}

AdjustedResult solve_adjusted_k1(const AdjustedProblem& p) {
  const auto n = p.x.rows();
  Eigen::VectorXd gd(n);
  for (Eigen::Index i = 0; i < n; ++i) gd[i] = p.entropy.g(p.d[i]);

  // lambda_2 = 1 exactly: reduced dual over lambda_1 with offsets g(d_i).
  auto outcome = detail::dual_newton(p.entropy, p.x, Eigen::VectorXd::Ones(n), p.x_totals,
                                     relative_tol(p.x_totals),
                                     Eigen::VectorXd::Zero(p.x.cols()), gd);
  AdjustedResult adj;
  adj.result.iterations = outcome.iterations;
  adj.result.grad_norm = outcome.grad_norm;
  adj.result.hessian_condition = outcome.condition;
  adj.result.status = outcome.status;
  adj.result.message = outcome.message;
  adj.result.lambda.resize(p.x.cols() + 1);
  adj.result.lambda.head(p.x.cols()) = outcome.lambda;
  adj.result.lambda[p.x.cols()] = 1.0;
  if (outcome.status != SolveStatus::Converged) return adj;

  adj.result.omega.resize(n);
  Eigen::VectorXd u = p.x * outcome.lambda + gd;
  double alpha_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    adj.result.omega[i] = p.entropy.f(u[i]);
    alpha_sum += adj.result.omega[i] * gd[i];
  }
  adj.alpha_hat = alpha_sum / p.N;
  adj.bracket_lo = adj.bracket_hi = adj.alpha_hat;

  Eigen::VectorXd achieved = p.x.transpose() * adj.result.omega;
  double rel = 0.0;
  for (Eigen::Index kk = 0; kk < p.x_totals.size(); ++kk)
    rel = std::max(rel, std::abs(achieved[kk] - p.x_totals[kk]) /
                            (1.0 + std::abs(p.x_totals[kk])));
  adj.result.constraint_residual = rel;
  return adj;
}

AdjustedResult solve_adjusted_k2(const AdjustedProblem& p) {
  const auto n = p.x.rows();
  Eigen::VectorXd gd(n);
  for (Eigen::Index i = 0; i < n; ++i) gd[i] = p.entropy.g(p.d[i]);
  Eigen::MatrixXd z(n, p.x.cols() + 1);
  z.leftCols(p.x.cols()) = p.x;
  z.col(p.x.cols()) = gd;

  Eigen::VectorXd warm = Eigen::VectorXd::Zero(z.cols());
  warm[z.cols() - 1] = 1.0;

  AdjustedResult adj;
  int outer = 0;
  auto fail = [&](const std::string& message) {
    adj.result.status = SolveStatus::Nonconvergence;
    adj.result.message = message;
    adj.outer_iterations = outer;
    return adj;
  };

  // h(alpha) = k(alpha) - lambda_2(alpha) is strictly decreasing on A_n.
  auto h_at = [&](double alpha) -> std::optional<std::pair<double, InnerSolve>> {
    auto inner = inner_solve(p, z, gd, alpha, warm);
    if (!inner) return std::nullopt;
    ++outer;
    return std::make_pair(k_eval(p.kspec, alpha).k - inner->lambda2, *inner);
  };

  double alpha0 = p.kspec.alpha_ht;
  auto at0 = h_at(alpha0);
  if (!at0) {
    // The plug-in start can fall outside A_n on small or badly balanced
    // samples.  The lambda_2-pinned (K1) solution realizes a feasible alpha
    // whenever one exists, so anchor there instead.
    AdjustedProblem reduced = p;
    reduced.kspec = KSpec{KKind::K1Identity, 0.0};
    auto k1 = solve_adjusted_k1(reduced);
    if (!k1.result.converged())
      return fail("inner solve failed at the plug-in start and no feasible anchor found");
    alpha0 = k1.alpha_hat;
    warm = k1.result.lambda;
    at0 = h_at(alpha0);
    if (!at0) return fail("inner solve failed at the feasible anchor alpha");
  }
  double h0 = at0->first;

  if (std::abs(h0) <= kRootTol) {
    adj.result = at0->second.result;
    adj.alpha_hat = alpha0;
    adj.bracket_lo = adj.bracket_hi = alpha0;
    adj.outer_iterations = outer;
    return adj;
  }

  // Geometric expansion from alpha0 toward the root.
  const double dir = h0 > 0.0 ? 1.0 : -1.0;
  double step = std::max(0.1 * (1.0 + std::abs(alpha0)), 1e-3);
  double a_good = alpha0, h_good = h0;
  double a_opp = 0.0, h_opp = 0.0;
  bool bracketed = false;
  for (int tries = 0; tries < 80 && !bracketed; ++tries) {
    const double cand = a_good + dir * step;
    auto at = h_at(cand);
    if (!at) {
      step *= 0.5;
      if (step < 1e-14 * (1.0 + std::abs(alpha0)))
        return fail("bracket failure: admissible interval exhausted before a sign change");
      continue;
    }
    if ((at->first > 0.0) != (h0 > 0.0) || at->first == 0.0) {
      a_opp = cand;
      h_opp = at->first;
      bracketed = true;
    } else {
      a_good = cand;
      h_good = at->first;
      step *= 2.0;
    }
  }
  if (!bracketed) return fail("bracket failure: no sign change of k(alpha) - lambda_2(alpha)");

  // Order the bracket as (lo: h > 0, hi: h < 0); h decreases in alpha.
  double a_lo = h_good > 0.0 ? a_good : a_opp;
  double h_lo = h_good > 0.0 ? h_good : h_opp;
  double a_hi = h_good > 0.0 ? a_opp : a_good;
  double h_hi = h_good > 0.0 ? h_opp : h_good;

  for (int iter = 0; iter < 100; ++iter) {
    double cand = a_lo - h_lo * (a_hi - a_lo) / (h_hi - h_lo);  // secant
    const double lo = std::min(a_lo, a_hi), hi = std::max(a_lo, a_hi);
    if (!(cand > lo && cand < hi)) cand = 0.5 * (a_lo + a_hi);
    auto at = h_at(cand);
    if (!at) {
      cand = 0.5 * (a_lo + a_hi);
      at = h_at(cand);
      if (!at) return fail("inner solve failed inside the bracket");
    }
    const double h_cand = at->first;
    if (std::abs(h_cand) <= kRootTol) {
      adj.result = at->second.result;
      adj.alpha_hat = cand;
      adj.bracket_lo = std::min(a_lo, a_hi);
      adj.bracket_hi = std::max(a_lo, a_hi);
      adj.outer_iterations = outer;
      return adj;
    }
    if (h_cand > 0.0) {
      a_lo = cand;
      h_lo = h_cand;
    } else {
      a_hi = cand;
      h_hi = h_cand;
    }
  }
  return fail("outer root-find did not reach |h| <= 1e-8");
}

}  // namespace

AdjustedResult solve_adjusted(const AdjustedProblem& problem) {
  if (problem.x.rows() != problem.d.size())
    throw std::invalid_argument("covariate rows and design weights differ");
  if (problem.x.cols() != problem.x_totals.size())
    throw std::invalid_argument("benchmark totals do not match covariates");
  if (!(problem.N > 0)) throw std::invalid_argument("N must be positive");
  if (problem.kspec.kind == KKind::K1Identity) return solve_adjusted_k1(problem);
  return solve_adjusted_k2(problem);
}

Eigen::VectorXd kernel_m_hat(const Eigen::MatrixXd& x_s, const Eigen::VectorXd& d,
                             const EntropySpec& entropy, const Eigen::MatrixXd& queries,
                             double bandwidth) {
  const auto n = x_s.rows();
  const auto p = x_s.cols();
  const auto q_count = queries.rows();
  if (queries.cols() != p) throw std::invalid_argument("query/sample covariate mismatch");
  if (d.size() != n) throw std::invalid_argument("design weight length mismatch");
  if (n < 1 || q_count < 1) throw std::invalid_argument("empty inputs");

  Eigen::VectorXd gd(n);
  for (Eigen::Index i = 0; i < n; ++i) gd[i] = entropy.g(d[i]);

  // Per-coordinate bandwidths; sigma == 0 coordinates carry no information
  // and are skipped.
  Eigen::VectorXd inv_h = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double h = bandwidth;
    if (h <= 0.0) {
      const double mean = x_s.col(j).mean();
      const double var = (x_s.col(j).array() - mean).square().sum() /
                         std::max<double>(1, n - 1);
      const double sigma = std::sqrt(var);
      if (sigma <= 0.0) continue;
      h = 1.06 * sigma * std::pow(static_cast<double>(n), -0.2);
    }
    inv_h[j] = 1.0 / h;
  }

  Eigen::VectorXd m(q_count);
  for (Eigen::Index q = 0; q < q_count; ++q) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double dist2 = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double t = (x_s(i, j) - queries(q, j)) * inv_h[j];
        dist2 += t * t;
      }
      const double w = d[i] * std::exp(-0.5 * dist2);
      num += w * gd[i];
      den += w;
    }
    if (den <= 0.0)
      throw std::runtime_error("empty kernel neighborhood at query row " +
                               std::to_string(q));
    m[q] = num / den;
  }
  return m;
}

double kernel_alpha(const Eigen::MatrixXd& pop_x, const Eigen::MatrixXd& x_s,
                    const Eigen::VectorXd& d, const EntropySpec& entropy,
                    double bandwidth) {
  return kernel_m_hat(x_s, d, entropy, pop_x, bandwidth).mean();
}

}  // namespace gecal
