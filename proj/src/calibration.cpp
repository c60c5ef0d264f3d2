#include "gecal/calibration.hpp"

#include <cmath>
#include <limits>

#include "gecal/linalg.hpp"

namespace gecal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxIterations = 100;
constexpr double kTolScale = 1e-9;
constexpr double kBoundaryFraction = 0.99;
constexpr double kArmijoC = 1e-4;
constexpr double kConditionLimit = 1e12;

bool all_in(const Interval& range, const Eigen::VectorXd& u) {
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (!range.contains(u[i])) return false;
  return true;
}

// Largest step (capped at 1) that keeps every u_i strictly inside `range`,
// consuming at most kBoundaryFraction of its current boundary distance.
double fraction_to_boundary(const Interval& range, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& du) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (du[i] > 0.0 && range.hi < kInf)
      alpha = std::min(alpha, kBoundaryFraction * (range.hi - u[i]) / du[i]);
    else if (du[i] < 0.0 && range.lo > -kInf)
      alpha = std::min(alpha, kBoundaryFraction * (u[i] - range.lo) / (-du[i]));
  }
  return alpha;
}

double dual_value(const EntropySpec& entropy, const Eigen::VectorXd& mult,
                  const Eigen::VectorXd& target, const Eigen::VectorXd& lambda,
                  const Eigen::VectorXd& u) {
  double value = -lambda.dot(target);
  for (Eigen::Index i = 0; i < u.size(); ++i) value += mult[i] * entropy.F(u[i]);
  return value;
}

// Rounding-noise level of the dual objective: decreases below this cannot be
// resolved by the Armijo test.
double dual_noise(const EntropySpec& entropy, const Eigen::VectorXd& mult,
                  const Eigen::VectorXd& target, const Eigen::VectorXd& lambda,
                  const Eigen::VectorXd& u) {
  double scale = std::abs(lambda.dot(target));
  for (Eigen::Index i = 0; i < u.size(); ++i) scale += std::abs(mult[i] * entropy.F(u[i]));
  return 1e-13 * (1.0 + scale);
}

void check_dimensions(const CalibrationProblem& problem) {
  const auto n = problem.z.rows();
  const auto k = problem.z.cols();
  if (n < 1 || k < 1) throw std::invalid_argument("calibration needs n >= 1 and k >= 1");
  if (n < k) throw std::invalid_argument("more controls than sampled units");
  if (problem.totals.size() != k)
    throw std::invalid_argument("totals length does not match covariate columns");
  if (problem.d.size() != n)
    throw std::invalid_argument("design weight length does not match covariate rows");
  if (!problem.z.allFinite() || !problem.totals.allFinite() || !problem.d.allFinite())
    throw std::invalid_argument("non-finite calibration inputs");
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = a + 1; b < k; ++b)
      if (problem.z.col(a) == problem.z.col(b))
        throw std::invalid_argument("duplicate covariate columns " + std::to_string(a) +
                                    " and " + std::to_string(b));
}

// The debiasing column (last) must match g(d_i) up to the stated scale.
void check_debias_column(const CalibrationProblem& problem, double weight_scale) {
  const auto n = problem.z.rows();
  const auto k = problem.z.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    double expected = problem.entropy.g(weight_scale * problem.d[i]);
    if (problem.mode == CalibMode::ModelAssisted) expected *= problem.costs[i];
    if (std::abs(problem.z(i, k - 1) - expected) > 1e-9 * (1.0 + std::abs(expected)))
      throw std::invalid_argument("last covariate column does not match the debiasing control");
  }
}

CalibrationResult decode(const CalibrationProblem& problem, const detail::DualOutcome& outcome,
                         const Eigen::MatrixXd& z_dual, const Eigen::VectorXd& offset,
                         double weight_factor, const Eigen::VectorXd& ratio_scale) {
  CalibrationResult result;
  result.lambda = outcome.lambda;
  result.iterations = outcome.iterations;
  result.grad_norm = outcome.grad_norm;
  result.hessian_condition = outcome.condition;
  result.status = outcome.status;
  result.message = outcome.message;
  if (outcome.lambda.size() == 0) return result;

  Eigen::VectorXd u = z_dual * outcome.lambda;
  if (offset.size() > 0) u += offset;
  const auto n = z_dual.rows();
  result.omega.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    result.omega[i] = weight_factor * ratio_scale[i] * problem.entropy.f(u[i]);

  Eigen::VectorXd achieved = problem.z.transpose() * result.omega;
  double rel = 0.0;
  for (Eigen::Index kk = 0; kk < achieved.size(); ++kk)
    rel = std::max(rel, std::abs(achieved[kk] - problem.totals[kk]) /
                            (1.0 + std::abs(problem.totals[kk])));
  result.constraint_residual = rel;
  return result;
}

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::Nonconvergence: return "nonconvergence";
    case SolveStatus::SingularHessian: return "singular-hessian";
    case SolveStatus::InfeasibleStart: return "infeasible-start";
  }
  return "?";
}

namespace detail {

DualOutcome dual_newton(const EntropySpec& entropy, const Eigen::MatrixXd& z,
                        const Eigen::VectorXd& mult, const Eigen::VectorXd& target,
                        const Eigen::VectorXd& tol, const Eigen::VectorXd& init,
                        const Eigen::VectorXd& offset) {
  const auto n = z.rows();
  const auto k = z.cols();
  const Interval range = entropy.dual_domain();

  DualOutcome out;
  Eigen::VectorXd lambda = init;
  auto eval_u = [&](const Eigen::VectorXd& lam) {
    Eigen::VectorXd u = z * lam;
    if (offset.size() > 0) u += offset;
    return u;
  };

  Eigen::VectorXd u = eval_u(lambda);
  if (!all_in(range, u)) {
    out.status = SolveStatus::InfeasibleStart;
    out.message = "initial dual point leaves g(V); no feasible start found";
    return out;
  }

  const double lambda_scale = 1.0 + init.cwiseAbs().maxCoeff();
  Eigen::VectorXd fu(n), fpu(n);
  for (int iter = 0; iter <= kMaxIterations; ++iter) {
    // An unbounded dual (infeasible primal constraints) shows up as runaway
    // multipliers; stop early instead of grinding toward overflow.
    if (lambda.cwiseAbs().maxCoeff() > 1e8 * lambda_scale) {
      out.lambda = lambda;
      out.status = SolveStatus::Nonconvergence;
      out.message = "dual multipliers diverged; constraints look infeasible";
      return out;
    }
    for (Eigen::Index i = 0; i < n; ++i) fu[i] = mult[i] * entropy.f(u[i]);
    Eigen::VectorXd grad = z.transpose() * fu - target;

    out.iterations = iter;
    out.grad_norm = grad.cwiseAbs().maxCoeff();
    bool done = true;
    for (Eigen::Index kk = 0; kk < k; ++kk)
      if (std::abs(grad[kk]) > tol[kk]) { done = false; break; }
    if (done) {
      // Polish: a couple of extra full Newton steps push the solution from
      // the stop tolerance to near machine precision, so downstream
      // coordinatewise equalities hold at their stated tolerances.
      for (int polish = 0; polish < 2; ++polish) {
        for (Eigen::Index i = 0; i < n; ++i) fpu[i] = mult[i] * entropy.fprime(u[i]);
        Eigen::MatrixXd hessian = z.transpose() * fpu.asDiagonal() * z;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
        if (ldlt.info() != Eigen::Success) break;
        Eigen::VectorXd step = ldlt.solve(-grad);
        Eigen::VectorXd du = z * step;
        const double alpha = fraction_to_boundary(range, u, du);
        Eigen::VectorXd trial_lambda = lambda + alpha * step;
        Eigen::VectorXd trial_u = eval_u(trial_lambda);
        if (!all_in(range, trial_u)) break;
        Eigen::VectorXd trial_fu(n);
        for (Eigen::Index i = 0; i < n; ++i) trial_fu[i] = mult[i] * entropy.f(trial_u[i]);
        Eigen::VectorXd trial_grad = z.transpose() * trial_fu - target;
        if (trial_grad.cwiseAbs().maxCoeff() >= out.grad_norm) break;
        lambda = trial_lambda;
        u = trial_u;
        grad = trial_grad;
        out.grad_norm = grad.cwiseAbs().maxCoeff();
      }
      out.lambda = lambda;
      out.status = SolveStatus::Converged;
      return out;
    }
    if (iter == kMaxIterations) break;

    for (Eigen::Index i = 0; i < n; ++i) fpu[i] = mult[i] * entropy.fprime(u[i]);
    Eigen::MatrixXd hessian = z.transpose() * fpu.asDiagonal() * z;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian);
    const double emin = es.eigenvalues().minCoeff();
    const double emax = es.eigenvalues().maxCoeff();
    out.condition = emin > 0.0 ? emax / emin : kInf;
    if (!(emin > 0.0) || out.condition > kConditionLimit) {
      out.lambda = lambda;
      out.status = SolveStatus::SingularHessian;
      out.message = "dual Hessian condition ~ " + std::to_string(out.condition);
      return out;
    }
    Eigen::VectorXd step = es.eigenvectors() *
                           (es.eigenvalues().cwiseInverse().asDiagonal() *
                            (es.eigenvectors().transpose() * (-grad)));

    Eigen::VectorXd du = z * step;
    double alpha = fraction_to_boundary(range, u, du);
    const double slope = grad.dot(step);
    const double value = dual_value(entropy, mult, target, lambda, u);
    // In the quadratic-convergence endgame the predicted decrease drops
    // below the objective's rounding noise and sufficient decrease becomes
    // unverifiable; take the capped Newton step as-is there.
    const bool below_noise =
        std::abs(alpha * slope) <= dual_noise(entropy, mult, target, lambda, u);

    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      Eigen::VectorXd trial_lambda = lambda + alpha * step;
      Eigen::VectorXd trial_u = eval_u(trial_lambda);
      if (all_in(range, trial_u)) {
        const double trial_value =
            dual_value(entropy, mult, target, trial_lambda, trial_u);
        if (below_noise || trial_value <= value + kArmijoC * alpha * slope) {
          lambda = trial_lambda;
          u = trial_u;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      out.lambda = lambda;
      out.status = SolveStatus::Nonconvergence;
      out.message = "line search failed";
      return out;
    }
  }

  out.lambda = lambda;
  out.status = SolveStatus::Nonconvergence;
  out.message = "iteration cap reached";
  return out;
}

}  // namespace detail

CalibrationResult solve_gec(const CalibrationProblem& problem) {
  if (problem.mode != CalibMode::GecKnown && problem.mode != CalibMode::ModelAssisted)
    throw std::invalid_argument("solve_gec expects mode GecKnown or ModelAssisted");
  check_dimensions(problem);
  const auto n = problem.z.rows();
  const auto k = problem.z.cols();

  Eigen::VectorXd mult = Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd z_dual = problem.z;
  if (problem.mode == CalibMode::ModelAssisted) {
    if (problem.costs.size() != n)
      throw std::invalid_argument("ModelAssisted requires unit costs");
    if ((problem.costs.array() <= 0.0).any())
      throw std::invalid_argument("unit costs must be positive");
    mult = problem.costs;
    // Dual covariates z_i / c_i: stationarity g(w_i) = lambda^T z_i / c_i.
    z_dual = problem.costs.cwiseInverse().asDiagonal() * problem.z;
  }
  check_debias_column(problem, 1.0);

  Eigen::VectorXd init = Eigen::VectorXd::Zero(k);
  init[k - 1] = 1.0;  // w = d start
  Eigen::VectorXd tol(k);
  for (Eigen::Index kk = 0; kk < k; ++kk)
    tol[kk] = kTolScale * (1.0 + std::abs(problem.totals[kk]));

  auto outcome = detail::dual_newton(problem.entropy, z_dual, mult, problem.totals, tol,
                                     init);
  return decode(problem, outcome, z_dual, Eigen::VectorXd(), 1.0,
                Eigen::VectorXd::Ones(n));
}

CalibrationResult solve_ds(const CalibrationProblem& problem) {
  if (problem.mode != CalibMode::DsBenchmarkOnly && problem.mode != CalibMode::DsWithDebias)
    throw std::invalid_argument("solve_ds expects a DS mode");
  check_dimensions(problem);
  const auto n = problem.z.rows();
  const auto k = problem.z.cols();
  if ((problem.d.array() <= 0.0).any())
    throw std::invalid_argument("design weights must be positive");
  if (problem.mode == CalibMode::DsWithDebias) check_debias_column(problem, 1.0);

  const Interval range = problem.entropy.dual_domain();
  Eigen::VectorXd init = Eigen::VectorXd::Zero(k);
  if (!range.contains(0.0)) {
    // Start at the w = d (or mid-domain) ratio: fit lambda^T z_i ~ g(v0).
    const double v0 = problem.entropy.domain().contains(1.0) ? 1.0 : 2.0;
    const double u0 = problem.entropy.g(v0);
    init = problem.z.colPivHouseholderQr().solve(Eigen::VectorXd::Constant(n, u0));
    Eigen::VectorXd u_init = problem.z * init;
    if (!all_in(range, u_init)) {
      CalibrationResult result;
      result.status = SolveStatus::InfeasibleStart;
      result.message = "no dual point with all lambda^T z_i inside g(V) was found";
      return result;
    }
  }

  Eigen::VectorXd tol(k);
  for (Eigen::Index kk = 0; kk < k; ++kk)
    tol[kk] = kTolScale * (1.0 + std::abs(problem.totals[kk]));

  auto outcome = detail::dual_newton(problem.entropy, problem.z, problem.d,
                                     problem.totals, tol, init);
  return decode(problem, outcome, problem.z, Eigen::VectorXd(), 1.0, problem.d);
}

CalibrationResult solve_gec_scaled(const CalibrationProblem& problem, int n_size, double N) {
  if (problem.mode != CalibMode::GecScaled)
    throw std::invalid_argument("solve_gec_scaled expects mode GecScaled");
  if (n_size <= 0 || N <= 0) throw std::invalid_argument("n and N must be positive");
  check_dimensions(problem);
  const double scale = static_cast<double>(n_size) / N;
  CalibrationProblem scaled = problem;
  scaled.n_over_N = scale;
  check_debias_column(scaled, scale);

  const auto n = problem.z.rows();
  const auto k = problem.z.cols();
  Eigen::VectorXd init = Eigen::VectorXd::Zero(k);
  init[k - 1] = 1.0;
  // Dual target and tolerance are in the scaled metric; the decoded weights
  // then satisfy the user-scale residual bound.
  Eigen::VectorXd target = scale * problem.totals;
  Eigen::VectorXd tol(k);
  for (Eigen::Index kk = 0; kk < k; ++kk)
    tol[kk] = kTolScale * scale * (1.0 + std::abs(problem.totals[kk]));

  auto outcome = detail::dual_newton(problem.entropy, problem.z,
                                     Eigen::VectorXd::Ones(n), target, tol, init);
  return decode(scaled, outcome, problem.z, Eigen::VectorXd(), 1.0 / scale,
                Eigen::VectorXd::Ones(n));
}

}  // namespace gecal
