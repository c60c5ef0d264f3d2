#include "oracles.hpp"

#include <cmath>
#include <limits>

#include "gecal/rng.hpp"

namespace gecal::testing {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool ratios_inside(const Interval& domain, const Eigen::VectorXd& b,
                   const Eigen::VectorXd& w) {
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (!domain.contains(b[i] * w[i])) return false;
  return true;
}

}  // namespace

std::optional<Eigen::VectorXd> brute_force_primal(const EntropySpec& entropy,
                                                  const Eigen::MatrixXd& z,
                                                  const Eigen::VectorXd& totals,
                                                  const Eigen::VectorXd& a,
                                                  const Eigen::VectorXd& b) {
  const auto n = z.rows();
  const auto k = z.cols();
  const Interval domain = entropy.domain();

  // Interior start: b_i w_i at a mid-domain point.
  const double v0 = domain.contains(1.0) ? 1.0 : 2.0;
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, v0).cwiseQuotient(b);

  Eigen::VectorXd dual = Eigen::VectorXd::Zero(k);
  double mu = 10.0;
  auto residual = [&](const Eigen::VectorXd& wv) { return (z.transpose() * wv - totals).eval(); };

  auto lagrangian = [&](const Eigen::VectorXd& wv) {
    double value = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) value += a[i] * entropy.G(b[i] * wv[i]);
    Eigen::VectorXd r = residual(wv);
    return value + dual.dot(r) + 0.5 * mu * r.squaredNorm();
  };

  double prev_norm = kInf;
  for (int outer = 0; outer < 60; ++outer) {
    // Newton minimization of the augmented Lagrangian.
    for (int inner = 0; inner < 200; ++inner) {
      Eigen::VectorXd r = residual(w);
      Eigen::VectorXd grad(n);
      Eigen::VectorXd curv(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        grad[i] = a[i] * b[i] * entropy.g(b[i] * w[i]);
        curv[i] = a[i] * b[i] * b[i] * entropy.gprime(b[i] * w[i]);
      }
      grad += z * (dual + mu * r);
      const double gnorm = grad.cwiseAbs().maxCoeff();
      if (gnorm <= 1e-11 * (1.0 + mu + dual.cwiseAbs().maxCoeff())) break;

      Eigen::MatrixXd hess = mu * (z * z.transpose());
      hess.diagonal() += curv;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      if (ldlt.info() != Eigen::Success) return std::nullopt;
      Eigen::VectorXd step = ldlt.solve(-grad);

      // Keep b w strictly inside V (consume at most 99.9% of the distance).
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double bi = b[i];
        const double u = bi * w[i];
        const double du = bi * step[i];
        if (du > 0.0 && domain.hi < kInf) alpha = std::min(alpha, 0.999 * (domain.hi - u) / du);
        if (du < 0.0 && domain.lo > -kInf) alpha = std::min(alpha, 0.999 * (u - domain.lo) / (-du));
      }
      const double base = lagrangian(w);
      const double slope = grad.dot(step);
      bool ok = false;
      for (int half = 0; half < 60; ++half) {
        Eigen::VectorXd trial = w + alpha * step;
        if (ratios_inside(domain, b, trial) &&
            lagrangian(trial) <= base + 1e-4 * alpha * slope) {
          w = trial;
          ok = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!ok) break;
    }

    Eigen::VectorXd r = residual(w);
    const double rnorm = r.cwiseAbs().maxCoeff() / (1.0 + totals.cwiseAbs().maxCoeff());
    if (rnorm <= 1e-12) return w;
    dual += mu * r;
    if (rnorm > 0.25 * prev_norm) mu = std::min(mu * 10.0, 1e12);
    prev_norm = rnorm;
  }
  return std::nullopt;
}

namespace {

double simpson(const std::function<double(double)>& f, double a, double b, double fa,
               double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

SmallInstance make_small_instance(const EntropySpec& entropy, int n, int p, bool with_debias,
                                  std::uint64_t seed) {
  Stream stream(seed, 0x74657374ull);
  const int n_pop = 40 + static_cast<int>(seed % 17);

  Eigen::MatrixXd x_pop(n_pop, 1 + p);
  Eigen::VectorXd d_pop(n_pop), y_pop(n_pop);
  for (int i = 0; i < n_pop; ++i) {
    x_pop(i, 0) = 1.0;
    for (int j = 0; j < p; ++j) x_pop(i, 1 + j) = stream.normal(1.0, 1.0);
    const double pi = stream.uniform(0.15, 0.85);
    d_pop[i] = 1.0 / pi;
    double mean = 0.0;
    for (int j = 0; j <= p; ++j) mean += x_pop(i, j);
    y_pop[i] = mean + stream.normal();
  }

  // Sample: n distinct units chosen by a stream shuffle.
  std::vector<int> order(n_pop);
  for (int i = 0; i < n_pop; ++i) order[i] = i;
  for (int i = n_pop - 1; i > 0; --i) {
    const int j = static_cast<int>(stream.uniform() * (i + 1));
    std::swap(order[i], order[std::min(j, i)]);
  }

  SmallInstance inst;
  const int k = 1 + p + (with_debias ? 1 : 0);
  inst.z.resize(n, k);
  inst.d.resize(n);
  inst.y.resize(n);
  inst.x_bench.resize(n, 1 + p);
  for (int i = 0; i < n; ++i) {
    const int row = order[i];
    inst.x_bench.row(i) = x_pop.row(row);
    inst.z.row(i).head(1 + p) = x_pop.row(row);
    inst.d[i] = d_pop[row];
    inst.y[i] = y_pop[row];
    if (with_debias) inst.z(i, k - 1) = entropy.g(d_pop[row]);
  }

  inst.totals.resize(k);
  inst.bench_totals.resize(1 + p);
  for (int j = 0; j <= p; ++j) inst.bench_totals[j] = x_pop.col(j).sum();
  inst.totals.head(1 + p) = inst.bench_totals;
  if (with_debias) {
    double tg = 0.0;
    for (int i = 0; i < n_pop; ++i) tg += entropy.g(d_pop[i]);
    inst.totals[k - 1] = tg;
  }
  inst.N = n_pop;
  inst.x_pop = x_pop;
  inst.d_pop = d_pop;
  inst.y_pop = y_pop;
  inst.pi_pop = d_pop.cwiseInverse();
  return inst;
}

}  // namespace gecal::testing
