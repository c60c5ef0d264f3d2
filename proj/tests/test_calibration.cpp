#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gecal/calibration.hpp"
#include "oracles.hpp"

using namespace gecal;
using gecal::testing::make_small_instance;

namespace {

CalibrationProblem gec_problem(const testing::SmallInstance& inst, const EntropySpec& spec) {
  CalibrationProblem problem;
  problem.mode = CalibMode::GecKnown;
  problem.entropy = spec;
  problem.z = inst.z;
  problem.totals = inst.totals;
  problem.d = inst.d;
  return problem;
}

double dual_objective(const EntropySpec& spec, const CalibrationProblem& p,
                      const Eigen::VectorXd& lambda, const Eigen::VectorXd& mult) {
  double value = -lambda.dot(p.totals);
  Eigen::VectorXd u = p.z * lambda;
  for (Eigen::Index i = 0; i < u.size(); ++i) value += mult[i] * spec.F(u[i]);
  return value;
}

}  // namespace

TEST_CASE("debias-only fixed point returns design weights") {
  auto el = EntropySpec::make(EntropyKind::EmpiricalLikelihood);
  const int n = 6;
  Eigen::VectorXd d(n);
  d << 2.0, 3.0, 1.5, 4.0, 2.5, 5.0;
  CalibrationProblem problem;
  problem.mode = CalibMode::GecKnown;
  problem.entropy = el;
  problem.d = d;
  problem.z.resize(n, 1);
  double tg = 0.0;
  for (int i = 0; i < n; ++i) {
    problem.z(i, 0) = el.g(d[i]);
    tg += d[i] * el.g(d[i]);
  }
  problem.totals.resize(1);
  problem.totals << tg;

  auto result = solve_gec(problem);
  REQUIRE(result.converged());
  CHECK(result.iterations == 0);
  CHECK(result.lambda[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < n; ++i) CHECK(result.omega[i] == doctest::Approx(d[i]).epsilon(1e-10));
}

TEST_CASE("idempotent debias fixed point with benchmarks") {
  // Totals computed from the design weights themselves.
  auto ce = EntropySpec::make(EntropyKind::CrossEntropy);
  auto inst = make_small_instance(ce, 8, 1, true, 5);
  inst.totals = inst.z.transpose() * inst.d;
  auto result = solve_gec(gec_problem(inst, ce));
  REQUIRE(result.converged());
  for (int i = 0; i < 8; ++i) CHECK(result.omega[i] == doctest::Approx(inst.d[i]).epsilon(1e-9));
  for (Eigen::Index k = 0; k + 1 < result.lambda.size(); ++k)
    CHECK(std::abs(result.lambda[k]) <= 1e-9);
  CHECK(result.lambda[result.lambda.size() - 1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("squared loss dual is an exact linear solve") {
  auto sq = EntropySpec::make(EntropyKind::SquaredLoss);
  auto inst = make_small_instance(sq, 10, 2, true, 3);
  auto result = solve_gec(gec_problem(inst, sq));
  REQUIRE(result.converged());

  Eigen::MatrixXd gram = inst.z.transpose() * inst.z;
  Eigen::VectorXd lambda = gram.ldlt().solve(inst.totals);
  Eigen::VectorXd omega = inst.z * lambda;
  for (int i = 0; i < 10; ++i)
    CHECK(std::abs(result.omega[i] - omega[i]) <= 1e-10 * (1.0 + std::abs(omega[i])));
}

TEST_CASE("gec matches brute-force primal oracle (EL hand instance)") {
  auto el = EntropySpec::make(EntropyKind::EmpiricalLikelihood);
  // n = 4, p = 1 fixed instance.
  CalibrationProblem problem;
  problem.mode = CalibMode::GecKnown;
  problem.entropy = el;
  problem.z.resize(4, 3);
  problem.d.resize(4);
  problem.d << 2.0, 4.0, 3.0, 5.0;
  for (int i = 0; i < 4; ++i) {
    problem.z(i, 0) = 1.0;
    problem.z(i, 1) = static_cast<double>(i + 1);
    problem.z(i, 2) = el.g(problem.d[i]);
  }
  problem.totals.resize(3);
  problem.totals << 14.0, 36.0, -4.2;

  auto result = solve_gec(problem);
  REQUIRE(result.converged());
  auto oracle = testing::brute_force_primal(el, problem.z, problem.totals,
                                            Eigen::VectorXd::Ones(4), Eigen::VectorXd::Ones(4));
  REQUIRE(oracle.has_value());
  for (int i = 0; i < 4; ++i) CHECK(std::abs(result.omega[i] - (*oracle)[i]) <= 1e-6);
}

TEST_CASE("gec and ds match the oracle on random instances") {
  auto kinds = std::vector<EntropySpec>{
      EntropySpec::make(EntropyKind::EmpiricalLikelihood),
      EntropySpec::make(EntropyKind::CrossEntropy),
      EntropySpec::make(EntropyKind::Hellinger),
      EntropySpec::make(EntropyKind::PseudoHuber, {8.0}),
      EntropySpec::make(EntropyKind::Renyi, {0.5}),
  };
  for (const auto& spec : kinds) {
    CAPTURE(spec.name());
    int done = 0;
    for (std::uint64_t seed = 1; seed < 400 && done < 8; ++seed) {
      const int n = 5 + static_cast<int>(seed % 8);
      const int p = static_cast<int>(seed % 3);
      auto inst = make_small_instance(spec, n, p, true, seed);

      auto gec = solve_gec(gec_problem(inst, spec));
      if (!gec.converged()) continue;
      auto oracle = testing::brute_force_primal(spec, inst.z, inst.totals,
                                                Eigen::VectorXd::Ones(n),
                                                Eigen::VectorXd::Ones(n));
      if (!oracle) continue;
      for (int i = 0; i < n; ++i) CHECK(std::abs(gec.omega[i] - (*oracle)[i]) <= 1e-6);

      CalibrationProblem ds_problem = gec_problem(inst, spec);
      ds_problem.mode = CalibMode::DsWithDebias;
      auto ds = solve_ds(ds_problem);
      if (ds.converged()) {
        auto ds_oracle = testing::brute_force_primal(spec, inst.z, inst.totals, inst.d,
                                                     inst.d.cwiseInverse());
        if (ds_oracle)
          for (int i = 0; i < n; ++i) CHECK(std::abs(ds.omega[i] - (*ds_oracle)[i]) <= 1e-6);
      }
      ++done;
    }
    CHECK(done >= 5);
  }
}

TEST_CASE("primal objective equals minus the dual optimum") {
  auto hd = EntropySpec::make(EntropyKind::Hellinger);
  auto inst = make_small_instance(hd, 9, 1, true, 21);
  auto problem = gec_problem(inst, hd);
  auto result = solve_gec(problem);
  REQUIRE(result.converged());
  double primal = 0.0;
  for (int i = 0; i < 9; ++i) primal += hd.G(result.omega[i]);
  const double dual = dual_objective(hd, problem, result.lambda, Eigen::VectorXd::Ones(9));
  CHECK(std::abs(primal + dual) <= 1e-8 * (1.0 + std::abs(primal)));
}

TEST_CASE("scale invariance of G") {
  // Minimizing sum c*G(w) under the same constraint set must return the same
  // weights for any c > 0.  ModelAssisted with constant costs realizes the
  // scaled objective: its debias control sum w g(d) c = T_g c is the same
  // constraint as sum w g(d) = T_g.
  auto el = EntropySpec::make(EntropyKind::EmpiricalLikelihood);
  auto inst = make_small_instance(el, 8, 1, true, 13);
  auto plain = gec_problem(inst, el);
  auto base = solve_gec(plain);
  REQUIRE(base.converged());

  for (double c : {0.1, 7.3, 250.0}) {
    CalibrationProblem scaled = plain;
    scaled.mode = CalibMode::ModelAssisted;
    scaled.costs = Eigen::VectorXd::Constant(8, c);
    scaled.z.col(scaled.z.cols() - 1) *= c;
    scaled.totals[scaled.totals.size() - 1] *= c;
    auto result = solve_gec(scaled);
    REQUIRE(result.converged());
    for (int i = 0; i < 8; ++i)
      CHECK(std::abs(result.omega[i] - base.omega[i]) <=
            1e-10 * (1.0 + std::abs(base.omega[i])));
  }
}

TEST_CASE("ds equals gec under exponential tilting with debias") {
  auto et = EntropySpec::make(EntropyKind::ExponentialTilting);
  for (std::uint64_t seed : {2ull, 7ull, 19ull, 33ull}) {
    auto inst = make_small_instance(et, 10, 2, true, seed);
    auto gec = solve_gec(gec_problem(inst, et));
    CalibrationProblem dsp = gec_problem(inst, et);
    dsp.mode = CalibMode::DsWithDebias;
    auto ds = solve_ds(dsp);
    if (!gec.converged() || !ds.converged()) continue;
    for (int i = 0; i < 10; ++i)
      CHECK(std::abs(gec.omega[i] - ds.omega[i]) <= 1e-8 * (1.0 + std::abs(gec.omega[i])));
  }
}

TEST_CASE("ds chi-square form equals classical regression weights") {
  auto sq = EntropySpec::make(EntropyKind::SquaredLoss);
  auto inst = make_small_instance(sq, 12, 2, false, 17);
  CalibrationProblem problem;
  problem.mode = CalibMode::DsBenchmarkOnly;
  problem.entropy = sq;
  problem.z = inst.x_bench;
  problem.totals = inst.bench_totals;
  problem.d = inst.d;
  auto ds = solve_ds(problem);
  REQUIRE(ds.converged());

  // w_i = d_i (1 + lambda^T z_i), lambda = (sum d z z^T)^{-1} (T - sum d z).
  Eigen::MatrixXd gram = inst.x_bench.transpose() * inst.d.asDiagonal() * inst.x_bench;
  Eigen::VectorXd gap = inst.bench_totals - inst.x_bench.transpose() * inst.d;
  Eigen::VectorXd lambda = gram.ldlt().solve(gap);
  for (int i = 0; i < 12; ++i) {
    const double w = inst.d[i] * (1.0 + inst.x_bench.row(i).dot(lambda));
    CHECK(std::abs(ds.omega[i] - w) <= 1e-10 * (1.0 + std::abs(w)));
  }
}

TEST_CASE("ds under EL equals the PEL maximizer") {
  auto el = EntropySpec::make(EntropyKind::EmpiricalLikelihood);
  auto inst = make_small_instance(el, 9, 1, false, 29);
  CalibrationProblem problem;
  problem.mode = CalibMode::DsBenchmarkOnly;
  problem.entropy = el;
  problem.z = inst.x_bench;
  problem.totals = inst.bench_totals;
  problem.d = inst.d;
  auto ds = solve_ds(problem);
  REQUIRE(ds.converged());

  // PEL: maximize sum d log w s.t. constraints == minimize sum d G(w/d).
  auto oracle = testing::brute_force_primal(el, inst.x_bench, inst.bench_totals, inst.d,
                                            inst.d.cwiseInverse());
  REQUIRE(oracle.has_value());
  for (int i = 0; i < 9; ++i) CHECK(std::abs(ds.omega[i] - (*oracle)[i]) <= 1e-8);
}

TEST_CASE("scaled gec") {
  auto el = EntropySpec::make(EntropyKind::EmpiricalLikelihood);

  SUBCASE("n = N and pi = 1 reduces to the plain program") {
    const int n = 6;
    Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
    CalibrationProblem scaled;
    scaled.mode = CalibMode::GecScaled;
    scaled.entropy = el;
    scaled.d = d;
    scaled.z.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      scaled.z(i, 0) = 1.0 + 0.1 * i;
      scaled.z(i, 1) = el.g(d[i]);
    }
    scaled.totals.resize(2);
    scaled.totals << scaled.z.col(0).sum() * 1.05, scaled.z.col(1).sum() * 1.0;

    CalibrationProblem plain = scaled;
    plain.mode = CalibMode::GecKnown;

    auto rs = solve_gec_scaled(scaled, n, n);
    auto rp = solve_gec(plain);
    REQUIRE(rs.converged());
    REQUIRE(rp.converged());
    for (int i = 0; i < n; ++i)
      CHECK(rs.omega[i] == doctest::Approx(rp.omega[i]).epsilon(1e-10));
  }

  SUBCASE("fixed point at scaled design weights") {
    const int n = 5;
    const double N = 50.0;
    Eigen::VectorXd d(n);
    d << 8.0, 12.0, 9.0, 11.0, 10.0;
    CalibrationProblem problem;
    problem.mode = CalibMode::GecScaled;
    problem.entropy = el;
    problem.d = d;
    problem.z.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      problem.z(i, 0) = 1.0 + 0.3 * i;
      problem.z(i, 1) = el.g(n / N * d[i]);
    }
    problem.totals = problem.z.transpose() * d;
    auto result = solve_gec_scaled(problem, n, N);
    REQUIRE(result.converged());
    for (int i = 0; i < n; ++i) CHECK(result.omega[i] == doctest::Approx(d[i]).epsilon(1e-9));
    CHECK(std::abs(result.lambda[0]) <= 1e-9);
    CHECK(result.lambda[1] == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("small-fraction EL matches the scaled-objective oracle") {
    const int n = 8;
    auto inst = make_small_instance(el, n, 1, false, 31);
    const double N = inst.N;
    const double scale = n / N;
    CalibrationProblem problem;
    problem.mode = CalibMode::GecScaled;
    problem.entropy = el;
    problem.d = inst.d;
    problem.z.resize(n, inst.x_bench.cols() + 1);
    problem.z.leftCols(inst.x_bench.cols()) = inst.x_bench;
    for (int i = 0; i < n; ++i)
      problem.z(i, inst.x_bench.cols()) = el.g(scale * inst.d[i]);
    problem.totals.resize(problem.z.cols());
    problem.totals.head(inst.bench_totals.size()) = inst.bench_totals;
    double tg_star = 0.0;
    for (int i = 0; i < inst.d_pop.size(); ++i) tg_star += el.g(scale * inst.d_pop[i]);
    problem.totals[problem.z.cols() - 1] = tg_star;

    auto result = solve_gec_scaled(problem, n, N);
    REQUIRE(result.converged());
    auto oracle = testing::brute_force_primal(
        el, problem.z, problem.totals, Eigen::VectorXd::Ones(n),
        Eigen::VectorXd::Constant(n, scale));
    REQUIRE(oracle.has_value());
    for (int i = 0; i < n; ++i) CHECK(std::abs(result.omega[i] - (*oracle)[i]) <= 1e-6);
  }
}

TEST_CASE("constraint residuals are tight after convergence") {
  auto ce = EntropySpec::make(EntropyKind::CrossEntropy);
  auto inst = make_small_instance(ce, 11, 2, true, 41);
  auto result = solve_gec(gec_problem(inst, ce));
  REQUIRE(result.converged());
  Eigen::VectorXd achieved = inst.z.transpose() * result.omega;
  for (Eigen::Index k = 0; k < achieved.size(); ++k)
    CHECK(std::abs(achieved[k] - inst.totals[k]) <= 1e-8 * (1.0 + std::abs(inst.totals[k])));
  // All weights stay inside V.
  for (int i = 0; i < 11; ++i) CHECK(result.omega[i] > 1.0);
}

TEST_CASE("input validation") {
  auto el = EntropySpec::make(EntropyKind::EmpiricalLikelihood);
  auto inst = make_small_instance(el, 6, 1, true, 51);
  auto problem = gec_problem(inst, el);

  SUBCASE("duplicate columns rejected") {
    problem.z.col(1) = problem.z.col(0);
    CHECK_THROWS_AS(solve_gec(problem), std::invalid_argument);
  }
  SUBCASE("debias column must match g(d)") {
    problem.z(2, problem.z.cols() - 1) += 0.5;
    CHECK_THROWS_AS(solve_gec(problem), std::invalid_argument);
  }
  SUBCASE("totals length checked") {
    problem.totals.conservativeResize(2);
    CHECK_THROWS_AS(solve_gec(problem), std::invalid_argument);
  }
  SUBCASE("wrong mode rejected") {
    problem.mode = CalibMode::DsBenchmarkOnly;
    CHECK_THROWS_AS(solve_gec(problem), std::invalid_argument);
  }
}

TEST_CASE("singular Hessian reported, not repaired") {
  auto sq = EntropySpec::make(EntropyKind::SquaredLoss);
  const int n = 6;
  CalibrationProblem problem;
  problem.mode = CalibMode::GecKnown;
  problem.entropy = sq;
  problem.d = Eigen::VectorXd::Constant(n, 2.0);
  problem.z.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    problem.z(i, 0) = 1.0;
    problem.z(i, 1) = 1.0 + 1e-14 * i;  // numerically collinear with intercept
    problem.z(i, 2) = sq.g(problem.d[i]);
  }
  problem.totals.resize(3);
  problem.totals << 10.0, 10.0, 24.0;
  auto result = solve_gec(problem);
  CHECK(result.status == SolveStatus::SingularHessian);
  CHECK(!result.converged());
}

TEST_CASE("infeasible start reported for DS when no dual point exists") {
  // Renyi r > 0 has g(V) = (0, inf); with covariates of mixed sign no lambda
  // keeps every lambda^T z_i positive... build one where the LS fit fails.
  auto renyi = EntropySpec::make(EntropyKind::Renyi, {0.5});
  CalibrationProblem problem;
  problem.mode = CalibMode::DsBenchmarkOnly;
  problem.entropy = renyi;
  problem.d = Eigen::VectorXd::Constant(2, 2.0);
  problem.z.resize(2, 1);
  problem.z << 1.0, -1.0;
  problem.totals.resize(1);
  problem.totals << 1.0;
  auto result = solve_ds(problem);
  CHECK(result.status == SolveStatus::InfeasibleStart);
}

TEST_CASE("model-assisted solve matches the cost-weighted oracle") {
  auto et = EntropySpec::make(EntropyKind::ExponentialTilting);
  auto inst = make_small_instance(et, 10, 1, false, 61);
  const int n = 10;
  Eigen::VectorXd costs(n);
  for (int i = 0; i < n; ++i) costs[i] = 0.5 + 0.3 * (i % 4);

  CalibrationProblem problem;
  problem.mode = CalibMode::ModelAssisted;
  problem.entropy = et;
  problem.d = inst.d;
  problem.costs = costs;
  problem.z.resize(n, inst.x_bench.cols() + 1);
  problem.z.leftCols(inst.x_bench.cols()) = inst.x_bench;
  for (int i = 0; i < n; ++i)
    problem.z(i, inst.x_bench.cols()) = et.g(inst.d[i]) * costs[i];
  problem.totals.resize(problem.z.cols());
  problem.totals.head(inst.bench_totals.size()) = inst.bench_totals;
  // Debias-with-costs total from the generating population with unit costs
  // extended by cycling the same cost pattern.
  double tgc = 0.0;
  for (int i = 0; i < inst.d_pop.size(); ++i)
    tgc += et.g(inst.d_pop[i]) * (0.5 + 0.3 * (i % 4));
  problem.totals[problem.z.cols() - 1] = tgc;

  auto result = solve_gec(problem);
  REQUIRE(result.converged());
  // Oracle: minimize sum c_i G(w_i) under the same constraints.
  auto oracle = testing::brute_force_primal(et, problem.z, problem.totals, costs,
                                            Eigen::VectorXd::Ones(n));
  REQUIRE(oracle.has_value());
  for (int i = 0; i < n; ++i) CHECK(std::abs(result.omega[i] - (*oracle)[i]) <= 1e-6);

  // Constraints hold in the primal scale.
  Eigen::VectorXd achieved = problem.z.transpose() * result.omega;
  for (Eigen::Index k = 0; k < achieved.size(); ++k)
    CHECK(std::abs(achieved[k] - problem.totals[k]) <=
          1e-8 * (1.0 + std::abs(problem.totals[k])));
}
