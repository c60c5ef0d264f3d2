#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gecal/population.hpp"
#include "gecal/stats.hpp"
#include "oracles.hpp"

using namespace gecal;

namespace {

double t3_pdf(double x) {
  return 2.0 / (M_PI * std::sqrt(3.0)) * std::pow(1.0 + x * x / 3.0, -2.0);
}

}  // namespace

TEST_CASE("t3 cdf closed form vs quadrature") {
  CHECK(t3_cdf(-2.0) == doctest::Approx(0.069662984587).epsilon(1e-9));
  CHECK(t3_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  for (double x : {-6.0, -3.5, -2.0, -1.5, -1.0, -0.6, -0.25, -0.1, 0.0, 0.05,
                   0.3, 0.55, 0.8, 1.0, 1.4, 2.0, 2.7, 3.3, 4.5, 6.0}) {
    const double numeric = 0.5 + testing::integrate(t3_pdf, 0.0, x, 1e-12);
    CHECK(std::abs(t3_cdf(x) - numeric) <= 1e-8);
  }
}

TEST_CASE("population generation matches the recipe") {
  auto pop = generate_population(PopulationModel::Model1, 10000, 7);
  REQUIRE(pop.N == 10000);

  // pi = min(T3(-z-2), 0.7), expected sample size about 1100.
  for (int i = 0; i < pop.N; ++i) {
    const double expected = std::min(t3_cdf(-pop.z_latent[i] - 2.0), 0.7);
    CHECK(pop.pi[i] == doctest::Approx(expected).epsilon(1e-14));
    CHECK(pop.pi[i] > 0.0);
    CHECK(pop.pi[i] <= 0.7);
  }
  const double expected_n = pop.pi.sum();
  CHECK(expected_n > 1100.0 * 0.9);
  CHECK(expected_n < 1100.0 * 1.1);

  // Moment sanity for the covariate laws.
  CHECK(pop.x.col(0).mean() == doctest::Approx(2.0).epsilon(0.05));
  CHECK(pop.x.col(1).mean() == doctest::Approx(2.0).epsilon(0.05));
  CHECK(pop.x.col(1).maxCoeff() <= 4.0);
  CHECK(pop.x.col(1).minCoeff() >= 0.0);

  // Model1 y = x1 + x2 + z + e.
  Eigen::VectorXd signal = pop.y - pop.x.col(0) - pop.x.col(1) - pop.z_latent;
  CHECK(signal.mean() == doctest::Approx(0.0).epsilon(0.05));

  auto pop2 = generate_population(PopulationModel::Model2, 2000, 7);
  Eigen::VectorXd signal2 =
      pop2.y - pop2.x.col(0) - pop2.x.col(1) - pop2.z_latent.cwiseAbs2();
  const double mean2 = signal2.mean();
  CHECK(std::abs(mean2) < 0.1);
}

TEST_CASE("seeded determinism") {
  auto a = generate_population(PopulationModel::Model2, 500, 42);
  auto b = generate_population(PopulationModel::Model2, 500, 42);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.pi == b.pi);

  auto s1 = draw_poisson_sample(a, 9);
  auto s2 = draw_poisson_sample(b, 9);
  REQUIRE(s1.n() == s2.n());
  CHECK(s1.indices == s2.indices);
  CHECK(s1.delta == s2.delta);

  auto c = generate_population(PopulationModel::Model2, 500, 43);
  CHECK(a.y != c.y);
}

TEST_CASE("poisson draw basics") {
  Population pop;
  pop.N = 4000;
  pop.x = Eigen::MatrixXd::Ones(pop.N, 2);
  pop.y = Eigen::VectorXd::Ones(pop.N);
  pop.z_latent = Eigen::VectorXd::Zero(pop.N);

  SUBCASE("pi = 1 samples everything") {
    pop.pi = Eigen::VectorXd::Ones(pop.N);
    auto s = draw_poisson_sample(pop, 1);
    CHECK(s.n() == pop.N);
    for (int i = 0; i < s.n(); ++i) CHECK(s.d[i] * s.pi_s[i] == 1.0);
  }

  SUBCASE("pi = 0.5 gives n/N near one half") {
    pop.pi = Eigen::VectorXd::Constant(pop.N, 0.5);
    auto s = draw_poisson_sample(pop, 2);
    const double se = std::sqrt(pop.N * 0.25);
    CHECK(std::abs(s.n() - 0.5 * pop.N) <= 3.0 * se);
  }

  SUBCASE("empty sample reported") {
    pop.pi = Eigen::VectorXd::Constant(pop.N, 1e-9);
    CHECK_THROWS_AS(draw_poisson_sample(pop, 3), EmptySampleError);
  }
}

TEST_CASE("mean sample size over repeated draws") {
  auto pop = generate_population(PopulationModel::Model1, 2000, 11);
  const double expected = pop.pi.sum();
  const double sd = std::sqrt((pop.pi.array() * (1.0 - pop.pi.array())).sum());
  double total = 0.0;
  for (int r = 0; r < 1000; ++r) {
    Stream stream(11, kReplicationTag, static_cast<std::uint64_t>(r) * 1024);
    total += draw_poisson_sample(pop, stream).n();
  }
  CHECK(std::abs(total / 1000.0 - expected) <= 3.0 * sd);
}

TEST_CASE("joint inclusion rule") {
  DesignInfo design;
  design.pi = Eigen::VectorXd(2);
  design.pi << 0.2, 0.5;
  CHECK(joint_inclusion(design, 0, 1) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(joint_inclusion(design, 0, 0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(joint_inclusion(design, 1, 0) - design.pi[0] * design.pi[1] == 0.0);
  CHECK_THROWS_AS(joint_inclusion(design, 0, 2), std::out_of_range);
}
