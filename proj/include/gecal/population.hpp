#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gecal/rng.hpp"

namespace gecal {

// Synthetic finite population.  Covariates x1 ~ N(2,1) and x2 ~ Unif(0,4),
// latent design variable z ~ N(0,1), noise e ~ N(0,1), and
//   Model1: y = x1 + x2 + z   + e
//   Model2: y = x1 + x2 + z^2 + e
// Inclusion probabilities pi = min(T3(-z - 2), 0.7) with T3 the t(3) CDF.
enum class PopulationModel { Model1, Model2 };

struct Population {
  int N = 0;
  Eigen::MatrixXd x;        // N x 2
  Eigen::VectorXd y;
  Eigen::VectorXd pi;
  Eigen::VectorXd z_latent;
};

struct SampleData {
  std::vector<int> indices;      // 0-based population rows, increasing
  std::vector<std::uint8_t> delta;  // length N, delta[i] == 1 iff sampled
  Eigen::MatrixXd x_s;
  Eigen::VectorXd y_s;
  Eigen::VectorXd pi_s;
  Eigen::VectorXd d;             // 1/pi on the sample
  int n() const { return static_cast<int>(indices.size()); }
};

// Poisson design: units enter independently, pi_ij = pi_i * pi_j for i != j.
struct DesignInfo {
  Eigen::VectorXd pi;
};

struct EmptySampleError : std::runtime_error {
  EmptySampleError() : std::runtime_error("Poisson draw produced an empty sample") {}
};

Population generate_population(PopulationModel model, int N, std::uint64_t seed);

// Independent Bernoulli(pi_i) draws; throws EmptySampleError when n == 0.
SampleData draw_poisson_sample(const Population& pop, Stream& stream);
SampleData draw_poisson_sample(const Population& pop, std::uint64_t seed);

double joint_inclusion(const DesignInfo& design, int i, int j);

}  // namespace gecal
