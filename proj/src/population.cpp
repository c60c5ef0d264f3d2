#include "gecal/population.hpp"

#include <algorithm>
#include <cmath>

#include "gecal/stats.hpp"

namespace gecal {

Population generate_population(PopulationModel model, int N, std::uint64_t seed) {
  if (N < 2) throw std::invalid_argument("population size must be at least 2");
  Stream stream(seed, kPopulationTag);

  Population pop;
  pop.N = N;
  pop.x.resize(N, 2);
  pop.y.resize(N);
  pop.pi.resize(N);
  pop.z_latent.resize(N);

  for (int i = 0; i < N; ++i) {
    const double x1 = stream.normal(2.0, 1.0);
    const double x2 = stream.uniform(0.0, 4.0);
    const double z = stream.normal();
    const double e = stream.normal();
    pop.x(i, 0) = x1;
    pop.x(i, 1) = x2;
    pop.z_latent[i] = z;
    const double zterm = model == PopulationModel::Model1 ? z : z * z;
    pop.y[i] = x1 + x2 + zterm + e;
    pop.pi[i] = std::min(t3_cdf(-z - 2.0), 0.7);
  }
  return pop;
}

SampleData draw_poisson_sample(const Population& pop, Stream& stream) {
  SampleData s;
  s.delta.assign(pop.N, 0);
  for (int i = 0; i < pop.N; ++i) {
    if (stream.bernoulli(pop.pi[i])) {
      s.delta[i] = 1;
      s.indices.push_back(i);
    }
  }
  const int n = s.n();
  if (n == 0) throw EmptySampleError();

  s.x_s.resize(n, pop.x.cols());
  s.y_s.resize(n);
  s.pi_s.resize(n);
  s.d.resize(n);
  for (int k = 0; k < n; ++k) {
    const int i = s.indices[k];
    s.x_s.row(k) = pop.x.row(i);
    s.y_s[k] = pop.y[i];
    s.pi_s[k] = pop.pi[i];
    s.d[k] = 1.0 / pop.pi[i];
  }
  return s;
}

SampleData draw_poisson_sample(const Population& pop, std::uint64_t seed) {
  Stream stream(seed, kReplicationTag);
  return draw_poisson_sample(pop, stream);
}

double joint_inclusion(const DesignInfo& design, int i, int j) {
  const auto N = design.pi.size();
  if (i < 0 || j < 0 || i >= N || j >= N)
    throw std::out_of_range("joint_inclusion index out of range");
  return i == j ? design.pi[i] : design.pi[i] * design.pi[j];
}

}  // namespace gecal
