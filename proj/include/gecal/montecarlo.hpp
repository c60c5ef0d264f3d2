#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gecal/entropy.hpp"
#include "gecal/population.hpp"

namespace gecal {

// Estimators replayed by the simulation study.  DsDebias and Gec0 use the
// known debiasing total (scenario 1); DsBench, Gec1 and Gec2 do not
// (scenario 2).
enum class McMethod { Hajek, DsDebias, Gec0, DsBench, Gec1, Gec2 };

const char* to_string(McMethod method);
McMethod mc_method_from_name(const std::string& name);

// Entropy request: PseudoHuber without an explicit M resolves it to the 80%
// quantile of the design weights over the realized population.
struct EntropyChoice {
  EntropyKind kind;
  std::optional<double> param;
};

struct StudyConfig {
  PopulationModel model = PopulationModel::Model1;
  int n_pop = 10000;
  int reps = 1000;
  std::uint64_t seed = 1;
  std::vector<EntropyChoice> entropies;
  std::vector<McMethod> methods;
  double level = 0.95;
  int threads = 0;  // 0: hardware concurrency capped by GECAL_THREADS
};

StudyConfig default_study_config();

struct MetricsRow {
  std::string model;
  std::string entropy;  // "-" for Hajek
  std::string method;
  double sb_pct = 0.0;
  double rmse = 0.0;
  double r_rmse = 0.0;
  double cr_pct = 0.0;
  double mean_se = 0.0;
  int failures = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  int reps = 0;
  int redraws = 0;      // empty-sample redraws across the study
  double truth = 0.0;   // realized population mean

  std::string to_csv() const;
  const MetricsRow* find(const std::string& entropy, const std::string& method) const;
};

// Aggregates one estimator column: SB, RMSE, R-RMSE against the baseline,
// CI coverage at `level`, and the mean standard error.
MetricsRow metrics(const std::vector<double>& estimates, const std::vector<double>& variances,
                   double truth, double baseline_rmse, double level);

// Fixed population from `seed`, `reps` independent Poisson replications, the
// full roster per replication.  Solver failures are excluded from the
// metrics and counted in the failures column; the study never aborts on
// them.  Deterministic for a given config regardless of thread count.
MetricsTable run_study(const StudyConfig& config);

// Same study on a caller-supplied population (config.model/n_pop ignored).
MetricsTable run_study(const StudyConfig& config, const Population& pop);

}  // namespace gecal
