#include "gecal/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "gecal/calibration.hpp"
#include "gecal/csv.hpp"
#include "gecal/estimators.hpp"
#include "gecal/linalg.hpp"
#include "gecal/stats.hpp"

namespace gecal {

const char* to_string(McMethod method) {
  switch (method) {
    case McMethod::Hajek: return "hajek";
    case McMethod::DsDebias: return "ds_debias";
    case McMethod::Gec0: return "gec0";
    case McMethod::DsBench: return "ds_bench";
    case McMethod::Gec1: return "gec1";
    case McMethod::Gec2: return "gec2";
  }
  return "?";
}

McMethod mc_method_from_name(const std::string& name) {
  if (name == "hajek") return McMethod::Hajek;
  if (name == "ds_debias") return McMethod::DsDebias;
  if (name == "gec0") return McMethod::Gec0;
  if (name == "ds_bench") return McMethod::DsBench;
  if (name == "gec1") return McMethod::Gec1;
  if (name == "gec2") return McMethod::Gec2;
  throw std::invalid_argument("unknown method name: " + name);
}

StudyConfig default_study_config() {
  StudyConfig config;
  config.entropies = {{EntropyKind::EmpiricalLikelihood, std::nullopt},
                      {EntropyKind::ExponentialTilting, std::nullopt},
                      {EntropyKind::CrossEntropy, std::nullopt},
                      {EntropyKind::Hellinger, std::nullopt},
                      {EntropyKind::PseudoHuber, std::nullopt}};
  config.methods = {McMethod::Hajek,   McMethod::DsDebias, McMethod::Gec0,
                    McMethod::DsBench, McMethod::Gec1,     McMethod::Gec2};
  return config;
}

MetricsRow metrics(const std::vector<double>& estimates, const std::vector<double>& variances,
                   double truth, double baseline_rmse, double level) {
  if (estimates.empty() || estimates.size() != variances.size())
    throw std::invalid_argument("metrics needs matching nonempty inputs");
  const auto reps = estimates.size();
  double bias = 0.0, mse = 0.0, covered = 0.0, se_sum = 0.0;
  const double z = normal_quantile(1.0 - 0.5 * (1.0 - level));
  for (std::size_t r = 0; r < reps; ++r) {
    const double err = estimates[r] - truth;
    bias += err;
    mse += err * err;
    const double half = z * std::sqrt(variances[r]);
    if (estimates[r] - half <= truth && truth <= estimates[r] + half) covered += 1.0;
    se_sum += std::sqrt(variances[r]);
  }
  bias /= static_cast<double>(reps);
  MetricsRow row;
  row.rmse = std::sqrt(mse / static_cast<double>(reps));
  row.sb_pct = row.rmse > 0.0 ? 100.0 * bias / row.rmse : 0.0;
  row.r_rmse = baseline_rmse > 0.0 ? 100.0 * row.rmse / baseline_rmse : 0.0;
  row.cr_pct = 100.0 * covered / static_cast<double>(reps);
  row.mean_se = se_sum / static_cast<double>(reps);
  return row;
}

namespace {

struct Cell {
  double theta = 0.0;     // estimated population mean
  double variance = 0.0;  // variance of the mean
  bool ok = false;
};

struct RepOutcome {
  Cell hajek;
  std::vector<Cell> cells;  // entropies x non-Hajek methods, row-major
  int redraws = 0;
};

struct StudyLayout {
  std::vector<EntropySpec> entropies;
  std::vector<McMethod> entropy_methods;  // roster minus Hajek
  bool want_hajek = false;
};

Cell run_hajek(const SampleData& s) {
  Cell cell;
  cell.theta = hajek_mean(s.d, s.y_s);
  const double n_hat = s.d.sum();
  Eigen::VectorXd resid = s.y_s.array() - cell.theta;
  cell.variance = variance_poisson(s.pi_s, resid) / (n_hat * n_hat);
  cell.ok = true;
  return cell;
}

// Shared per-replication pieces for one entropy.
struct EntropyContext {
  EntropySpec spec;
  Eigen::VectorXd gd;        // g(d_i) on the sample
  Eigen::MatrixXd z_bench;   // [1, x]
  Eigen::MatrixXd z_full;    // [1, x, g(d)]
  Eigen::VectorXd t_bench;   // (N, sum_U x)
  Eigen::VectorXd t_full;    // (N, sum_U x, T_g)
};

Cell finish_calibrated(const SampleData& s, double N, const Eigen::VectorXd& omega,
                       const Eigen::VectorXd& gamma, const Eigen::MatrixXd& z_for_resid) {
  Cell cell;
  cell.theta = calibrated_estimate(omega, s.y_s, N, true);
  Eigen::VectorXd resid = s.y_s - z_for_resid * gamma;
  cell.variance = variance_poisson(s.pi_s, resid) / (N * N);
  cell.ok = true;
  return cell;
}

Cell run_ds(const EntropyContext& ctx, const SampleData& s, double N, bool debias) {
  CalibrationProblem problem;
  problem.mode = debias ? CalibMode::DsWithDebias : CalibMode::DsBenchmarkOnly;
  problem.entropy = ctx.spec;
  problem.d = s.d;
  problem.z = debias ? ctx.z_full : ctx.z_bench;
  problem.totals = debias ? ctx.t_full : ctx.t_bench;
  auto result = solve_ds(problem);
  if (!result.converged()) return {};
  // DS linearizes to the d-weighted regression on its constraint covariates.
  Eigen::MatrixXd gram = problem.z.transpose() * s.d.asDiagonal() * problem.z;
  Eigen::VectorXd moment = problem.z.transpose() * (s.d.cwiseProduct(s.y_s));
  Eigen::VectorXd gamma = spd_solve(gram, moment, "ds variance");
  return finish_calibrated(s, N, result.omega, gamma, problem.z);
}

Cell run_gec0(const EntropyContext& ctx, const SampleData& s, double N) {
  CalibrationProblem problem;
  problem.mode = CalibMode::GecKnown;
  problem.entropy = ctx.spec;
  problem.d = s.d;
  problem.z = ctx.z_full;
  problem.totals = ctx.t_full;
  auto result = solve_gec(problem);
  if (!result.converged()) return {};
  Eigen::VectorXd gamma = gamma_hat(ctx.z_full, s.y_s, ctx.spec, s.d);
  return finish_calibrated(s, N, result.omega, gamma, ctx.z_full);
}

Cell run_adjusted(const EntropyContext& ctx, const SampleData& s, double N, KKind kind) {
  AdjustedProblem problem;
  problem.x = ctx.z_bench;
  problem.x_totals = ctx.t_bench;
  problem.d = s.d;
  problem.entropy = ctx.spec;
  problem.kspec = make_kspec(kind, ctx.spec, s.d, N);
  problem.N = N;
  auto adjusted = solve_adjusted(problem);
  if (!adjusted.result.converged()) return {};

  Eigen::VectorXd gamma = gamma_hat(ctx.z_full, s.y_s, ctx.spec, s.d);
  auto corr = m_hat_correction(ctx.z_bench, s.d, ctx.spec, kind, adjusted.alpha_hat, N);
  Cell cell;
  cell.theta = calibrated_estimate(adjusted.result.omega, s.y_s, N, true);
  Eigen::VectorXd resid = s.y_s - ctx.z_bench * gamma.head(gamma.size() - 1) -
                          gamma[gamma.size() - 1] * corr.m_hat;
  cell.variance = variance_poisson(s.pi_s, resid) / (N * N);
  cell.ok = true;
  return cell;
}

RepOutcome run_replication(const Population& pop, const StudyLayout& layout,
                           const std::vector<double>& tg_by_entropy, std::uint64_t seed,
                           int rep) {
  RepOutcome outcome;
  SampleData sample;
  int attempt = 0;
  for (;; ++attempt) {
    if (attempt > 64) throw std::runtime_error("empty-sample redraw limit exceeded");
    Stream stream(seed, kReplicationTag,
                  static_cast<std::uint64_t>(rep) * 1024 + static_cast<std::uint64_t>(attempt));
    try {
      sample = draw_poisson_sample(pop, stream);
      break;
    } catch (const EmptySampleError&) {
      ++outcome.redraws;
    }
  }

  const double N = pop.N;
  const int n = sample.n();
  if (layout.want_hajek) outcome.hajek = run_hajek(sample);

  Eigen::VectorXd t_bench(1 + pop.x.cols());
  t_bench[0] = N;
  for (Eigen::Index j = 0; j < pop.x.cols(); ++j) t_bench[1 + j] = pop.x.col(j).sum();

  outcome.cells.resize(layout.entropies.size() * layout.entropy_methods.size());
  for (std::size_t e = 0; e < layout.entropies.size(); ++e) {
    EntropyContext ctx{layout.entropies[e], {}, {}, {}, {}, {}};
    ctx.gd.resize(n);
    for (int i = 0; i < n; ++i) ctx.gd[i] = ctx.spec.g(sample.d[i]);
    ctx.z_bench.resize(n, 1 + sample.x_s.cols());
    ctx.z_bench.col(0).setOnes();
    ctx.z_bench.rightCols(sample.x_s.cols()) = sample.x_s;
    ctx.z_full.resize(n, ctx.z_bench.cols() + 1);
    ctx.z_full.leftCols(ctx.z_bench.cols()) = ctx.z_bench;
    ctx.z_full.col(ctx.z_bench.cols()) = ctx.gd;
    ctx.t_bench = t_bench;
    ctx.t_full.resize(t_bench.size() + 1);
    ctx.t_full.head(t_bench.size()) = t_bench;
    ctx.t_full[t_bench.size()] = tg_by_entropy[e];

    for (std::size_t m = 0; m < layout.entropy_methods.size(); ++m) {
      Cell cell;
      try {
        switch (layout.entropy_methods[m]) {
          case McMethod::DsDebias: cell = run_ds(ctx, sample, N, true); break;
          case McMethod::DsBench: cell = run_ds(ctx, sample, N, false); break;
          case McMethod::Gec0: cell = run_gec0(ctx, sample, N); break;
          case McMethod::Gec1: cell = run_adjusted(ctx, sample, N, KKind::K1Identity); break;
          case McMethod::Gec2: cell = run_adjusted(ctx, sample, N, KKind::K2QinShrink); break;
          case McMethod::Hajek: break;
        }
      } catch (const SingularMatrixError&) {
        cell.ok = false;
      } catch (const std::domain_error&) {
        cell.ok = false;
      }
      outcome.cells[e * layout.entropy_methods.size() + m] = cell;
    }
  }
  return outcome;
}

int resolve_threads(const StudyConfig& config) {
  int threads = config.threads;
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GECAL_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0) threads = std::min(threads, cap);
    }
  }
  return std::max(1, std::min(threads, config.reps));
}

}  // namespace

MetricsTable run_study(const StudyConfig& config) {
  Population pop = generate_population(config.model, config.n_pop, config.seed);
  return run_study(config, pop);
}

MetricsTable run_study(const StudyConfig& config, const Population& pop) {
  if (config.reps < 1) throw std::invalid_argument("reps must be >= 1");
  if (config.methods.empty()) throw std::invalid_argument("method roster is empty");

  Eigen::VectorXd d_pop = pop.pi.cwiseInverse();

  StudyLayout layout;
  for (McMethod m : config.methods) {
    if (m == McMethod::Hajek)
      layout.want_hajek = true;
    else
      layout.entropy_methods.push_back(m);
  }
  for (const auto& choice : config.entropies) {
    double param = choice.param.value_or(0.0);
    if (choice.kind == EntropyKind::PseudoHuber && !choice.param) {
      // M defaults to the 80% quantile of the population design weights.
      std::vector<double> d_values(d_pop.data(), d_pop.data() + d_pop.size());
      param = quantile(std::move(d_values), 0.8);
    }
    std::vector<double> params;
    if (choice.kind == EntropyKind::PseudoHuber || choice.kind == EntropyKind::Renyi)
      params.push_back(param);
    layout.entropies.push_back(EntropySpec::make(choice.kind, params));
  }
  if (layout.entropies.empty() && !layout.entropy_methods.empty())
    throw std::invalid_argument("calibration methods requested without entropies");

  std::vector<double> tg_by_entropy;
  for (const auto& spec : layout.entropies) {
    double tg = 0.0;
    for (int i = 0; i < pop.N; ++i) tg += spec.g(d_pop[i]);
    tg_by_entropy.push_back(tg);
  }

  const double truth = pop.y.mean();
  std::vector<RepOutcome> outcomes(config.reps);
  const int threads = resolve_threads(config);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= config.reps) return;
      outcomes[rep] = run_replication(pop, layout, tg_by_entropy, config.seed, rep);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MetricsTable table;
  table.reps = config.reps;
  table.truth = truth;
  for (const auto& outcome : outcomes) table.redraws += outcome.redraws;

  const char* model_name = config.model == PopulationModel::Model1 ? "model1" : "model2";

  // Hajek baseline RMSE normalizes every R-RMSE column.
  double baseline_rmse = 0.0;
  {
    std::vector<double> est, var;
    for (const auto& outcome : outcomes)
      if (outcome.hajek.ok) {
        est.push_back(outcome.hajek.theta);
        var.push_back(outcome.hajek.variance);
      }
    if (!est.empty()) {
      MetricsRow row = metrics(est, var, truth, 0.0, config.level);
      baseline_rmse = row.rmse;
      row.r_rmse = 100.0;
      row.model = model_name;
      row.entropy = "-";
      row.method = to_string(McMethod::Hajek);
      row.failures = config.reps - static_cast<int>(est.size());
      if (layout.want_hajek) table.rows.push_back(row);
    }
  }

  for (std::size_t e = 0; e < layout.entropies.size(); ++e) {
    for (std::size_t m = 0; m < layout.entropy_methods.size(); ++m) {
      std::vector<double> est, var;
      for (const auto& outcome : outcomes) {
        const Cell& cell = outcome.cells[e * layout.entropy_methods.size() + m];
        if (cell.ok) {
          est.push_back(cell.theta);
          var.push_back(cell.variance);
        }
      }
      MetricsRow row;
      if (!est.empty()) row = metrics(est, var, truth, baseline_rmse, config.level);
      row.model = model_name;
      row.entropy = layout.entropies[e].name();
      row.method = to_string(layout.entropy_methods[m]);
      row.failures = config.reps - static_cast<int>(est.size());
      table.rows.push_back(row);
    }
  }
  return table;
}

std::string MetricsTable::to_csv() const {
  std::ostringstream out;
  out << "model,entropy,method,sb_pct,rmse,r_rmse,cr_pct,mean_se,failures\n";
  for (const auto& row : rows) {
    out << row.model << ',' << row.entropy << ',' << row.method << ','
        << csv::format_double(row.sb_pct) << ',' << csv::format_double(row.rmse) << ','
        << csv::format_double(row.r_rmse) << ',' << csv::format_double(row.cr_pct) << ','
        << csv::format_double(row.mean_se) << ',' << row.failures << '\n';
  }
  return out.str();
}

const MetricsRow* MetricsTable::find(const std::string& entropy,
                                     const std::string& method) const {
  for (const auto& row : rows)
    if (row.entropy == entropy && row.method == method) return &row;
  return nullptr;
}

}  // namespace gecal
