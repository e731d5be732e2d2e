#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gii/criterion.hpp"
#include "gii/inference.hpp"
#include "gii/model.hpp"
#include "gii/optimize.hpp"

namespace gii::harness {

struct ScheduleStep {
  double lambda = 0.03;
  int sims = 10;
};

/// How schedule steps after the first refine the estimate.
enum class SecondStep { full, newton_step };

/// A band on an aggregate statistic, checked by `mc` in CI mode.
struct AcceptanceBand {
  std::string parameter;
  std::string statistic;  // "mean", "sd" or "se_ratio"
  double target = 0.0;
  double tolerance = 0.0;
  bool relative = false;  // tolerance as a fraction of target
};

struct ExperimentConfig {
  sim::StructuralConfig structural;  // beta holds the true parameters
  int aux_variant = 3;
  crit::Kind kind = crit::Kind::lr;
  smooth::KernelFamily kernel = smooth::KernelFamily::logistic;
  sim::DynMode dyn_mode = sim::DynMode::product;
  int jackknife_order = 0;
  double jackknife_delta = 0.5;
  std::optional<double> fd_step;
  std::vector<ScheduleStep> schedule{{0.03, 10}, {0.003, 300}};
  SecondStep second_step = SecondStep::full;
  opt::OptimizerConfig optimizer;
  std::optional<crit::Bounds> bounds;
  std::vector<Eigen::VectorXd> starts;  // used when start_at_truth is false
  int replications = 1;
  std::uint64_t base_seed = 1;
  bool start_at_truth = true;
  bool compute_se = true;
  bool exclude_flagged = false;
  int threads = 1;            // replication workers in run_mc
  int criterion_threads = 1;  // simulation workers inside one criterion
  std::string output;
  std::vector<AcceptanceBand> acceptance;

  crit::Bounds effective_bounds() const;
  crit::CriterionConfig criterion_config(const ScheduleStep& step) const;
  int max_sims() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses the JSON experiment document. Errors carry a JSON path such as
/// "$.schedule[1].lambda".
ExperimentConfig parse_experiment(const std::string& json_text);
ExperimentConfig load_experiment(const std::string& path);
std::string to_json(const ExperimentConfig& cfg);

struct StepRecord {
  double lambda = 0.0;
  int sims = 0;
  Eigen::VectorXd start;
  Eigen::VectorXd beta;
  double value = 0.0;
  double grad_norm = 0.0;
  std::string reason;
  int iterations = 0;
  long evaluations = 0;
};

struct EstimateResult {
  int rep = 0;
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd se;
  std::string status;  // termination reason of the last step, or "error"
  bool converged = false;
  std::string message;
  double seconds = 0.0;
  std::vector<StepRecord> steps;
  std::optional<inf::VarianceReport> variance;

  std::string to_json(const std::vector<std::string>& names) const;
};

/// Runs the schedule on one dataset. `outcomes` uses the SmoothedPanel
/// column layout; `shocks` supplies the observed covariates and at least
/// cfg.max_sims() simulation panels.
EstimateResult estimate(const ExperimentConfig& cfg,
                        std::shared_ptr<const sim::ShockSet> shocks,
                        const Eigen::MatrixXd& outcomes, int rep = 0);

/// Generates the data for replication `rep` (seed base_seed + rep) and
/// estimates. Failures are recorded in the result, never thrown.
EstimateResult estimate_once(const ExperimentConfig& cfg, int rep);

struct Aggregate {
  std::string parameter;
  double truth = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double mean_se = 0.0;
  double se_ratio = 0.0;  // mean(se) / sd
  int count = 0;
};

struct MCResult {
  std::vector<std::string> names;
  Eigen::VectorXd truth;
  std::vector<EstimateResult> rows;
  std::vector<Aggregate> aggregates;
  int converged = 0;
  int failed = 0;
  double mean_seconds = 0.0;

  double convergence_rate() const;
};

/// Replications base_seed + 0 .. reps-1 on `threads` workers; rows are kept
/// in replication order.
MCResult run_mc(const ExperimentConfig& cfg, int reps, int threads);

/// Two-pass mean and sample standard deviation over usable rows.
void aggregate(MCResult& result, bool exclude_flagged);

void write_csv(std::ostream& os, const MCResult& result);
MCResult read_csv(std::istream& is);
/// Mean | Std.dev | Mean SE | SE/sd per parameter plus the average time.
std::string render_table(const MCResult& result);
/// Failed bands, one line each; empty when everything passes.
std::vector<std::string> check_acceptance(const MCResult& result,
                                          const std::vector<AcceptanceBand>& bands);

/// Flat CSV with header (i, t, outcome columns..., covariate columns...);
/// one row per individual and period. Unobserved outcomes are empty fields.
void write_dataset(std::ostream& os, const sim::ObservedData& data);
sim::ObservedData read_dataset(std::istream& is, sim::ModelId model);

}  // namespace gii::harness
