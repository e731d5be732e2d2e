#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gii/auxiliary.hpp"
#include "gii/model.hpp"
#include "gii/smoothing.hpp"

namespace gii::crit {

enum class Kind { wald, lr, lm };

Kind parse_kind(const std::string& name);
std::string to_string(Kind kind);

struct CriterionConfig {
  Kind kind = Kind::lr;
  double lambda = 0.03;
  int sims = 10;
  smooth::JackknifePlan jackknife;
  smooth::Kernel kernel;
  sim::DynMode dyn_mode = sim::DynMode::product;
  /// Wald (W) or LM (V) weight; empty means identity.
  Eigen::MatrixXd weight;
  /// Relative finite-difference step; unset means lambda / 300.
  std::optional<double> fd_step;
  int threads = 1;

  double step() const;
  /// lambda may be 0 only for plain criterion evaluation.
  void validate(int d_theta, int max_sims) const;
};

/// Box constraints on beta.
struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  bool contains(const Eigen::VectorXd& beta) const;
  static Bounds unbounded(int dim);
  /// Wide boxes per model; autoregressive coefficients stay in (-0.99, 0.99).
  static Bounds defaults(sim::ModelId model);
};

/// The jackknifed sample binding function at one beta and the fits behind it.
struct BindingEval {
  Eigen::VectorXd beta;
  Eigen::VectorXd theta_bar;
  /// Indexed r * M + (m - 1).
  std::vector<Eigen::VectorXd> thetas;
  std::vector<aux::SufficientStats> stats;
};

/// The GII objective for one dataset and one set of common random numbers.
///
/// Shocks and covariate features are fixed at construction, so every
/// criterion evaluation is a deterministic function of beta.
class Criterion {
 public:
  /// `observed` uses the SmoothedPanel column layout of `structure.model`.
  /// The covariates of `shocks` must be the observed covariates.
  Criterion(sim::StructuralConfig structure,
            std::shared_ptr<const sim::ShockSet> shocks,
            aux::AuxiliarySpec spec, const Eigen::MatrixXd& observed,
            CriterionConfig config, Bounds bounds);

  /// Switches (lambda, M, ...) and drops the memoized binding.
  void reconfigure(CriterionConfig config);

  const CriterionConfig& config() const noexcept { return config_; }
  const sim::StructuralConfig& structure() const noexcept { return structure_; }
  const sim::ShockSet& shocks() const noexcept { return *shocks_; }
  const aux::AuxiliarySpec& spec() const noexcept { return spec_; }
  const aux::FeatureCache& cache() const noexcept { return cache_; }
  const aux::AuxiliaryFit& data_fit() const noexcept { return data_fit_; }
  const Eigen::MatrixXd& observed() const noexcept { return observed_; }
  const Bounds& bounds() const noexcept { return bounds_; }
  int d_beta() const noexcept { return static_cast<int>(bounds_.lower.size()); }
  int d_theta() const noexcept { return spec_.d_theta(); }
  long evaluations() const noexcept { return evaluations_; }

  /// Smoothed outcomes of simulation m at beta and lambda.
  Eigen::MatrixXd simulate(const Eigen::VectorXd& beta, int m,
                           double lambda) const;

  /// Memoized on beta. Throws OutOfBoundsError outside the box and
  /// DegenerateDesignError naming (m, r) when a simulated fit degenerates.
  const BindingEval& binding(const Eigen::VectorXd& beta);

  double value(const Eigen::VectorXd& beta);
  /// Central differences with step fd_step * max(1, |beta_j|).
  Eigen::VectorXd gradient(const Eigen::VectorXd& beta);
  /// Central differences of the gradient, symmetrized.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& beta);

  /// theta_bar(beta) - theta_hat, the Wald residual.
  Eigen::VectorXd residual(const Eigen::VectorXd& beta);
  /// Central-difference Jacobian of theta_bar, d_theta x d_beta.
  Eigen::MatrixXd binding_jacobian(const Eigen::VectorXd& beta);

  /// The weight actually used by the quadratic criteria.
  Eigen::MatrixXd weight() const;

 private:
  Eigen::VectorXd steps(const Eigen::VectorXd& beta) const;
  double stencil_value(const Eigen::VectorXd& beta);

  sim::StructuralConfig structure_;
  std::shared_ptr<const sim::ShockSet> shocks_;
  aux::AuxiliarySpec spec_;
  aux::FeatureCache cache_;
  Eigen::MatrixXd observed_;
  aux::AuxiliaryFit data_fit_;
  CriterionConfig config_;
  Bounds bounds_;
  std::optional<BindingEval> memo_;
  long evaluations_ = 0;
};

}  // namespace gii::crit
