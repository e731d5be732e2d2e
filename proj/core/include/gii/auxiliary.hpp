#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "gii/model.hpp"

namespace gii::aux {

/// A product of covariate columns (with repetition); no columns means the
/// constant 1. `zero` marks the placeholder for an initial lagged choice that
/// the model fixes at 0.
struct Monomial {
  std::vector<int> columns;
  bool zero = false;
  std::string label;
};

/// One period's equation(s) within a block. Indices address the moment
/// vector t_i = (outcomes..., features...).
struct Instance {
  int period = 0;  // 1-based model period
  std::vector<int> outcomes;
  std::vector<int> regressors;
};

/// Equations sharing one coefficient matrix and one error covariance. A
/// block with several instances pools periods (alpha_t = alpha_q for t > q).
struct Block {
  std::string label;
  std::vector<Instance> instances;

  int equations() const { return static_cast<int>(instances.front().outcomes.size()); }
  int regressors() const { return static_cast<int>(instances.front().regressors.size()); }
  int parameter_count() const {
    const int d = equations();
    return regressors() * d + d * (d + 1) / 2;
  }
};

/// The Gaussian SUR auxiliary model with one of the regressor menus.
///
/// theta stacks, block by block, the coefficient matrix column by column
/// (equation-major) followed by the upper triangle of the error precision
/// matrix, row-major.
struct AuxiliarySpec {
  sim::ModelId model = sim::ModelId::M1;
  int variant = 1;
  int tie_after = 1;  // q

  std::vector<int> outcome_columns;  // panel columns forming the outcome part
  // Feature (index into `features`) multiplying each outcome column, or -1.
  std::vector<int> outcome_features;
  std::vector<std::string> outcome_labels;
  std::vector<Monomial> features;
  std::vector<Block> blocks;

  int outcome_count() const { return static_cast<int>(outcome_columns.size()); }
  int feature_count() const { return static_cast<int>(features.size()); }
  int moment_dim() const { return outcome_count() + feature_count(); }
  int d_theta() const;
  std::vector<std::string> theta_labels() const;
  std::string moment_label(int index) const;

  /// Order condition d_theta >= d_beta and per-block shape consistency.
  void validate() const;
};

/// Builds the regressor menu `variant` (1-4) for a model. `periods` is T and
/// `unobserved` is s (M3 only).
///
/// M5 has a single menu (variant 1): a linear probability model of y on
/// (1, x1, x2) and an earnings equation regressing w*y on y*(1, x1, x2), which
/// is OLS of w on (1, x1, x2) over workers when y is binary.
AuxiliarySpec make_spec(sim::ModelId model, int variant, int periods,
                        int unobserved = 0);

/// Covariate features of one dataset and their cross moments, computed once
/// and shared by every beta evaluation.
class FeatureCache {
 public:
  FeatureCache(const AuxiliarySpec& spec, const Eigen::MatrixXd& covariates);

  int n() const noexcept { return static_cast<int>(features_.rows()); }
  /// n x F.
  const Eigen::MatrixXd& features() const noexcept { return features_; }
  /// (1/n) F'F.
  const Eigen::MatrixXd& cross_moments() const noexcept { return cross_; }

 private:
  Eigen::MatrixXd features_;
  Eigen::MatrixXd cross_;
};

/// (1/n) sum_i t_i t_i' over t_i = (outcomes, features).
struct SufficientStats {
  Eigen::MatrixXd moments;
  int n = 0;
};

/// The outcome part of t_i for each individual: n x outcome_count().
Eigen::MatrixXd extract_outcomes(const AuxiliarySpec& spec,
                                 const Eigen::MatrixXd& panel,
                                 const FeatureCache& cache);

SufficientStats accumulate_stats(const AuxiliarySpec& spec,
                                 const Eigen::MatrixXd& panel,
                                 const FeatureCache& cache);

/// Per-instance design matrices, in block order.
struct Design {
  int block = 0;
  int period = 0;
  Eigen::MatrixXd regressors;  // n x p
  Eigen::MatrixXd outcomes;    // n x d
};

std::vector<Design> build_regressors(const AuxiliarySpec& spec,
                                     const Eigen::MatrixXd& panel,
                                     const FeatureCache& cache);

struct BlockParams {
  Eigen::MatrixXd coef;       // p x d
  Eigen::MatrixXd precision;  // d x d

  Eigen::MatrixXd covariance() const;
};

struct AuxiliaryFit {
  Eigen::VectorXd theta;
  double loglik = 0.0;
  SufficientStats stats;
  std::vector<BlockParams> blocks;
};

/// ML (= OLS per block) estimate from sufficient statistics. Variances use
/// the ML divisor n (times the number of pooled periods). Throws
/// DegenerateDesignError for a singular Gram block (reciprocal condition
/// below 1e-12) or a non-positive-definite residual covariance.
AuxiliaryFit fit(const AuxiliarySpec& spec, const SufficientStats& stats);

std::vector<BlockParams> unpack(const AuxiliarySpec& spec,
                                const Eigen::VectorXd& theta);
Eigen::VectorXd pack(const AuxiliarySpec& spec,
                     const std::vector<BlockParams>& blocks);

/// Average Gaussian log-likelihood L(T_n; theta). Throws NumericalError when a
/// precision block is not positive definite.
double loglik(const AuxiliarySpec& spec, const Eigen::VectorXd& theta,
              const SufficientStats& stats);

/// Average score (1/n) sum_i dl_i/dtheta, computed from the moments.
Eigen::VectorXd score(const AuxiliarySpec& spec, const Eigen::VectorXd& theta,
                      const SufficientStats& stats);

/// Per-individual scores, n x d_theta.
Eigen::MatrixXd individual_scores(const AuxiliarySpec& spec,
                                  const Eigen::VectorXd& theta,
                                  const Eigen::MatrixXd& panel,
                                  const FeatureCache& cache);

/// Analytic Hessian of the average log-likelihood.
Eigen::MatrixXd hessian(const AuxiliarySpec& spec, const Eigen::VectorXd& theta,
                        const SufficientStats& stats);

}  // namespace gii::aux
