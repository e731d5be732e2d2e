#pragma once

#include <span>
#include <string>

#include <Eigen/Core>

#include "gii/auxiliary.hpp"
#include "gii/criterion.hpp"

namespace gii::inf {

/// Ingredients of the sandwich variance.
struct VarianceParts {
  Eigen::MatrixXd G;  // d_theta x d_beta binding Jacobian
  Eigen::MatrixXd H;  // auxiliary Hessian at the data fit
  Eigen::MatrixXd V;  // score covariance
  Eigen::MatrixXd U;  // W (Wald), H (LR)
};

struct Sandwich {
  Eigen::MatrixXd omega;
  Eigen::VectorXd se;
};

/// Central-difference Jacobian of theta_bar at beta_hat. Throws ConfigError
/// when d_theta < d_beta and NumericalError (listing the singular values)
/// when the Jacobian is rank deficient.
Eigen::MatrixXd estimate_G(crit::Criterion& criterion,
                           const Eigen::VectorXd& beta_hat);

/// Analytic auxiliary Hessian at the data fit.
Eigen::MatrixXd estimate_H(const aux::AuxiliarySpec& spec,
                           const aux::AuxiliaryFit& data_fit);

/// (1/n) sum_i u_i u_i' with u_i = s0_i - (1/M) sum_m s^m_i, where s0_i is
/// individual i's data score at theta_hat and s^m_i its score in simulation m
/// at that simulation's own fit theta_m.
Eigen::MatrixXd estimate_V(const aux::AuxiliarySpec& spec,
                           const aux::FeatureCache& cache,
                           const Eigen::VectorXd& theta_hat,
                           const Eigen::MatrixXd& data_panel,
                           std::span<const Eigen::VectorXd> sim_thetas,
                           std::span<const Eigen::MatrixXd> sim_panels);

/// Omega = (G'UG)^-1 G'U H^-1 V H^-1 UG (G'UG)^-1 and se_j = sqrt(Omega_jj / n).
Sandwich sandwich(const VarianceParts& parts, int n);

struct VarianceReport {
  Eigen::VectorXd beta_hat;
  VarianceParts parts;
  Sandwich result;
  double cond_G = 0.0;
  double cond_H = 0.0;
  double cond_GUG = 0.0;

  std::string to_json() const;
};

/// Assembles G, H, V and U at beta_hat using the criterion's current
/// (lambda, M) and returns the sandwich. For LM the weight is U = H V_w H,
/// the Wald form that the score criterion is equivalent to.
VarianceReport assess(crit::Criterion& criterion,
                      const Eigen::VectorXd& beta_hat);

}  // namespace gii::inf
