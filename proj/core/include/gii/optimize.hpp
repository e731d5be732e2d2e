#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gii::opt {

enum class Routine { gauss_newton, bfgs, trust_region };

Routine parse_routine(const std::string& name);
std::string to_string(Routine routine);

enum class Termination {
  near_root,
  near_root_second_order,
  max_iter,
  line_search_fail
};

std::string to_string(Termination reason);

struct OptimizerConfig {
  Routine routine = Routine::bfgs;
  double c1 = 1e-4;
  /// Curvature constant; 0 picks 0.9 for BFGS and 0.1 for Gauss-Newton.
  double c2 = 0.0;
  /// Gradient-norm threshold; 0 picks 1e-6 * max(1, |Q(beta0)|).
  double grad_tol = 0.0;
  int max_iter = 200;
  int max_line_search = 40;
  double tr_init_radius = 1.0;
  double tr_eta_accept = 0.1;
  /// Smallest admissible Hessian eigenvalue, relative to max(1, ||H||).
  double eig_tol = 1e-6;
  /// Forced on for the trust-region routine.
  bool check_second_order = false;

  double curvature_constant() const;
  void validate() const;
};

/// The function being minimized. `hessian` is needed by the trust-region
/// routine (and the optional second-order check); `residual` and `jacobian`
/// by Gauss-Newton, which minimizes residual' W residual.
struct Objective {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  Eigen::MatrixXd weight;  // empty means identity
};

struct Iterate {
  Eigen::VectorXd beta;
  double value = 0.0;
  double grad_norm = 0.0;
  double step_length = 0.0;
  std::string step;  // "start", "accepted", "rejected", "skip-update"
};

struct OptResult {
  Eigen::VectorXd beta;
  double value = 0.0;
  Eigen::VectorXd gradient;
  Termination reason = Termination::max_iter;
  int iterations = 0;
  std::vector<Iterate> trace;
  /// Final BFGS Hessian approximation (or the last FD Hessian for TR).
  Eigen::MatrixXd hessian;
  double grad_tol = 0.0;
};

/// Minimizes from beta0. Trial points where the objective throws a
/// gii::Error are treated as +infinity, so a line search backs away from
/// them; the starting point itself must evaluate.
///
/// `initial_hessian` warm-starts BFGS (e.g. from a previous schedule step).
OptResult minimize(const Objective& objective, const Eigen::VectorXd& beta0,
                   const OptimizerConfig& config,
                   const Eigen::MatrixXd* initial_hessian = nullptr);

/// Runs minimize from every start and returns the lowest terminal value.
OptResult minimize_multistart(const Objective& objective,
                              std::span<const Eigen::VectorXd> starts,
                              const OptimizerConfig& config);

/// A one-dimensional restriction phi(alpha) = Q(beta + alpha p).
struct LineFunction {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

struct LineSearchResult {
  double alpha = 0.0;
  double value = 0.0;
  double derivative = 0.0;
  int evaluations = 0;
};

/// Bracketing and zoom search for a step satisfying
///   phi(a) <= phi(0) + c1 a phi'(0)   and   |phi'(a)| <= c2 |phi'(0)|.
/// Throws NumericalError when phi'(0) >= 0 or no such step is found within
/// max_evals function evaluations.
LineSearchResult wolfe_line_search(const LineFunction& phi, double phi0,
                                   double dphi0, double alpha0, double c1,
                                   double c2, int max_evals = 40);

/// BFGS update of the Hessian approximation delta with step x and gradient
/// change d. Returns false (leaving delta untouched) when d'x <= 0.
bool bfgs_update(Eigen::MatrixXd& delta, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& d);

struct TrustRegionStep {
  Eigen::VectorXd step;
  double mu = 0.0;
  bool boundary = false;
  bool hard_case = false;
  /// -(g's + s'Hs/2), the decrease predicted by the quadratic model.
  double predicted = 0.0;
};

/// Minimizes g's + s'Hs/2 subject to ||s|| <= radius through the
/// eigendecomposition of H. Throws ConfigError for a non-symmetric H.
TrustRegionStep tr_subproblem(const Eigen::VectorXd& grad,
                              const Eigen::MatrixXd& hess, double radius);

}  // namespace gii::opt
