#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gii::smooth {

enum class KernelFamily { logistic, gaussian_cdf };

KernelFamily parse_kernel_family(const std::string& name);
std::string to_string(KernelFamily family);

/// A smooth univariate cdf K with its first two derivatives.
///
/// K is nondecreasing with K(-inf) = 0, K(+inf) = 1, and K' is symmetric
/// about zero for both families.
struct Kernel {
  KernelFamily family = KernelFamily::logistic;

  double cdf(double v) const noexcept;
  double pdf(double v) const noexcept;
  double pdf_derivative(double v) const noexcept;

  /// In-place K(v / lambda) over an array; lambda must be positive.
  void apply_scaled(Eigen::Ref<Eigen::ArrayXd> v, double lambda) const;
};

/// K_lambda(v) = K(v / lambda). Throws ConfigError unless lambda > 0.
double kernel_eval(const Kernel& kernel, double v, double lambda);
/// d/dv K_lambda(v) = K'(v / lambda) / lambda.
double kernel_derivative(const Kernel& kernel, double v, double lambda);
/// d^2/dv^2 K_lambda(v) = K''(v / lambda) / lambda^2.
double kernel_second_derivative(const Kernel& kernel, double v, double lambda);

/// Smoothed choice probabilities among J alternatives whose last utility is
/// normalized to zero. `utilities` holds the J-1 free utilities for each row
/// (n x (J-1)); the result has the same shape.
///
/// logistic: the multivariate logistic cdf of the utility differences, which
/// is a softmax with temperature lambda. gaussian_cdf: product of univariate
/// cdfs of each pairwise difference. lambda == 0 gives hard indicators with
/// ties resolved to "not chosen".
Eigen::MatrixXd smooth_multinomial(const Kernel& kernel,
                                   const Eigen::MatrixXd& utilities,
                                   double lambda);

/// Richardson extrapolation weights over the grid lambda, delta*lambda, ...,
/// delta^k * lambda.
struct JackknifePlan {
  int order = 0;
  double delta = 0.5;
  std::vector<double> weights{1.0};

  /// The k+1 bandwidths in descending order.
  std::vector<double> grid(double lambda) const;
};

/// Solves the (k+1)x(k+1) Vandermonde system
///   sum_r w_r (delta^r)^j = [j == 0],  j = 0..k.
JackknifePlan jackknife_weights(int order, double delta);

/// sum_r w_r * values[r]. values.size() must equal order + 1.
Eigen::VectorXd jackknife_combine(std::span<const Eigen::VectorXd> values,
                                  const JackknifePlan& plan);

}  // namespace gii::smooth
