#include "gii/smoothing.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "gii/error.hpp"

namespace gii::smooth {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_positive_lambda(double lambda) {
  if (!(lambda > 0.0)) {
    throw ConfigError("smoothing parameter must be positive, got " +
                      std::to_string(lambda));
  }
}

}  // namespace

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "logistic") return KernelFamily::logistic;
  if (name == "gaussian_cdf" || name == "gaussian") {
    return KernelFamily::gaussian_cdf;
  }
  throw ConfigError("unknown kernel family '" + name + "'");
}

std::string to_string(KernelFamily family) {
  return family == KernelFamily::logistic ? "logistic" : "gaussian_cdf";
}

double Kernel::cdf(double v) const noexcept {
  if (family == KernelFamily::logistic) return 1.0 / (1.0 + std::exp(-v));
  return 0.5 * std::erfc(-v * kInvSqrt2);
}

double Kernel::pdf(double v) const noexcept {
  if (family == KernelFamily::logistic) {
    const double k = cdf(v);
    return k * (1.0 - k);
  }
  return kInvSqrt2Pi * std::exp(-0.5 * v * v);
}

double Kernel::pdf_derivative(double v) const noexcept {
  if (family == KernelFamily::logistic) {
    const double k = cdf(v);
    return k * (1.0 - k) * (1.0 - 2.0 * k);
  }
  return -v * pdf(v);
}

void Kernel::apply_scaled(Eigen::Ref<Eigen::ArrayXd> v, double lambda) const {
  require_positive_lambda(lambda);
  if (family == KernelFamily::logistic) {
    // exp overflows to +inf for very negative arguments, giving exactly 0.
    v = 1.0 / (1.0 + (-v / lambda).exp());
  } else {
    const double s = kInvSqrt2 / lambda;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      v[i] = 0.5 * std::erfc(-v[i] * s);
    }
  }
}

double kernel_eval(const Kernel& kernel, double v, double lambda) {
  require_positive_lambda(lambda);
  return kernel.cdf(v / lambda);
}

double kernel_derivative(const Kernel& kernel, double v, double lambda) {
  require_positive_lambda(lambda);
  return kernel.pdf(v / lambda) / lambda;
}

double kernel_second_derivative(const Kernel& kernel, double v,
                                double lambda) {
  require_positive_lambda(lambda);
  return kernel.pdf_derivative(v / lambda) / (lambda * lambda);
}

Eigen::MatrixXd smooth_multinomial(const Kernel& kernel,
                                   const Eigen::MatrixXd& utilities,
                                   double lambda) {
  if (lambda < 0.0 || std::isnan(lambda)) {
    throw ConfigError("smoothing parameter must be non-negative");
  }
  const Eigen::Index n = utilities.rows();
  const Eigen::Index free = utilities.cols();
  Eigen::MatrixXd out(n, free);

  if (lambda == 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < free; ++j) {
        const double uj = utilities(i, j);
        bool strict_max = uj > 0.0;
        for (Eigen::Index k = 0; k < free && strict_max; ++k) {
          if (k != j && !(uj > utilities(i, k))) strict_max = false;
        }
        out(i, j) = strict_max ? 1.0 : 0.0;
      }
    }
    return out;
  }

  if (free == 1) {
    Eigen::ArrayXd v = utilities.col(0).array();
    kernel.apply_scaled(v, lambda);
    out.col(0) = v.matrix();
    return out;
  }

  if (kernel.family == KernelFamily::logistic) {
    // Softmax over (u_1, ..., u_{J-1}, 0) with temperature lambda; the shift
    // by the row maximum keeps every exponent non-positive.
    Eigen::ArrayXd rowmax = utilities.rowwise().maxCoeff().array().max(0.0);
    Eigen::ArrayXXd e =
        ((utilities.array().colwise() - rowmax) / lambda).exp();
    Eigen::ArrayXd denom = e.rowwise().sum() + (-rowmax / lambda).exp();
    out = (e.colwise() / denom).matrix();
    return out;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < free; ++j) {
      const double uj = utilities(i, j);
      double p = kernel.cdf(uj / lambda);
      for (Eigen::Index k = 0; k < free; ++k) {
        if (k != j) p *= kernel.cdf((uj - utilities(i, k)) / lambda);
      }
      out(i, j) = p;
    }
  }
  return out;
}

std::vector<double> JackknifePlan::grid(double lambda) const {
  std::vector<double> g(static_cast<std::size_t>(order) + 1);
  double scale = 1.0;
  for (auto& value : g) {
    value = lambda * scale;
    scale *= delta;
  }
  return g;
}

JackknifePlan jackknife_weights(int order, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("jackknife delta must lie in (0, 1)");
  }
  if (order < 0) throw ConfigError("jackknife order must be non-negative");
  if (order > 8) {
    throw ConfigError("jackknife order above 8 is numerically meaningless");
  }

  const int size = order + 1;
  Eigen::MatrixXd vandermonde(size, size);
  for (int j = 0; j < size; ++j) {
    for (int r = 0; r < size; ++r) {
      vandermonde(j, r) = std::pow(delta, static_cast<double>(r * j));
    }
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(size);
  rhs[0] = 1.0;
  const Eigen::VectorXd w = vandermonde.fullPivLu().solve(rhs);

  JackknifePlan plan;
  plan.order = order;
  plan.delta = delta;
  plan.weights.assign(w.data(), w.data() + size);
  return plan;
}

Eigen::VectorXd jackknife_combine(std::span<const Eigen::VectorXd> values,
                                  const JackknifePlan& plan) {
  if (values.size() != plan.weights.size()) {
    throw ConfigError("jackknife_combine: expected " +
                      std::to_string(plan.weights.size()) + " values, got " +
                      std::to_string(values.size()));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(values.front().size());
  for (std::size_t r = 0; r < values.size(); ++r) {
    if (values[r].size() != out.size()) {
      throw ConfigError("jackknife_combine: inconsistent vector lengths");
    }
    out += plan.weights[r] * values[r];
  }
  return out;
}

}  // namespace gii::smooth
