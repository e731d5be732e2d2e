#include "gii/criterion.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "gii/error.hpp"
#include "parallel.hpp"

namespace gii::crit {
namespace {

const sim::ShockSet& require(const std::shared_ptr<const sim::ShockSet>& shocks) {
  if (!shocks) throw ConfigError("criterion needs a shock set");
  return *shocks;
}

}  // namespace

Kind parse_kind(const std::string& name) {
  if (name == "wald" || name == "Wald") return Kind::wald;
  if (name == "lr" || name == "LR") return Kind::lr;
  if (name == "lm" || name == "LM") return Kind::lm;
  throw ConfigError("unknown criterion kind '" + name + "'");
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::wald:
      return "wald";
    case Kind::lr:
      return "lr";
    case Kind::lm:
      return "lm";
  }
  return "?";
}

double CriterionConfig::step() const {
  return fd_step.value_or(lambda / 300.0);
}

void CriterionConfig::validate(int d_theta, int max_sims) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("criterion lambda must be a finite non-negative number");
  }
  if (sims < 1) throw ConfigError("criterion needs at least one simulation");
  if (sims > max_sims) {
    throw ConfigError("criterion asks for " + std::to_string(sims) +
                      " simulations but only " + std::to_string(max_sims) +
                      " were drawn");
  }
  if (jackknife.weights.size() != static_cast<std::size_t>(jackknife.order) + 1) {
    throw ConfigError("jackknife plan weights do not match its order");
  }
  if (fd_step && !(*fd_step > 0.0)) {
    throw ConfigError("fd_step must be positive");
  }
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (weight.size() != 0) {
    if (weight.rows() != d_theta || weight.cols() != d_theta) {
      throw ConfigError("criterion weight must be " + std::to_string(d_theta) +
                        " x " + std::to_string(d_theta));
    }
    if (!weight.isApprox(weight.transpose(), 1e-12)) {
      throw ConfigError("criterion weight must be symmetric");
    }
    if (weight.llt().info() != Eigen::Success) {
      throw ConfigError("criterion weight must be positive definite");
    }
  }
}

bool Bounds::contains(const Eigen::VectorXd& beta) const {
  if (beta.size() != lower.size()) return false;
  return (beta.array() > lower.array()).all() && (beta.array() < upper.array()).all();
}

Bounds Bounds::unbounded(int dim) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {Eigen::VectorXd::Constant(dim, -inf), Eigen::VectorXd::Constant(dim, inf)};
}

Bounds Bounds::defaults(sim::ModelId model) {
  const int dim = sim::parameter_count(model);
  Bounds b{Eigen::VectorXd::Constant(dim, -10.0), Eigen::VectorXd::Constant(dim, 10.0)};
  if (model == sim::ModelId::M1 || model == sim::ModelId::M2 ||
      model == sim::ModelId::M3) {
    b.lower[1] = -0.99;
    b.upper[1] = 0.99;
  }
  return b;
}

Criterion::Criterion(sim::StructuralConfig structure,
                     std::shared_ptr<const sim::ShockSet> shocks,
                     aux::AuxiliarySpec spec, const Eigen::MatrixXd& observed,
                     CriterionConfig config, Bounds bounds)
    : structure_(std::move(structure)),
      shocks_(std::move(shocks)),
      spec_(std::move(spec)),
      cache_(spec_, require(shocks_).covariates()),
      observed_(observed),
      config_(std::move(config)),
      bounds_(std::move(bounds)) {
  const int d_beta = sim::parameter_count(structure_.model);
  if (bounds_.lower.size() != d_beta || bounds_.upper.size() != d_beta) {
    throw ConfigError("bounds must have one entry per structural parameter");
  }
  if ((bounds_.lower.array() > bounds_.upper.array()).any()) {
    throw ConfigError("bounds have lower > upper");
  }
  if (spec_.model != structure_.model) {
    throw ConfigError("auxiliary spec and structural model differ");
  }
  if (structure_.beta.size() != d_beta) structure_.beta = Eigen::VectorXd::Zero(d_beta);
  structure_.validate();
  if (observed_.rows() != shocks_->n()) {
    throw ConfigError("observed data and shock set differ in n");
  }
  config_.validate(spec_.d_theta(), shocks_->sims());
  data_fit_ = aux::fit(spec_, aux::accumulate_stats(spec_, observed_, cache_));
}

void Criterion::reconfigure(CriterionConfig config) {
  config.validate(spec_.d_theta(), shocks_->sims());
  config_ = std::move(config);
  memo_.reset();
}

Eigen::MatrixXd Criterion::weight() const {
  if (config_.weight.size() != 0) return config_.weight;
  return Eigen::MatrixXd::Identity(d_theta(), d_theta());
}

Eigen::MatrixXd Criterion::simulate(const Eigen::VectorXd& beta, int m,
                                    double lambda) const {
  sim::StructuralConfig cfg = structure_;
  cfg.beta = beta;
  return sim::smooth_choices(cfg, *shocks_, m, lambda, config_.dyn_mode,
                             config_.kernel)
      .y;
}

const BindingEval& Criterion::binding(const Eigen::VectorXd& beta) {
  if (beta.size() != d_beta()) {
    throw ConfigError("beta has " + std::to_string(beta.size()) +
                      " entries, expected " + std::to_string(d_beta()));
  }
  if (memo_ && memo_->beta == beta) return *memo_;
  if (!bounds_.contains(beta)) {
    throw OutOfBoundsError("beta lies outside the parameter box");
  }
  if (!beta.allFinite()) throw NumericalError("beta is not finite");

  const int sims = config_.sims;
  const std::vector<double> grid = config_.jackknife.grid(config_.lambda);
  const int tasks = sims * static_cast<int>(grid.size());

  BindingEval out;
  out.beta = beta;
  out.thetas.resize(static_cast<std::size_t>(tasks));
  out.stats.resize(static_cast<std::size_t>(tasks));
  detail::parallel_for(tasks, config_.threads, [&](int task) {
    const int r = task / sims;
    const int m = task % sims + 1;
    const auto k = static_cast<std::size_t>(task);
    try {
      out.stats[k] = aux::accumulate_stats(
          spec_, simulate(beta, m, grid[static_cast<std::size_t>(r)]), cache_);
      out.thetas[k] = aux::fit(spec_, out.stats[k]).theta;
    } catch (const DegenerateDesignError& e) {
      throw DegenerateDesignError(e.block(), "simulation m=" + std::to_string(m) +
                                                 ", grid point r=" + std::to_string(r) +
                                                 " (" + e.what() + ")");
    }
  });

  out.theta_bar = Eigen::VectorXd::Zero(d_theta());
  for (std::size_t r = 0; r < grid.size(); ++r) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d_theta());
    for (int m = 0; m < sims; ++m) {
      mean += out.thetas[r * static_cast<std::size_t>(sims) + static_cast<std::size_t>(m)];
    }
    out.theta_bar += config_.jackknife.weights[r] * mean / static_cast<double>(sims);
  }
  ++evaluations_;
  memo_ = std::move(out);
  return *memo_;
}

double Criterion::value(const Eigen::VectorXd& beta) {
  const BindingEval& b = binding(beta);
  switch (config_.kind) {
    case Kind::wald: {
      const Eigen::VectorXd diff = b.theta_bar - data_fit_.theta;
      if (config_.weight.size() == 0) return diff.squaredNorm();
      return diff.dot(config_.weight * diff);
    }
    case Kind::lr:
      return -aux::loglik(spec_, b.theta_bar, data_fit_.stats);
    case Kind::lm: {
      const int sims = config_.sims;
      Eigen::VectorXd s = Eigen::VectorXd::Zero(d_theta());
      for (std::size_t r = 0; r < config_.jackknife.weights.size(); ++r) {
        for (int m = 0; m < sims; ++m) {
          const auto k = r * static_cast<std::size_t>(sims) + static_cast<std::size_t>(m);
          s += (config_.jackknife.weights[r] / sims) *
               aux::score(spec_, data_fit_.theta, b.stats[k]);
        }
      }
      if (config_.weight.size() == 0) return s.squaredNorm();
      return s.dot(config_.weight * s);
    }
  }
  return 0.0;
}

Eigen::VectorXd Criterion::steps(const Eigen::VectorXd& beta) const {
  const double h = config_.step();
  Eigen::VectorXd out = h * beta.cwiseAbs().cwiseMax(1.0);
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    if (beta[j] + out[j] == beta[j]) {
      throw NumericalError("finite-difference step underflows at coordinate " +
                           std::to_string(j));
    }
  }
  return out;
}

double Criterion::stencil_value(const Eigen::VectorXd& beta) {
  if (!bounds_.contains(beta)) {
    throw OutOfBoundsError("finite-difference stencil leaves the parameter box");
  }
  const double v = value(beta);
  if (!std::isfinite(v)) {
    throw NumericalError("criterion is not finite at a stencil point");
  }
  return v;
}

Eigen::VectorXd Criterion::gradient(const Eigen::VectorXd& beta) {
  if (!(config_.lambda > 0.0)) {
    throw ConfigError("criterion derivatives need lambda > 0");
  }
  const Eigen::VectorXd h = steps(beta);
  Eigen::VectorXd g(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    Eigen::VectorXd up = beta;
    Eigen::VectorXd down = beta;
    up[j] += h[j];
    down[j] -= h[j];
    g[j] = (stencil_value(up) - stencil_value(down)) / (up[j] - down[j]);
  }
  return g;
}

Eigen::MatrixXd Criterion::hessian(const Eigen::VectorXd& beta) {
  const Eigen::VectorXd h = steps(beta);
  const Eigen::Index d = beta.size();
  Eigen::MatrixXd hess(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd up = beta;
    Eigen::VectorXd down = beta;
    up[j] += h[j];
    down[j] -= h[j];
    hess.col(j) = (gradient(up) - gradient(down)) / (up[j] - down[j]);
  }
  return 0.5 * (hess + hess.transpose());
}

Eigen::VectorXd Criterion::residual(const Eigen::VectorXd& beta) {
  return binding(beta).theta_bar - data_fit_.theta;
}

Eigen::MatrixXd Criterion::binding_jacobian(const Eigen::VectorXd& beta) {
  if (!(config_.lambda > 0.0)) {
    throw ConfigError("binding Jacobian needs lambda > 0");
  }
  const Eigen::VectorXd h = steps(beta);
  Eigen::MatrixXd jac(d_theta(), beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    Eigen::VectorXd up = beta;
    Eigen::VectorXd down = beta;
    up[j] += h[j];
    down[j] -= h[j];
    if (!bounds_.contains(up) || !bounds_.contains(down)) {
      throw OutOfBoundsError("finite-difference stencil leaves the parameter box");
    }
    const Eigen::VectorXd plus = binding(up).theta_bar;
    const Eigen::VectorXd minus = binding(down).theta_bar;
    jac.col(j) = (plus - minus) / (up[j] - down[j]);
  }
  return jac;
}

}  // namespace gii::crit
