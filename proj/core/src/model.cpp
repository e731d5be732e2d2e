#include "gii/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "gii/error.hpp"
#include "gii/rng.hpp"

namespace gii::sim {
namespace {

// Hard indicator with ties resolved to "not chosen".
Eigen::ArrayXd indicator(const Eigen::ArrayXd& v) {
  return (v > 0.0).cast<double>();
}

Eigen::ArrayXd smoothed(const smooth::Kernel& kernel, Eigen::ArrayXd v,
                        double lambda) {
  if (lambda == 0.0) return indicator(v);
  kernel.apply_scaled(v, lambda);
  return v;
}

void check_panel_index(const ShockSet& shocks, int m) {
  if (m < 0 || m > shocks.sims()) {
    throw ConfigError("simulation index " + std::to_string(m) +
                      " outside [0, " + std::to_string(shocks.sims()) + "]");
  }
}

void check_dimensions(const StructuralConfig& cfg, const ShockSet& shocks) {
  cfg.validate();
  if (shocks.n() != cfg.n || shocks.periods() != cfg.periods) {
    throw ConfigError("shock set dimensions (n=" + std::to_string(shocks.n()) +
                      ", T=" + std::to_string(shocks.periods()) +
                      ") do not match the structural config (n=" +
                      std::to_string(cfg.n) +
                      ", T=" + std::to_string(cfg.periods) + ")");
  }
  if (shocks.covariates().cols() != cfg.periods * cfg.covariates_per_period()) {
    throw ConfigError("covariate panel has the wrong number of columns");
  }
}

}  // namespace

ModelId parse_model_id(const std::string& name) {
  if (name == "M1" || name == "1") return ModelId::M1;
  if (name == "M2" || name == "2") return ModelId::M2;
  if (name == "M3" || name == "3") return ModelId::M3;
  if (name == "M4" || name == "4") return ModelId::M4;
  if (name == "M5" || name == "5") return ModelId::M5;
  throw ConfigError("unknown model id '" + name + "'");
}

std::string to_string(ModelId id) {
  return "M" + std::to_string(static_cast<int>(id));
}

std::vector<std::string> parameter_names(ModelId id) {
  switch (id) {
    case ModelId::M1:
      return {"b", "r"};
    case ModelId::M2:
    case ModelId::M3:
      return {"b1", "r", "b2"};
    case ModelId::M4:
      return {"b10", "b11", "b12", "b20", "b21", "b22", "c1", "c2"};
    case ModelId::M5:
      return {"b10", "b11", "b20", "b21", "b22", "c1", "c2"};
  }
  throw ConfigError("unknown model id");
}

int parameter_count(ModelId id) {
  return static_cast<int>(parameter_names(id).size());
}

int StructuralConfig::alternatives() const noexcept {
  return model == ModelId::M4 ? 3 : 2;
}

int StructuralConfig::shocks_per_period() const noexcept {
  return (model == ModelId::M4 || model == ModelId::M5) ? 2 : 1;
}

int StructuralConfig::covariates_per_period() const noexcept {
  switch (model) {
    case ModelId::M4:
      return 3;
    case ModelId::M5:
      return 2;
    default:
      return 1;
  }
}

void StructuralConfig::validate() const {
  if (n < 1) throw ConfigError("n must be at least 1");
  if (periods < 1) throw ConfigError("T must be at least 1");
  if (beta.size() != parameter_count(model)) {
    throw ConfigError(to_string(model) + " expects " +
                      std::to_string(parameter_count(model)) +
                      " parameters, got " + std::to_string(beta.size()));
  }
  if (!beta.allFinite()) throw ConfigError("beta contains non-finite values");
  if (unobserved < 0 || unobserved >= periods) {
    throw ConfigError("unobserved periods s must satisfy 0 <= s < T");
  }
  if (model != ModelId::M3 && unobserved != 0) {
    throw ConfigError("only M3 has unobserved initial periods");
  }
  if ((model == ModelId::M4 || model == ModelId::M5) && periods != 1) {
    throw ConfigError(to_string(model) + " is static: T must be 1");
  }
  if ((model == ModelId::M1 || model == ModelId::M2 || model == ModelId::M3) && periods < 2) {
    throw ConfigError(to_string(model) + " is dynamic: T must be at least 2");
  }
}

ShockSet::ShockSet(const StructuralConfig& cfg, int sims, std::uint64_t seed)
    : sims_(sims), periods_(cfg.periods), seed_(seed) {
  if (sims < 0) throw ConfigError("number of simulations must be >= 0");
  const int dx = cfg.covariates_per_period();
  covariates_.resize(cfg.n, static_cast<Eigen::Index>(cfg.periods) * dx);
  for (int i = 0; i < cfg.n; ++i) {
    for (int t = 0; t < cfg.periods; ++t) {
      for (int pair = 0; 2 * pair < dx; ++pair) {
        const auto [z0, z1] = rng::normal_pair(
            seed, rng::Stream::covariate, 0, static_cast<std::uint32_t>(i),
            static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(pair));
        covariates_(i, t * dx + 2 * pair) = z0;
        if (2 * pair + 1 < dx) covariates_(i, t * dx + 2 * pair + 1) = z1;
      }
    }
  }
  draw_shocks(cfg);
}

ShockSet::ShockSet(const StructuralConfig& cfg, int sims, std::uint64_t seed,
                   Eigen::MatrixXd covariates)
    : sims_(sims),
      periods_(cfg.periods),
      seed_(seed),
      covariates_(std::move(covariates)) {
  if (sims < 0) throw ConfigError("number of simulations must be >= 0");
  if (covariates_.rows() != cfg.n ||
      covariates_.cols() != cfg.periods * cfg.covariates_per_period()) {
    throw ConfigError("supplied covariates must be n x (T * dx)");
  }
  if (!covariates_.allFinite()) {
    throw ConfigError("supplied covariates contain non-finite values");
  }
  draw_shocks(cfg);
}

void ShockSet::draw_shocks(const StructuralConfig& cfg) {
  const int de = cfg.shocks_per_period();
  const int n = cfg.n;
  shocks_.resize(static_cast<std::size_t>(sims_) + 1);
  for (int m = 0; m <= sims_; ++m) {
    Eigen::MatrixXd& panel = shocks_[static_cast<std::size_t>(m)];
    panel.resize(n, static_cast<Eigen::Index>(periods_) * de);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < periods_; ++t) {
        for (int pair = 0; 2 * pair < de; ++pair) {
          const auto [z0, z1] = rng::normal_pair(
              seed_, rng::Stream::shock, static_cast<std::uint32_t>(m),
              static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t),
              static_cast<std::uint32_t>(pair));
          panel(i, t * de + 2 * pair) = z0;
          if (2 * pair + 1 < de) panel(i, t * de + 2 * pair + 1) = z1;
        }
      }
    }
  }
}

const Eigen::MatrixXd& ShockSet::shocks(int m) const {
  check_panel_index(*this, m);
  return shocks_[static_cast<std::size_t>(m)];
}

std::uint64_t ShockSet::fingerprint(int m) const {
  const Eigen::MatrixXd& panel = shocks(m);
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(panel.data());
  const std::size_t len = static_cast<std::size_t>(panel.size()) * sizeof(double);
  for (std::size_t k = 0; k < len; ++k) {
    h ^= bytes[k];
    h *= 0x100000001b3ull;
  }
  return h;
}

LatentPanel simulate_latent(const StructuralConfig& cfg,
                            const ShockSet& shocks, int m) {
  check_dimensions(cfg, shocks);
  const Eigen::MatrixXd& x = shocks.covariates();
  const Eigen::MatrixXd& eta = shocks.shocks(m);
  const Eigen::VectorXd& beta = cfg.beta;
  const Eigen::Index n = cfg.n;

  LatentPanel out;
  switch (cfg.model) {
    case ModelId::M1:
    case ModelId::M2:
    case ModelId::M3: {
      const double slope = beta[0];
      const double rho = beta[1];
      out.utilities.resize(n, cfg.periods);
      Eigen::ArrayXd err = Eigen::ArrayXd::Zero(n);
      for (int t = 0; t < cfg.periods; ++t) {
        err = rho * err + eta.col(t).array();
        out.utilities.col(t) = (slope * x.col(t).array() + err).matrix();
      }
      break;
    }
    case ModelId::M4: {
      out.utilities.resize(n, 2);
      const auto x1 = x.col(0).array();
      const auto x2 = x.col(1).array();
      const auto x3 = x.col(2).array();
      const auto e1 = eta.col(0).array();
      const auto e2 = eta.col(1).array();
      out.utilities.col(0) =
          (beta[0] + beta[1] * x1 + beta[2] * x2 + e1).matrix();
      out.utilities.col(1) = (beta[3] + beta[4] * x1 + beta[5] * x3 +
                              beta[6] * e1 + beta[7] * e2)
                                 .matrix();
      break;
    }
    case ModelId::M5: {
      const auto x1 = x.col(0).array();
      const auto x2 = x.col(1).array();
      const auto e1 = eta.col(0).array();
      const auto e2 = eta.col(1).array();
      out.wage = (beta[0] + beta[1] * x1 + beta[5] * e1 + beta[6] * e2).matrix();
      out.utilities.resize(n, 1);
      out.utilities.col(0) =
          (beta[2] + beta[3] * x2 + beta[4] * out.wage.array() + e2).matrix();
      break;
    }
  }
  return out;
}

DynMode parse_dyn_mode(const std::string& name) {
  if (name == "product") return DynMode::product;
  if (name == "nested") return DynMode::nested;
  throw ConfigError("unknown dynamic smoothing mode '" + name + "'");
}

std::string to_string(DynMode mode) {
  return mode == DynMode::product ? "product" : "nested";
}

SmoothedPanel smooth_choices(const StructuralConfig& cfg,
                             const ShockSet& shocks, int m, double lambda,
                             DynMode mode, const smooth::Kernel& kernel) {
  if (!(lambda >= 0.0)) {
    throw ConfigError("smoothing parameter must be non-negative");
  }
  LatentPanel latent = simulate_latent(cfg, shocks, m);
  if (latent.utilities.hasNaN() || latent.wage.hasNaN()) {
    throw NumericalError("latent utilities contain NaN");
  }

  const Eigen::Index n = cfg.n;
  SmoothedPanel out;
  out.lambda = lambda;

  switch (cfg.model) {
    case ModelId::M1: {
      out.y.resize(n, cfg.periods);
      for (int t = 0; t < cfg.periods; ++t) {
        out.y.col(t) =
            smoothed(kernel, latent.utilities.col(t).array(), lambda).matrix();
      }
      out.discrete.assign(static_cast<std::size_t>(cfg.periods), true);
      break;
    }
    case ModelId::M2:
    case ModelId::M3: {
      const double lag_coef = cfg.beta[2];
      out.y.resize(n, cfg.periods);
      Eigen::ArrayXd prev = Eigen::ArrayXd::Zero(n);
      for (int t = 0; t < cfg.periods; ++t) {
        const Eigen::ArrayXd v = latent.utilities.col(t).array();
        if (mode == DynMode::product) {
          const Eigen::ArrayXd k0 = smoothed(kernel, v, lambda);
          const Eigen::ArrayXd k1 = smoothed(kernel, v + lag_coef, lambda);
          prev = k0 * (1.0 - prev) + k1 * prev;
        } else {
          prev = smoothed(kernel, v + lag_coef * prev, lambda);
        }
        out.y.col(t) = prev.matrix();
      }
      out.discrete.assign(static_cast<std::size_t>(cfg.periods), true);
      break;
    }
    case ModelId::M4: {
      out.y = smooth::smooth_multinomial(kernel, latent.utilities, lambda);
      out.discrete.assign(2, true);
      break;
    }
    case ModelId::M5: {
      out.y.resize(n, 2);
      const Eigen::ArrayXd work =
          smoothed(kernel, latent.utilities.col(0).array(), lambda);
      out.y.col(0) = work.matrix();
      out.y.col(1) = (latent.wage.array() * work).matrix();
      out.discrete = {true, false};
      break;
    }
  }
  return out;
}

int ObservedData::observed_choice_periods() const noexcept {
  if (model == ModelId::M4 || model == ModelId::M5) return 1;
  return static_cast<int>(outcomes.cols()) - unobserved;
}

ObservedData generate_observed(const StructuralConfig& cfg,
                               const ShockSet& shocks) {
  SmoothedPanel hard = smooth_choices(cfg, shocks, 0, 0.0);
  ObservedData data;
  data.model = cfg.model;
  data.unobserved = cfg.unobserved;
  data.covariates = shocks.covariates();
  data.outcomes = std::move(hard.y);

  constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
  if (cfg.model == ModelId::M3) {
    data.outcomes.leftCols(cfg.unobserved).setConstant(kMissing);
  }
  if (cfg.model == ModelId::M5) {
    const LatentPanel latent = simulate_latent(cfg, shocks, 0);
    data.wage.resize(cfg.n);
    for (Eigen::Index i = 0; i < cfg.n; ++i) {
      data.wage[i] = data.outcomes(i, 0) > 0.5 ? latent.wage[i] : kMissing;
    }
  }
  return data;
}

}  // namespace gii::sim
