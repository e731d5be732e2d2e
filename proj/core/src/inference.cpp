#include "gii/inference.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "gii/error.hpp"

namespace gii::inf {
namespace {

double condition(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[s.size() - 1] == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return s[0] / s[s.size() - 1];
}

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const char* name) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw NumericalError(std::string(name) + " is singular (condition number " +
                         std::to_string(condition(m)) + ")");
  }
  return lu.inverse();
}

// Accumulates u_i = s0_i - (1/M) sum_m s^m_i one simulation at a time.
class ScoreDifference {
 public:
  ScoreDifference(const aux::AuxiliarySpec& spec, const aux::FeatureCache& cache,
                  const Eigen::VectorXd& theta_hat,
                  const Eigen::MatrixXd& data_panel, int sims)
      : spec_(spec),
        cache_(cache),
        sims_(sims),
        u_(aux::individual_scores(spec, theta_hat, data_panel, cache)) {}

  void subtract(const Eigen::VectorXd& theta_m, const Eigen::MatrixXd& panel_m) {
    const Eigen::MatrixXd s = aux::individual_scores(spec_, theta_m, panel_m, cache_);
    if (s.rows() != u_.rows()) {
      throw ConfigError("simulated scores are not aligned with the data");
    }
    u_ -= s / static_cast<double>(sims_);
  }

  Eigen::MatrixXd covariance() const {
    Eigen::MatrixXd v = u_.transpose() * u_ / static_cast<double>(u_.rows());
    return 0.5 * (v + v.transpose());
  }

 private:
  const aux::AuxiliarySpec& spec_;
  const aux::FeatureCache& cache_;
  int sims_;
  Eigen::MatrixXd u_;
};

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

Eigen::MatrixXd estimate_G(crit::Criterion& criterion,
                           const Eigen::VectorXd& beta_hat) {
  if (criterion.d_theta() < criterion.d_beta()) {
    throw ConfigError("order condition fails: d_theta < d_beta");
  }
  Eigen::MatrixXd g = criterion.binding_jacobian(beta_hat);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
  const Eigen::VectorXd& s = svd.singularValues();
  if (!(s[s.size() - 1] > 1e-10 * std::max(s[0], 1e-300))) {
    std::ostringstream msg;
    msg << "binding Jacobian is rank deficient; singular values:";
    for (Eigen::Index i = 0; i < s.size(); ++i) msg << ' ' << s[i];
    throw NumericalError(msg.str());
  }
  return g;
}

Eigen::MatrixXd estimate_H(const aux::AuxiliarySpec& spec,
                           const aux::AuxiliaryFit& data_fit) {
  Eigen::MatrixXd h = aux::hessian(spec, data_fit.theta, data_fit.stats);
  return 0.5 * (h + h.transpose());
}

Eigen::MatrixXd estimate_V(const aux::AuxiliarySpec& spec,
                           const aux::FeatureCache& cache,
                           const Eigen::VectorXd& theta_hat,
                           const Eigen::MatrixXd& data_panel,
                           std::span<const Eigen::VectorXd> sim_thetas,
                           std::span<const Eigen::MatrixXd> sim_panels) {
  if (sim_thetas.size() != sim_panels.size() || sim_thetas.empty()) {
    throw ConfigError("need one fit per simulated panel and at least one panel");
  }
  ScoreDifference acc(spec, cache, theta_hat, data_panel,
                      static_cast<int>(sim_thetas.size()));
  for (std::size_t m = 0; m < sim_thetas.size(); ++m) {
    acc.subtract(sim_thetas[m], sim_panels[m]);
  }
  return acc.covariance();
}

Sandwich sandwich(const VarianceParts& parts, int n) {
  const Eigen::Index dt = parts.G.rows();
  const Eigen::Index db = parts.G.cols();
  if (parts.H.rows() != dt || parts.H.cols() != dt || parts.V.rows() != dt ||
      parts.V.cols() != dt || parts.U.rows() != dt || parts.U.cols() != dt) {
    throw ConfigError("variance parts have inconsistent dimensions");
  }
  if (n < 1) throw ConfigError("sample size must be positive");
  const Eigen::MatrixXd h_inv = checked_inverse(parts.H, "auxiliary Hessian");
  const Eigen::MatrixXd ug = parts.U * parts.G;
  const Eigen::MatrixXd a_inv =
      checked_inverse(parts.G.transpose() * ug, "G'UG");
  const Eigen::MatrixXd b = h_inv * ug * a_inv;  // d_theta x d_beta
  Sandwich out;
  out.omega = b.transpose() * parts.V * b;
  out.omega = 0.5 * (out.omega + out.omega.transpose());
  out.se.resize(db);
  for (Eigen::Index j = 0; j < db; ++j) {
    out.se[j] = std::sqrt(std::max(0.0, out.omega(j, j)) / n);
  }
  return out;
}

VarianceReport assess(crit::Criterion& criterion,
                      const Eigen::VectorXd& beta_hat) {
  VarianceReport rep;
  rep.beta_hat = beta_hat;
  const aux::AuxiliarySpec& spec = criterion.spec();
  const aux::AuxiliaryFit& data = criterion.data_fit();
  const crit::CriterionConfig& cfg = criterion.config();

  rep.parts.G = estimate_G(criterion, beta_hat);
  rep.parts.H = estimate_H(spec, data);

  // Simulated fits at the first grid point, which binding() lays out first.
  const crit::BindingEval& b = criterion.binding(beta_hat);
  const std::vector<Eigen::VectorXd> thetas(b.thetas.begin(),
                                            b.thetas.begin() + cfg.sims);
  ScoreDifference acc(spec, criterion.cache(), data.theta, criterion.observed(),
                      cfg.sims);
  for (int m = 1; m <= cfg.sims; ++m) {
    acc.subtract(thetas[static_cast<std::size_t>(m - 1)],
                 criterion.simulate(beta_hat, m, cfg.lambda));
  }
  rep.parts.V = acc.covariance();

  switch (cfg.kind) {
    case crit::Kind::wald:
      rep.parts.U = criterion.weight();
      break;
    case crit::Kind::lr:
      rep.parts.U = rep.parts.H;
      break;
    case crit::Kind::lm:
      rep.parts.U = rep.parts.H * criterion.weight() * rep.parts.H;
      break;
  }
  rep.result = sandwich(rep.parts, criterion.shocks().n());
  rep.cond_G = condition(rep.parts.G);
  rep.cond_H = condition(rep.parts.H);
  rep.cond_GUG = condition(rep.parts.G.transpose() * rep.parts.U * rep.parts.G);
  return rep;
}

std::string VarianceReport::to_json() const {
  nlohmann::json j;
  j["beta_hat"] = vector_json(beta_hat);
  j["se"] = vector_json(result.se);
  j["Omega"] = matrix_json(result.omega);
  j["condition"] = {{"G", cond_G}, {"H", cond_H}, {"GUG", cond_GUG}};
  return j.dump(2);
}

}  // namespace gii::inf
