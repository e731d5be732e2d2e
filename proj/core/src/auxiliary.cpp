#include "gii/auxiliary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "gii/error.hpp"

namespace gii::aux {
namespace {

constexpr double kMinRcond = 1e-12;
constexpr double kMinVarianceRatio = 1e-12;

// Registers outcome columns and covariate features, handing out indices into
// the moment vector. Outcomes must all be added before the first feature.
class Registry {
 public:
  explicit Registry(AuxiliarySpec& spec) : spec_(spec) {}

  int outcome(int panel_column, std::string label, int times_feature = -1) {
    spec_.outcome_columns.push_back(panel_column);
    spec_.outcome_features.push_back(times_feature);
    spec_.outcome_labels.push_back(std::move(label));
    return spec_.outcome_count() - 1;
  }

  int feature(std::vector<int> columns, std::string label, bool zero = false) {
    std::sort(columns.begin(), columns.end());
    const auto key = std::make_pair(zero, columns);
    if (auto it = seen_.find(key); it != seen_.end()) return it->second;
    spec_.features.push_back({columns, zero, std::move(label)});
    const int index = spec_.outcome_count() + spec_.feature_count() - 1;
    seen_.emplace(key, index);
    return index;
  }

  int constant() { return feature({}, "1"); }
  int zero() { return feature({}, "0", true); }

 private:
  AuxiliarySpec& spec_;
  std::map<std::pair<bool, std::vector<int>>, int> seen_;
};

enum class TermKind { constant, x, x_cubed, y };

struct Term {
  TermKind kind;
  int period = 0;
};

Term one() { return {TermKind::constant, 0}; }
Term x(int p) { return {TermKind::x, p}; }
Term x3(int p) { return {TermKind::x_cubed, p}; }
Term y(int p) { return {TermKind::y, p}; }

// Regressors of period t (absolute, 1-based) for the dynamic binary models,
// where periods 1..s are unobserved (s = 0 for M1 and M2).
std::vector<Term> dynamic_terms(int variant, int s, int t) {
  const int tau = t - s;
  switch (variant) {
    case 1:
      return {one(), x(t), y(t - 1)};
    case 2:
      if (tau == 1) return {one(), x(t), x(t - 1)};
      return {one(), x(t), y(t - 1), x(t - 1)};
    case 3:
    case 4: {
      const bool extra = variant == 4;
      switch (tau) {
        case 1: {
          std::vector<Term> z{one(), x(t), x3(t), x(t - 1), x(t - 2)};
          if (extra) z.push_back(x(t - 3));
          return z;
        }
        case 2: {
          std::vector<Term> z{one(), x(t), y(t - 1), x(t - 1), x(t - 2)};
          if (extra) z.push_back(x(t - 3));
          return z;
        }
        case 3: {
          std::vector<Term> z{one(),    x(t),     y(t - 1), x(t - 1),
                              y(t - 2), x(t - 2)};
          if (extra) z.push_back(x(t - 3));
          return z;
        }
        case 4:
          if (extra) {
            return {one(),    x(t),     y(t - 1), x(t - 1),
                    y(t - 2), x(t - 2), y(t - 3), x(t - 3)};
          }
          [[fallthrough]];
        default:
          if (!extra) {
            return {one(),    x(t),     y(t - 1), x(t - 1),
                    y(t - 2), x(t - 2), y(t - 3)};
          }
          return {one(),    x(t),     y(t - 1), x(t - 1), y(t - 2),
                  x(t - 2), y(t - 3), x(t - 3), y(t - 4)};
      }
    }
    default:
      throw ConfigError("auxiliary variant must be 1-4, got " +
                        std::to_string(variant));
  }
}

void build_dynamic(AuxiliarySpec& spec, int periods, int s) {
  const int q = spec.tie_after;
  if (periods - s < q) {
    throw ConfigError("auxiliary variant " + std::to_string(spec.variant) +
                      " needs at least " + std::to_string(q) +
                      " observed periods, got " + std::to_string(periods - s));
  }
  Registry reg(spec);
  for (int t = s + 1; t <= periods; ++t) {
    reg.outcome(t - 1, "y" + std::to_string(t));
  }

  spec.blocks.resize(static_cast<std::size_t>(q));
  for (int b = 0; b < q; ++b) {
    const int first = s + b + 1;
    spec.blocks[static_cast<std::size_t>(b)].label =
        (b + 1 < q ? "t=" : "t>=") + std::to_string(first);
  }

  for (int t = s + 1; t <= periods; ++t) {
    Instance inst;
    inst.period = t;
    inst.outcomes = {t - s - 1};
    for (const Term& term : dynamic_terms(spec.variant, s, t)) {
      const std::string p = std::to_string(term.period);
      switch (term.kind) {
        case TermKind::constant:
          inst.regressors.push_back(reg.constant());
          break;
        case TermKind::x:
          // Covariates before period 1 do not exist; the menu shrinks.
          if (term.period >= 1) {
            inst.regressors.push_back(reg.feature({term.period - 1}, "x" + p));
          }
          break;
        case TermKind::x_cubed:
          inst.regressors.push_back(reg.feature(
              {term.period - 1, term.period - 1, term.period - 1},
              "x" + p + "^3"));
          break;
        case TermKind::y:
          if (term.period > s) {
            inst.regressors.push_back(term.period - s - 1);
          } else if (term.period == s) {
            inst.regressors.push_back(reg.zero());
          } else {
            throw Error("regressor menu references unobserved y" + p);
          }
          break;
      }
    }
    const int block = std::min(t - s, q) - 1;
    spec.blocks[static_cast<std::size_t>(block)].instances.push_back(
        std::move(inst));
  }
}

// Monomials in x1, x2, x3 of degree <= max_degree, ordered by degree and then
// lexicographically in the column multiset.
void collect_monomials(int max_degree, std::vector<std::vector<int>>& out) {
  out.push_back({});
  std::vector<std::vector<int>> frontier{{}};
  for (int deg = 1; deg <= max_degree; ++deg) {
    std::vector<std::vector<int>> next;
    for (const auto& mono : frontier) {
      const int start = mono.empty() ? 0 : mono.back();
      for (int c = start; c < 3; ++c) {
        auto grown = mono;
        grown.push_back(c);
        next.push_back(std::move(grown));
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
}

std::string monomial_label(const std::vector<int>& cols) {
  if (cols.empty()) return "1";
  std::string label;
  for (std::size_t k = 0; k < cols.size();) {
    std::size_t run = k;
    while (run < cols.size() && cols[run] == cols[k]) ++run;
    if (!label.empty()) label += "*";
    label += "x" + std::to_string(cols[k] + 1);
    if (run - k > 1) label += "^" + std::to_string(run - k);
    k = run;
  }
  return label;
}

void build_trinomial(AuxiliarySpec& spec) {
  std::vector<std::vector<int>> monomials;
  switch (spec.variant) {
    case 1:
      collect_monomials(1, monomials);
      break;
    case 2:
      collect_monomials(2, monomials);
      monomials.push_back({0, 1, 2});
      break;
    case 3:
      collect_monomials(3, monomials);
      break;
    case 4:
      collect_monomials(4, monomials);
      break;
    default:
      throw ConfigError("auxiliary variant must be 1-4, got " +
                        std::to_string(spec.variant));
  }
  Registry reg(spec);
  Instance inst;
  inst.period = 1;
  inst.outcomes = {reg.outcome(0, "y1"), reg.outcome(1, "y2")};
  for (const auto& mono : monomials) {
    inst.regressors.push_back(reg.feature(mono, monomial_label(mono)));
  }
  spec.blocks.push_back({"choice", {std::move(inst)}});
}

void build_selection(AuxiliarySpec& spec) {
  if (spec.variant != 1) {
    throw ConfigError("M5 has a single auxiliary menu (variant 1)");
  }
  Registry reg(spec);
  // Features are registered below in the order 1, x1, x2.
  const int work = reg.outcome(0, "y");
  const int earn = reg.outcome(1, "w*y");
  const int work_x1 = reg.outcome(0, "y*x1", 1);
  const int work_x2 = reg.outcome(0, "y*x2", 2);
  const int c = reg.constant();
  const int x1 = reg.feature({0}, "x1");
  const int x2 = reg.feature({1}, "x2");
  spec.blocks.push_back({"work", {{1, {work}, {c, x1, x2}}}});
  spec.blocks.push_back({"earnings", {{1, {earn}, {work, work_x1, work_x2}}}});
}

// Per-block moment sums over the pooled instances.
struct BlockMoments {
  Eigen::MatrixXd zz;
  Eigen::MatrixXd zy;
  Eigen::MatrixXd yy;
  double instances = 0.0;
};

BlockMoments gather(const Block& block, const Eigen::MatrixXd& m) {
  const int p = block.regressors();
  const int d = block.equations();
  BlockMoments out{Eigen::MatrixXd::Zero(p, p), Eigen::MatrixXd::Zero(p, d),
                   Eigen::MatrixXd::Zero(d, d),
                   static_cast<double>(block.instances.size())};
  for (const Instance& inst : block.instances) {
    for (int a = 0; a < p; ++a) {
      const int ra = inst.regressors[static_cast<std::size_t>(a)];
      for (int b = 0; b < p; ++b) {
        out.zz(a, b) += m(ra, inst.regressors[static_cast<std::size_t>(b)]);
      }
      for (int e = 0; e < d; ++e) {
        out.zy(a, e) += m(ra, inst.outcomes[static_cast<std::size_t>(e)]);
      }
    }
    for (int e = 0; e < d; ++e) {
      for (int f = 0; f < d; ++f) {
        out.yy(e, f) += m(inst.outcomes[static_cast<std::size_t>(e)],
                          inst.outcomes[static_cast<std::size_t>(f)]);
      }
    }
  }
  return out;
}

// Residual cross-product sum at coefficients alpha.
Eigen::MatrixXd residual_moments(const BlockMoments& bm,
                                 const Eigen::MatrixXd& alpha) {
  const Eigen::MatrixXd cross = bm.zy.transpose() * alpha;
  Eigen::MatrixXd r = bm.yy - cross - cross.transpose() +
                      alpha.transpose() * bm.zz * alpha;
  return 0.5 * (r + r.transpose());
}

double log_det_precision(const Eigen::MatrixXd& precision, int block) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("auxiliary precision block " + std::to_string(block) +
                         " is not positive definite");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

void check_stats(const AuxiliarySpec& spec, const SufficientStats& stats) {
  if (stats.moments.rows() != spec.moment_dim() ||
      stats.moments.cols() != spec.moment_dim()) {
    throw ConfigError("sufficient statistics do not match the auxiliary spec");
  }
}

double weight(int a, int b) { return a == b ? 0.5 : 1.0; }

}  // namespace

int AuxiliarySpec::d_theta() const {
  int total = 0;
  for (const Block& b : blocks) total += b.parameter_count();
  return total;
}

std::string AuxiliarySpec::moment_label(int index) const {
  if (index < outcome_count()) {
    return outcome_labels[static_cast<std::size_t>(index)];
  }
  return features[static_cast<std::size_t>(index - outcome_count())].label;
}

std::vector<std::string> AuxiliarySpec::theta_labels() const {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(d_theta()));
  for (const Block& b : blocks) {
    const Instance& first = b.instances.front();
    for (int o : first.outcomes) {
      for (int r : first.regressors) {
        labels.push_back(b.label + ":" + moment_label(o) + "~" +
                         moment_label(r));
      }
    }
    const int d = b.equations();
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) {
        labels.push_back(b.label + ":prec(" + std::to_string(i + 1) + "," +
                         std::to_string(j + 1) + ")");
      }
    }
  }
  return labels;
}

void AuxiliarySpec::validate() const {
  if (blocks.empty()) throw ConfigError("auxiliary spec has no blocks");
  const int dim = moment_dim();
  if (outcome_features.size() != outcome_columns.size()) {
    throw ConfigError("outcome interaction list does not match the outcomes");
  }
  for (int f : outcome_features) {
    if (f >= feature_count()) throw ConfigError("outcome interaction out of range");
  }
  for (const Block& b : blocks) {
    if (b.instances.empty()) {
      throw ConfigError("auxiliary block '" + b.label + "' has no equations");
    }
    for (const Instance& inst : b.instances) {
      if (inst.outcomes.size() != b.instances.front().outcomes.size() ||
          inst.regressors.size() != b.instances.front().regressors.size()) {
        throw ConfigError("pooled periods of block '" + b.label +
                          "' differ in shape");
      }
      for (int idx : inst.outcomes) {
        if (idx < 0 || idx >= dim) throw ConfigError("outcome index out of range");
      }
      for (int idx : inst.regressors) {
        if (idx < 0 || idx >= dim) {
          throw ConfigError("regressor index out of range");
        }
      }
    }
  }
  const int need = sim::parameter_count(model);
  if (d_theta() < need) {
    throw ConfigError("auxiliary model has " + std::to_string(d_theta()) +
                      " parameters, fewer than the " + std::to_string(need) +
                      " structural ones");
  }
}

AuxiliarySpec make_spec(sim::ModelId model, int variant, int periods,
                        int unobserved) {
  AuxiliarySpec spec;
  spec.model = model;
  spec.variant = variant;
  switch (model) {
    case sim::ModelId::M1:
    case sim::ModelId::M2:
    case sim::ModelId::M3: {
      static constexpr int kTieAfter[] = {1, 2, 4, 5};
      if (variant < 1 || variant > 4) {
        throw ConfigError("auxiliary variant must be 1-4, got " +
                          std::to_string(variant));
      }
      if (unobserved < 0 || unobserved >= periods) {
        throw ConfigError("unobserved periods s must satisfy 0 <= s < T");
      }
      if (model != sim::ModelId::M3 && unobserved != 0) {
        throw ConfigError("only M3 has unobserved initial periods");
      }
      spec.tie_after = kTieAfter[variant - 1];
      build_dynamic(spec, periods, unobserved);
      break;
    }
    case sim::ModelId::M4:
      build_trinomial(spec);
      break;
    case sim::ModelId::M5:
      build_selection(spec);
      break;
  }
  spec.validate();
  return spec;
}

FeatureCache::FeatureCache(const AuxiliarySpec& spec,
                           const Eigen::MatrixXd& covariates) {
  const Eigen::Index n = covariates.rows();
  if (n == 0) throw ConfigError("empty covariate panel");
  features_.resize(n, spec.feature_count());
  for (int f = 0; f < spec.feature_count(); ++f) {
    const Monomial& mono = spec.features[static_cast<std::size_t>(f)];
    auto col = features_.col(f).array();
    if (mono.zero) {
      col.setZero();
      continue;
    }
    col.setOnes();
    for (int c : mono.columns) {
      if (c < 0 || c >= covariates.cols()) {
        throw ConfigError("feature '" + mono.label +
                          "' references a missing covariate column");
      }
      col *= covariates.col(c).array();
    }
  }
  if (!features_.allFinite()) {
    throw ConfigError("covariate features contain non-finite values");
  }
  cross_ = features_.transpose() * features_ / static_cast<double>(n);
}

Eigen::MatrixXd extract_outcomes(const AuxiliarySpec& spec,
                                 const Eigen::MatrixXd& panel,
                                 const FeatureCache& cache) {
  if (panel.rows() != cache.n()) {
    throw ConfigError("outcome panel and covariate features differ in n");
  }
  Eigen::MatrixXd out(panel.rows(), spec.outcome_count());
  for (int a = 0; a < spec.outcome_count(); ++a) {
    const int c = spec.outcome_columns[static_cast<std::size_t>(a)];
    if (c >= panel.cols()) {
      throw ConfigError("outcome panel has " + std::to_string(panel.cols()) +
                        " columns; the auxiliary model needs column " +
                        std::to_string(c));
    }
    out.col(a) = panel.col(c);
    const int f = spec.outcome_features[static_cast<std::size_t>(a)];
    if (f >= 0) out.col(a).array() *= cache.features().col(f).array();
  }
  return out;
}

SufficientStats accumulate_stats(const AuxiliarySpec& spec,
                                 const Eigen::MatrixXd& panel,
                                 const FeatureCache& cache) {
  const Eigen::MatrixXd y = extract_outcomes(spec, panel, cache);
  if (!y.allFinite()) {
    throw NumericalError("observed outcomes contain non-finite values");
  }
  const int oy = spec.outcome_count();
  const int nf = spec.feature_count();
  const double inv_n = 1.0 / static_cast<double>(cache.n());

  SufficientStats stats;
  stats.n = cache.n();
  stats.moments.resize(oy + nf, oy + nf);
  stats.moments.topLeftCorner(oy, oy).noalias() = y.transpose() * y * inv_n;
  stats.moments.topRightCorner(oy, nf).noalias() =
      y.transpose() * cache.features() * inv_n;
  stats.moments.bottomLeftCorner(nf, oy) =
      stats.moments.topRightCorner(oy, nf).transpose();
  stats.moments.bottomRightCorner(nf, nf) = cache.cross_moments();
  return stats;
}

std::vector<Design> build_regressors(const AuxiliarySpec& spec,
                                     const Eigen::MatrixXd& panel,
                                     const FeatureCache& cache) {
  const Eigen::MatrixXd y = extract_outcomes(spec, panel, cache);
  const int oy = spec.outcome_count();
  auto column = [&](int idx) -> Eigen::VectorXd {
    return idx < oy ? Eigen::VectorXd(y.col(idx))
                    : Eigen::VectorXd(cache.features().col(idx - oy));
  };

  std::vector<Design> out;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    for (const Instance& inst : spec.blocks[b].instances) {
      Design d;
      d.block = static_cast<int>(b);
      d.period = inst.period;
      d.regressors.resize(y.rows(), static_cast<Eigen::Index>(inst.regressors.size()));
      d.outcomes.resize(y.rows(), static_cast<Eigen::Index>(inst.outcomes.size()));
      for (std::size_t k = 0; k < inst.regressors.size(); ++k) {
        d.regressors.col(static_cast<Eigen::Index>(k)) = column(inst.regressors[k]);
      }
      for (std::size_t k = 0; k < inst.outcomes.size(); ++k) {
        d.outcomes.col(static_cast<Eigen::Index>(k)) = column(inst.outcomes[k]);
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

Eigen::MatrixXd BlockParams::covariance() const {
  return precision.llt().solve(
      Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
}

std::vector<BlockParams> unpack(const AuxiliarySpec& spec,
                                const Eigen::VectorXd& theta) {
  if (theta.size() != spec.d_theta()) {
    throw ConfigError("theta has " + std::to_string(theta.size()) +
                      " entries, expected " + std::to_string(spec.d_theta()));
  }
  std::vector<BlockParams> out;
  out.reserve(spec.blocks.size());
  Eigen::Index pos = 0;
  for (const Block& b : spec.blocks) {
    const int p = b.regressors();
    const int d = b.equations();
    BlockParams bp;
    bp.coef = Eigen::Map<const Eigen::MatrixXd>(theta.data() + pos, p, d);
    pos += static_cast<Eigen::Index>(p) * d;
    bp.precision.resize(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) {
        bp.precision(i, j) = bp.precision(j, i) = theta[pos++];
      }
    }
    out.push_back(std::move(bp));
  }
  return out;
}

Eigen::VectorXd pack(const AuxiliarySpec& spec,
                     const std::vector<BlockParams>& blocks) {
  if (blocks.size() != spec.blocks.size()) {
    throw ConfigError("pack: block count mismatch");
  }
  Eigen::VectorXd theta(spec.d_theta());
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const BlockParams& bp = blocks[b];
    const int d = spec.blocks[b].equations();
    const int p = spec.blocks[b].regressors();
    if (bp.coef.rows() != p || bp.coef.cols() != d ||
        bp.precision.rows() != d || bp.precision.cols() != d) {
      throw ConfigError("pack: block " + std::to_string(b) + " has the wrong shape");
    }
    Eigen::Map<Eigen::MatrixXd>(theta.data() + pos, p, d) = bp.coef;
    pos += static_cast<Eigen::Index>(p) * d;
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) theta[pos++] = bp.precision(i, j);
    }
  }
  return theta;
}

AuxiliaryFit fit(const AuxiliarySpec& spec, const SufficientStats& stats) {
  check_stats(spec, stats);
  AuxiliaryFit out;
  out.stats = stats;
  out.blocks.reserve(spec.blocks.size());
  double total = 0.0;
  constexpr double kLog2Pi = 1.83787706640934548356;

  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const Block& block = spec.blocks[b];
    const BlockMoments bm = gather(block, stats.moments);
    const int block_id = static_cast<int>(b);

    Eigen::LLT<Eigen::MatrixXd> llt(bm.zz);
    if (llt.info() != Eigen::Success || !(llt.rcond() >= kMinRcond)) {
      throw DegenerateDesignError(
          block_id, "regressors of auxiliary block '" + block.label +
                        "' are collinear");
    }
    BlockParams bp;
    bp.coef = llt.solve(bm.zy);
    const Eigen::MatrixXd r = residual_moments(bm, bp.coef);
    const Eigen::MatrixXd sigma = r / bm.instances;

    const double scale = std::max(bm.yy.diagonal().maxCoeff() / bm.instances,
                                  std::numeric_limits<double>::min());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    if (eig.info() != Eigen::Success ||
        !(eig.eigenvalues().minCoeff() > kMinVarianceRatio * scale)) {
      throw DegenerateDesignError(
          block_id, "residual covariance of auxiliary block '" + block.label +
                        "' is singular");
    }
    bp.precision = eig.eigenvectors() *
                   eig.eigenvalues().cwiseInverse().asDiagonal() *
                   eig.eigenvectors().transpose();
    bp.precision = 0.5 * (bp.precision + bp.precision.transpose());

    const int d = block.equations();
    const double log_det_p = -eig.eigenvalues().array().log().sum();
    total += bm.instances * (-0.5 * d * kLog2Pi + 0.5 * log_det_p) -
             0.5 * bm.instances * d;
    out.blocks.push_back(std::move(bp));
  }
  out.theta = pack(spec, out.blocks);
  out.loglik = total;
  return out;
}

double loglik(const AuxiliarySpec& spec, const Eigen::VectorXd& theta,
              const SufficientStats& stats) {
  check_stats(spec, stats);
  const auto params = unpack(spec, theta);
  constexpr double kLog2Pi = 1.83787706640934548356;
  double total = 0.0;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const Block& block = spec.blocks[b];
    const BlockMoments bm = gather(block, stats.moments);
    const BlockParams& bp = params[b];
    const double log_det_p = log_det_precision(bp.precision, static_cast<int>(b));
    const Eigen::MatrixXd r = residual_moments(bm, bp.coef);
    total += bm.instances * (-0.5 * block.equations() * kLog2Pi + 0.5 * log_det_p) -
             0.5 * (bp.precision.cwiseProduct(r)).sum();
  }
  return total;
}

Eigen::VectorXd score(const AuxiliarySpec& spec, const Eigen::VectorXd& theta,
                      const SufficientStats& stats) {
  check_stats(spec, stats);
  const auto params = unpack(spec, theta);
  Eigen::VectorXd out(spec.d_theta());
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const Block& block = spec.blocks[b];
    const BlockMoments bm = gather(block, stats.moments);
    const BlockParams& bp = params[b];
    const int p = block.regressors();
    const int d = block.equations();

    const Eigen::MatrixXd g = bm.zy - bm.zz * bp.coef;
    Eigen::Map<Eigen::MatrixXd>(out.data() + pos, p, d) = g * bp.precision;
    pos += static_cast<Eigen::Index>(p) * d;

    const Eigen::MatrixXd sigma = bp.covariance();
    const Eigen::MatrixXd r = residual_moments(bm, bp.coef);
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) {
        out[pos++] = weight(i, j) * (bm.instances * sigma(i, j) - r(i, j));
      }
    }
  }
  return out;
}

Eigen::MatrixXd individual_scores(const AuxiliarySpec& spec,
                                  const Eigen::VectorXd& theta,
                                  const Eigen::MatrixXd& panel,
                                  const FeatureCache& cache) {
  const auto params = unpack(spec, theta);
  const std::vector<Design> designs = build_regressors(spec, panel, cache);
  const Eigen::Index n = cache.n();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, spec.d_theta());

  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::MatrixXd> sigmas;
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    offsets.push_back(pos);
    pos += spec.blocks[b].parameter_count();
    sigmas.push_back(params[b].covariance());
  }

  for (const Design& des : designs) {
    const auto b = static_cast<std::size_t>(des.block);
    const BlockParams& bp = params[b];
    const Eigen::Index p = des.regressors.cols();
    const Eigen::Index d = des.outcomes.cols();
    const Eigen::MatrixXd resid = des.outcomes - des.regressors * bp.coef;
    const Eigen::MatrixXd weighted = resid * bp.precision;
    Eigen::Index col = offsets[b];
    for (Eigen::Index e = 0; e < d; ++e) {
      out.middleCols(col, p).array() +=
          des.regressors.array().colwise() * weighted.col(e).array();
      col += p;
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = i; j < d; ++j) {
        out.col(col).array() +=
            weight(static_cast<int>(i), static_cast<int>(j)) *
            (sigmas[b](i, j) - resid.col(i).array() * resid.col(j).array());
        ++col;
      }
    }
  }
  return out;
}

Eigen::MatrixXd hessian(const AuxiliarySpec& spec, const Eigen::VectorXd& theta,
                        const SufficientStats& stats) {
  check_stats(spec, stats);
  const auto params = unpack(spec, theta);
  const int dim = spec.d_theta();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const Block& block = spec.blocks[b];
    const BlockMoments bm = gather(block, stats.moments);
    const BlockParams& bp = params[b];
    const int p = block.regressors();
    const int d = block.equations();
    const Eigen::MatrixXd g = bm.zy - bm.zz * bp.coef;
    const Eigen::MatrixXd sigma = bp.covariance();

    // Index of the precision entry (i, j), i <= j, within this block.
    std::vector<std::pair<int, int>> prec;
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) prec.emplace_back(i, j);
    }
    const Eigen::Index coef_end = pos + static_cast<Eigen::Index>(p) * d;

    for (int r = 0; r < d; ++r) {
      for (int s = 0; s < d; ++s) {
        h.block(pos + r * p, pos + s * p, p, p) = -bp.precision(r, s) * bm.zz;
      }
      for (std::size_t k = 0; k < prec.size(); ++k) {
        const auto [a, c] = prec[k];
        Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
        if (r == a) v += g.col(c);
        if (r == c && a != c) v += g.col(a);
        const Eigen::Index col = coef_end + static_cast<Eigen::Index>(k);
        h.block(pos + r * p, col, p, 1) = v;
        h.block(col, pos + r * p, 1, p) = v.transpose();
      }
    }

    for (std::size_t k = 0; k < prec.size(); ++k) {
      const auto [a, c] = prec[k];
      for (std::size_t l = 0; l < prec.size(); ++l) {
        const auto [e, f] = prec[l];
        double dsigma = sigma(a, e) * sigma(f, c);
        if (e != f) dsigma += sigma(a, f) * sigma(e, c);
        h(coef_end + static_cast<Eigen::Index>(k),
          coef_end + static_cast<Eigen::Index>(l)) =
            -weight(a, c) * bm.instances * dsigma;
      }
    }
    pos = coef_end + static_cast<Eigen::Index>(prec.size());
  }
  return h;
}

}  // namespace gii::aux
