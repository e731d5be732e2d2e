#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "gii/error.hpp"
#include "gii/inference.hpp"
#include "support/oracle.hpp"

namespace inf = gii::inf;

namespace {

Eigen::MatrixXd spd(std::mt19937_64& gen, int d) {
  const Eigen::MatrixXd l = oracle::random_normal(gen, d, d);
  return l * l.transpose() + Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

TEST(Sandwich, ScalarExample) {
  inf::VarianceParts p;
  p.G = Eigen::Vector2d(1, 1);
  p.H = -Eigen::MatrixXd::Identity(2, 2);
  p.V = Eigen::MatrixXd::Identity(2, 2);
  p.U = Eigen::MatrixXd::Identity(2, 2);
  const auto s = inf::sandwich(p, 200);
  EXPECT_NEAR(s.omega(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(s.se[0], std::sqrt(0.5 / 200), 1e-15);
}

TEST(Sandwich, MatchesExplicitFormula) {
  std::mt19937_64 gen(5);
  inf::VarianceParts p;
  p.G = oracle::random_normal(gen, 6, 2);
  p.H = -spd(gen, 6);
  p.V = spd(gen, 6);
  p.U = spd(gen, 6);
  const Eigen::MatrixXd a = (p.G.transpose() * p.U * p.G).inverse();
  const Eigen::MatrixXd hi = p.H.inverse();
  const Eigen::MatrixXd expected =
      a * p.G.transpose() * p.U * hi * p.V * hi * p.U * p.G * a;
  const auto s = inf::sandwich(p, 1000);
  EXPECT_LT((s.omega - expected).cwiseAbs().maxCoeff(), 1e-10 * expected.cwiseAbs().maxCoeff());
  EXPECT_EQ(s.omega, s.omega.transpose());
}

TEST(Sandwich, JustIdentifiedIgnoresWeight) {
  std::mt19937_64 gen(6);
  inf::VarianceParts p;
  p.G = oracle::random_normal(gen, 3, 3);
  p.H = -spd(gen, 3);
  p.V = spd(gen, 3);
  p.U = Eigen::MatrixXd::Identity(3, 3);
  const auto a = inf::sandwich(p, 1);
  p.U = spd(gen, 3);
  const auto b = inf::sandwich(p, 1);
  EXPECT_LT((a.omega - b.omega).cwiseAbs().maxCoeff(), 1e-8 * a.omega.cwiseAbs().maxCoeff());
}

TEST(Sandwich, SingularPiecesAreErrors) {
  inf::VarianceParts p;
  p.G = Eigen::Vector2d(1, 1);
  p.H = Eigen::MatrixXd::Zero(2, 2);
  p.V = Eigen::MatrixXd::Identity(2, 2);
  p.U = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(inf::sandwich(p, 10), gii::NumericalError);
  p.H = -Eigen::MatrixXd::Identity(2, 2);
  p.G = Eigen::Vector2d(0, 0);
  EXPECT_THROW(inf::sandwich(p, 10), gii::NumericalError);
  p.G = Eigen::Vector3d(1, 1, 1);
  EXPECT_THROW(inf::sandwich(p, 10), gii::ConfigError);
}

TEST(ScoreCovariance, IdenticalSimulationsCancel) {
  const auto spec = gii::aux::make_spec(gii::sim::ModelId::M1, 1, 4);
  std::mt19937_64 gen(2);
  const Eigen::MatrixXd x = oracle::random_normal(gen, 40, 4);
  const Eigen::MatrixXd y = oracle::random_panel(gen, gii::sim::ModelId::M1, 40, 4, 0);
  const gii::aux::FeatureCache cache(spec, x);
  const auto fit = gii::aux::fit(spec, gii::aux::accumulate_stats(spec, y, cache));
  const std::vector<Eigen::VectorXd> thetas(3, fit.theta);
  const std::vector<Eigen::MatrixXd> panels(3, y);
  const Eigen::MatrixXd v = inf::estimate_V(spec, cache, fit.theta, y, thetas, panels);
  EXPECT_LT(v.cwiseAbs().maxCoeff(), 1e-20);
}

TEST(ScoreCovariance, OuterProductOfDifferences) {
  const auto spec = gii::aux::make_spec(gii::sim::ModelId::M1, 1, 4);
  std::mt19937_64 gen(3);
  const Eigen::MatrixXd x = oracle::random_normal(gen, 40, 4);
  const Eigen::MatrixXd y0 = oracle::random_panel(gen, gii::sim::ModelId::M1, 40, 4, 0);
  const Eigen::MatrixXd y1 = oracle::random_panel(gen, gii::sim::ModelId::M1, 40, 4, 0);
  const Eigen::MatrixXd y2 = oracle::random_panel(gen, gii::sim::ModelId::M1, 40, 4, 0);
  const gii::aux::FeatureCache cache(spec, x);
  auto fit = [&](const Eigen::MatrixXd& y) {
    return gii::aux::fit(spec, gii::aux::accumulate_stats(spec, y, cache)).theta;
  };
  const Eigen::VectorXd t0 = fit(y0), t1 = fit(y1), t2 = fit(y2);
  const std::vector<Eigen::VectorXd> thetas{t1, t2};
  const std::vector<Eigen::MatrixXd> panels{y1, y2};
  const Eigen::MatrixXd v = inf::estimate_V(spec, cache, t0, y0, thetas, panels);

  const Eigen::MatrixXd u = gii::aux::individual_scores(spec, t0, y0, cache) -
                            0.5 * (gii::aux::individual_scores(spec, t1, y1, cache) +
                                   gii::aux::individual_scores(spec, t2, y2, cache));
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 40; ++i) expected += u.row(i).transpose() * u.row(i) / 40.0;
  EXPECT_LT((v - expected).cwiseAbs().maxCoeff(), 1e-12 * expected.cwiseAbs().maxCoeff());
}

TEST(Assess, ProducesFiniteStandardErrors) {
  gii::sim::StructuralConfig s;
  s.model = gii::sim::ModelId::M1;
  s.beta = Eigen::Vector2d(1.0, 0.4);
  s.n = 500;
  s.periods = 5;
  auto shocks = std::make_shared<const gii::sim::ShockSet>(s, 6, 4);
  const auto data = gii::sim::generate_observed(s, *shocks);
  for (auto kind : {gii::crit::Kind::wald, gii::crit::Kind::lr, gii::crit::Kind::lm}) {
    gii::crit::CriterionConfig cfg;
    cfg.kind = kind;
    cfg.sims = 6;
    gii::crit::Criterion c(s, shocks, gii::aux::make_spec(s.model, 3, 5), data.outcomes, cfg,
                           gii::crit::Bounds::defaults(s.model));
    const auto rep = inf::assess(c, s.beta);
    ASSERT_EQ(rep.result.se.size(), 2);
    EXPECT_TRUE(rep.result.se.allFinite());
    EXPECT_GT(rep.result.se.minCoeff(), 0.0);
    // n = 500 with T = 5 should give standard errors of a few hundredths.
    EXPECT_LT(rep.result.se.maxCoeff(), 0.2);
    if (kind == gii::crit::Kind::lr) EXPECT_EQ(rep.parts.U, rep.parts.H);
    if (kind == gii::crit::Kind::wald) EXPECT_EQ(rep.parts.U, c.weight());
    const auto j = nlohmann::json::parse(rep.to_json());
    EXPECT_EQ(j["se"].size(), 2u);
    EXPECT_TRUE(j.contains("condition"));
  }
}
