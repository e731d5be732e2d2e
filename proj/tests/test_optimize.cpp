#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gii/error.hpp"
#include "gii/optimize.hpp"
#include "support/oracle.hpp"

namespace opt = gii::opt;

namespace {

opt::Objective rosenbrock() {
  opt::Objective o;
  o.value = [](const Eigen::VectorXd& b) {
    return 100 * std::pow(b[1] - b[0] * b[0], 2) + std::pow(1 - b[0], 2);
  };
  o.gradient = [](const Eigen::VectorXd& b) {
    Eigen::VectorXd g(2);
    g << -400 * b[0] * (b[1] - b[0] * b[0]) - 2 * (1 - b[0]), 200 * (b[1] - b[0] * b[0]);
    return g;
  };
  o.hessian = [](const Eigen::VectorXd& b) {
    Eigen::MatrixXd h(2, 2);
    h << 1200 * b[0] * b[0] - 400 * b[1] + 2, -400 * b[0], -400 * b[0], 200;
    return h;
  };
  return o;
}

// residual(b) = A b - y with A 6 x 3.
struct LinearLeastSquares {
  Eigen::MatrixXd a;
  Eigen::VectorXd y;
  Eigen::MatrixXd w;

  LinearLeastSquares() {
    std::mt19937_64 gen(3);
    a = oracle::random_normal(gen, 6, 3);
    y = oracle::random_normal(gen, 6, 1);
    const Eigen::MatrixXd l = oracle::random_normal(gen, 6, 6);
    w = l * l.transpose() + Eigen::MatrixXd::Identity(6, 6);
  }

  opt::Objective objective() const {
    opt::Objective o;
    o.residual = [this](const Eigen::VectorXd& b) { return Eigen::VectorXd(a * b - y); };
    o.jacobian = [this](const Eigen::VectorXd&) { return a; };
    o.value = [this](const Eigen::VectorXd& b) {
      const Eigen::VectorXd r = a * b - y;
      return r.dot(w * r);
    };
    o.gradient = [this](const Eigen::VectorXd& b) {
      return Eigen::VectorXd(2.0 * a.transpose() * w * (a * b - y));
    };
    o.hessian = [this](const Eigen::VectorXd&) {
      return Eigen::MatrixXd(2.0 * a.transpose() * w * a);
    };
    o.weight = w;
    return o;
  }

  Eigen::VectorXd solution() const {
    return (a.transpose() * w * a).ldlt().solve(a.transpose() * w * y);
  }
};

double model_value(const Eigen::Vector2d& g, const Eigen::Matrix2d& h, const Eigen::Vector2d& s) {
  return g.dot(s) + 0.5 * s.dot(h * s);
}

// Minimum of the quadratic model over a polar grid covering the disk.
double grid_minimum(const Eigen::Vector2d& g, const Eigen::Matrix2d& h, double radius) {
  double best = 0.0;
  const int rings = 400, spokes = 1440;
  for (int k = 1; k <= rings; ++k) {
    const double rho = radius * k / rings;
    for (int j = 0; j < spokes; ++j) {
      const double phi = 2 * M_PI * j / spokes;
      best = std::min(best, model_value(g, h, Eigen::Vector2d(rho * std::cos(phi),
                                                              rho * std::sin(phi))));
    }
  }
  return best;
}

}  // namespace

TEST(Routine, Names) {
  EXPECT_EQ(opt::parse_routine("gn"), opt::Routine::gauss_newton);
  EXPECT_EQ(opt::parse_routine("bfgs"), opt::Routine::bfgs);
  EXPECT_EQ(opt::parse_routine("qn"), opt::Routine::bfgs);
  EXPECT_EQ(opt::parse_routine("tr"), opt::Routine::trust_region);
  EXPECT_THROW(opt::parse_routine("nelder-mead"), gii::ConfigError);
  EXPECT_EQ(opt::to_string(opt::Termination::near_root_second_order), "near_root_second_order");
}

TEST(LineSearch, StrongWolfeOnQuartic) {
  // phi(a) = (a - 2)^4 - 3a from a = 0.
  opt::LineFunction phi{[](double a) { return std::pow(a - 2, 4) - 3 * a; },
                        [](double a) { return 4 * std::pow(a - 2, 3) - 3; }};
  const double c1 = 1e-4, c2 = 0.9;
  for (double a0 : {0.01, 1.0, 10.0}) {
    const auto r = opt::wolfe_line_search(phi, phi.value(0), phi.derivative(0), a0, c1, c2);
    EXPECT_LE(r.value, phi.value(0) + c1 * r.alpha * phi.derivative(0));
    EXPECT_LE(std::abs(r.derivative), c2 * std::abs(phi.derivative(0)));
    EXPECT_DOUBLE_EQ(r.value, phi.value(r.alpha));
  }
}

TEST(LineSearch, TightCurvatureFindsNearMinimizer) {
  opt::LineFunction phi{[](double a) { return (a - 0.7) * (a - 0.7); },
                        [](double a) { return 2 * (a - 0.7); }};
  const auto r = opt::wolfe_line_search(phi, phi.value(0), phi.derivative(0), 1.0, 1e-4, 0.01);
  EXPECT_NEAR(r.alpha, 0.7, 0.01);
}

TEST(LineSearch, RejectsAscentDirection) {
  opt::LineFunction phi{[](double a) { return a; }, [](double) { return 1.0; }};
  EXPECT_THROW(opt::wolfe_line_search(phi, 0.0, 1.0, 1.0, 1e-4, 0.9), gii::NumericalError);
}

TEST(LineSearch, BacksOffInfiniteValues) {
  // Infinite beyond a = 0.5, minimum at 0.4.
  opt::LineFunction phi{
      [](double a) { return a > 0.5 ? INFINITY : (a - 0.4) * (a - 0.4); },
      [](double a) { return a > 0.5 ? NAN : 2 * (a - 0.4); }};
  const auto r = opt::wolfe_line_search(phi, phi.value(0), phi.derivative(0), 1.0, 1e-4, 0.9);
  EXPECT_LE(r.alpha, 0.5);
  EXPECT_LT(r.value, phi.value(0));
}

TEST(Bfgs, SecantSymmetryAndDefiniteness) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd l = oracle::random_normal(gen, 4, 4);
    Eigen::MatrixXd delta = l * l.transpose() + 0.1 * Eigen::MatrixXd::Identity(4, 4);
    const Eigen::VectorXd x = oracle::random_normal(gen, 4, 1);
    Eigen::VectorXd d = oracle::random_normal(gen, 4, 1);
    if (d.dot(x) <= 0) d = -d;
    ASSERT_TRUE(opt::bfgs_update(delta, x, d));
    EXPECT_LT((delta * x - d).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, d.norm()));
    EXPECT_LT((delta - delta.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(delta).info(), Eigen::Success);
  }
}

TEST(Bfgs, SkipsNonPositiveCurvature) {
  Eigen::MatrixXd delta = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd before = delta;
  EXPECT_FALSE(opt::bfgs_update(delta, Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)));
  EXPECT_EQ(delta, before);
}

TEST(Bfgs, MinimizesRosenbrock) {
  opt::OptimizerConfig cfg;
  cfg.grad_tol = 1e-8;
  const auto r = opt::minimize(rosenbrock(), Eigen::Vector2d(-1.2, 1.0), cfg);
  EXPECT_EQ(r.reason, opt::Termination::near_root);
  EXPECT_NEAR(r.beta[0], 1.0, 1e-6);
  EXPECT_NEAR(r.beta[1], 1.0, 1e-6);
  EXPECT_EQ(r.trace.front().step, "start");
  for (std::size_t k = 1; k < r.trace.size(); ++k) {
    EXPECT_LE(r.trace[k].value, r.trace[k - 1].value);
  }
}

TEST(Bfgs, StopsAtIterationLimit) {
  opt::OptimizerConfig cfg;
  cfg.grad_tol = 1e-12;
  cfg.max_iter = 3;
  const auto r = opt::minimize(rosenbrock(), Eigen::Vector2d(-1.2, 1.0), cfg);
  EXPECT_EQ(r.reason, opt::Termination::max_iter);
  EXPECT_EQ(r.iterations, 3);
}

TEST(Bfgs, SecondOrderCheckRejectsSaddle) {
  // f = x^2 - y^2 starting exactly at the saddle.
  opt::Objective o;
  o.value = [](const Eigen::VectorXd& b) { return b[0] * b[0] - b[1] * b[1]; };
  o.gradient = [](const Eigen::VectorXd& b) { return Eigen::VectorXd(Eigen::Vector2d(2 * b[0], -2 * b[1])); };
  o.hessian = [](const Eigen::VectorXd&) {
    return Eigen::MatrixXd(Eigen::Vector2d(2, -2).asDiagonal());
  };
  opt::OptimizerConfig cfg;
  cfg.check_second_order = true;
  const auto r = opt::minimize(o, Eigen::Vector2d(0, 0), cfg);
  EXPECT_EQ(r.reason, opt::Termination::near_root);
}

TEST(GaussNewton, OneStepOnLinearLeastSquares) {
  const LinearLeastSquares ls;
  opt::OptimizerConfig cfg;
  cfg.routine = opt::Routine::gauss_newton;
  cfg.grad_tol = 1e-10;
  const auto r = opt::minimize(ls.objective(), Eigen::Vector3d(5, -3, 2), cfg);
  EXPECT_EQ(r.reason, opt::Termination::near_root);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_DOUBLE_EQ(r.trace[1].step_length, 1.0);
  EXPECT_LT((r.beta - ls.solution()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GaussNewton, NeedsResiduals) {
  opt::OptimizerConfig cfg;
  cfg.routine = opt::Routine::gauss_newton;
  EXPECT_THROW(opt::minimize(rosenbrock(), Eigen::Vector2d(0, 0), cfg), gii::ConfigError);
}

TEST(TrustRegion, SubproblemMatchesGridSearch) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Matrix2d l = oracle::random_normal(gen, 2, 2);
    Eigen::Matrix2d h = 0.5 * (l + l.transpose());  // often indefinite
    const Eigen::Vector2d g = oracle::random_normal(gen, 2, 1);
    const double radius = 0.2 + trial * 0.05;
    const auto step = opt::tr_subproblem(g, h, radius);
    EXPECT_LE(step.step.norm(), radius * (1 + 1e-10));
    const double got = model_value(g, h, step.step);
    EXPECT_NEAR(step.predicted, -got, 1e-12);
    EXPECT_LE(got - grid_minimum(g, h, radius), 1e-3) << "trial " << trial;
  }
}

TEST(TrustRegion, InteriorNewtonStep) {
  Eigen::Matrix2d h;
  h << 4, 1, 1, 3;
  const Eigen::Vector2d g(1, -2);
  const auto step = opt::tr_subproblem(g, h, 10.0);
  EXPECT_FALSE(step.boundary);
  EXPECT_DOUBLE_EQ(step.mu, 0.0);
  EXPECT_LT((step.step - Eigen::Vector2d(-h.inverse() * g)).norm(), 1e-12);
}

TEST(TrustRegion, HardCase) {
  // Gradient orthogonal to the negative-curvature eigenvector.
  Eigen::Matrix2d h;
  h << -1, 0, 0, 2;
  const Eigen::Vector2d g(0, 1);
  const double radius = 1.0;
  const auto step = opt::tr_subproblem(g, h, radius);
  EXPECT_TRUE(step.hard_case);
  EXPECT_TRUE(step.boundary);
  EXPECT_NEAR(step.mu, 1.0, 1e-10);
  EXPECT_NEAR(step.step.norm(), radius, 1e-10);
  EXPECT_NEAR(step.step[1], -1.0 / 3.0, 1e-10);
  EXPECT_LE(model_value(g, h, step.step) - grid_minimum(g, h, radius), 1e-3);
}

TEST(TrustRegion, RejectsAsymmetricHessian) {
  Eigen::Matrix2d h;
  h << 1, 2, 0, 1;
  EXPECT_THROW(opt::tr_subproblem(Eigen::Vector2d(1, 1), h, 1.0), gii::ConfigError);
}

TEST(TrustRegion, MinimizesRosenbrockWithSecondOrderCertificate) {
  opt::OptimizerConfig cfg;
  cfg.routine = opt::Routine::trust_region;
  cfg.grad_tol = 1e-8;
  const auto r = opt::minimize(rosenbrock(), Eigen::Vector2d(-1.2, 1.0), cfg);
  EXPECT_EQ(r.reason, opt::Termination::near_root_second_order);
  EXPECT_NEAR(r.beta[0], 1.0, 1e-6);
  EXPECT_NEAR(r.beta[1], 1.0, 1e-6);
}

TEST(TrustRegion, EscapesSaddle) {
  // f = x^2 - y^2 + y^4 / 4 has a saddle at 0 and minima at y = +-sqrt(2).
  opt::Objective o;
  o.value = [](const Eigen::VectorXd& b) {
    return b[0] * b[0] - b[1] * b[1] + std::pow(b[1], 4) / 4;
  };
  o.gradient = [](const Eigen::VectorXd& b) {
    return Eigen::VectorXd(Eigen::Vector2d(2 * b[0], -2 * b[1] + std::pow(b[1], 3)));
  };
  o.hessian = [](const Eigen::VectorXd& b) {
    return Eigen::MatrixXd(Eigen::Vector2d(2, -2 + 3 * b[1] * b[1]).asDiagonal());
  };
  opt::OptimizerConfig cfg;
  cfg.routine = opt::Routine::trust_region;
  cfg.grad_tol = 1e-9;
  const auto r = opt::minimize(o, Eigen::Vector2d(0, 0), cfg);
  EXPECT_EQ(r.reason, opt::Termination::near_root_second_order);
  EXPECT_NEAR(std::abs(r.beta[1]), std::sqrt(2.0), 1e-6);
}

TEST(Routines, AgreeOnWeightedLeastSquares) {
  const LinearLeastSquares ls;
  std::vector<Eigen::VectorXd> sols;
  for (auto routine : {opt::Routine::gauss_newton, opt::Routine::bfgs, opt::Routine::trust_region}) {
    opt::OptimizerConfig cfg;
    cfg.routine = routine;
    cfg.grad_tol = 1e-10;
    sols.push_back(opt::minimize(ls.objective(), Eigen::Vector3d(1, 1, 1), cfg).beta);
  }
  EXPECT_LT((sols[0] - sols[1]).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((sols[0] - sols[2]).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Multistart, KeepsLowestValue) {
  // Two wells: f = (x^2 - 1)^2 + 0.3 x, deeper at x near -1.
  opt::Objective o;
  o.value = [](const Eigen::VectorXd& b) { return std::pow(b[0] * b[0] - 1, 2) + 0.3 * b[0]; };
  o.gradient = [](const Eigen::VectorXd& b) {
    return Eigen::VectorXd::Constant(1, 4 * b[0] * (b[0] * b[0] - 1) + 0.3);
  };
  std::vector<Eigen::VectorXd> starts{Eigen::VectorXd::Constant(1, 1.2),
                                      Eigen::VectorXd::Constant(1, -1.2)};
  const auto r = opt::minimize_multistart(o, starts, opt::OptimizerConfig{});
  EXPECT_LT(r.beta[0], 0.0);
}

TEST(Optimizer, ConfigValidation) {
  opt::OptimizerConfig cfg;
  cfg.c1 = 0.95;
  cfg.c2 = 0.9;
  EXPECT_THROW(cfg.validate(), gii::ConfigError);
  cfg = {};
  cfg.max_iter = 0;
  EXPECT_THROW(cfg.validate(), gii::ConfigError);
  cfg = {};
  EXPECT_DOUBLE_EQ(cfg.curvature_constant(), 0.9);
  cfg.routine = opt::Routine::gauss_newton;
  EXPECT_DOUBLE_EQ(cfg.curvature_constant(), 0.1);
}
