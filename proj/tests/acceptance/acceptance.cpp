// Runs every acceptance criterion and prints one PASS/FAIL line each.
//
//   gii_acceptance [--only 1,7,9] [--threads N] [--out-dir DIR]
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "gii/auxiliary.hpp"
#include "gii/criterion.hpp"
#include "gii/error.hpp"
#include "gii/harness.hpp"
#include "gii/optimize.hpp"
#include "gii/smoothing.hpp"
#include "support/oracle.hpp"

namespace fs = std::filesystem;
namespace harness = gii::harness;
using gii::sim::ModelId;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "!") + what);
  }
};

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

struct Options {
  int threads = 1;
  std::string out_dir;
};

const harness::Aggregate& stat(const harness::MCResult& r, const std::string& name) {
  for (const auto& a : r.aggregates) {
    if (a.parameter == name) return a;
  }
  throw gii::ConfigError("no aggregate for parameter " + name);
}

void mean_band(Outcome& o, const harness::MCResult& r, const std::string& p, double target,
               double tol) {
  const double m = stat(r, p).mean;
  o.check(std::abs(m - target) <= tol,
          "mean(" + p + ")=" + fmt("%.4f in %.3f+-%.3f", m, target, tol));
}

void sd_band(Outcome& o, const harness::MCResult& r, const std::string& p, double target,
             double rel) {
  const double s = stat(r, p).sd;
  o.check(std::abs(s - target) <= rel * target,
          "sd(" + p + ")=" + fmt("%.4f in %.4f+-%.0f%%", s, target, 100 * rel));
}

void convergence(Outcome& o, const harness::MCResult& r) {
  const double rate = r.convergence_rate();
  o.check(rate >= 0.98, "converged " + std::to_string(r.converged) + "/" +
                            std::to_string(r.rows.size()));
}

// Monte Carlo runs are cached so criterion 6 can reuse criterion 1.
class Experiments {
 public:
  explicit Experiments(Options opts) : opts_(std::move(opts)) {}

  const harness::MCResult& get(const std::string& config_name) {
    auto it = cache_.find(config_name);
    if (it != cache_.end()) return it->second;
    const auto cfg =
        harness::load_experiment((fs::path(GII_CONFIG_DIR) / (config_name + ".json")).string());
    std::fprintf(stderr, "running %s: %d replications\n", config_name.c_str(), cfg.replications);
    auto result = harness::run_mc(cfg, cfg.replications, opts_.threads);
    if (!opts_.out_dir.empty()) {
      fs::create_directories(opts_.out_dir);
      std::ofstream csv(fs::path(opts_.out_dir) / (config_name + ".csv"));
      harness::write_csv(csv, result);
      std::ofstream(fs::path(opts_.out_dir) / (config_name + ".txt"))
          << harness::render_table(result);
    }
    std::fprintf(stderr, "%s", harness::render_table(result).c_str());
    return cache_.emplace(config_name, std::move(result)).first->second;
  }

 private:
  Options opts_;
  std::map<std::string, harness::MCResult> cache_;
};

Outcome criterion1(Experiments& ex) {
  Outcome o;
  const auto& r = ex.get("m1_r04");
  convergence(o, r);
  mean_band(o, r, "b", 0.991, 0.010);
  mean_band(o, r, "r", 0.395, 0.010);
  sd_band(o, r, "b", 0.0417, 0.20);
  sd_band(o, r, "r", 0.0432, 0.20);
  o.notes.push_back(fmt("%.2f s/rep", r.mean_seconds));
  return o;
}

Outcome criterion2(Experiments& ex) {
  Outcome o;
  const auto& r = ex.get("m1_r085");
  convergence(o, r);
  mean_band(o, r, "r", 0.846, 0.012);
  sd_band(o, r, "r", 0.0357, 0.20);
  return o;
}

Outcome criterion3(Experiments& ex) {
  Outcome o;
  const auto& r = ex.get("m2_r04");
  convergence(o, r);
  mean_band(o, r, "b1", 0.993, 0.012);
  mean_band(o, r, "r", 0.396, 0.012);
  mean_band(o, r, "b2", 0.197, 0.012);
  sd_band(o, r, "b1", 0.0289, 0.20);
  sd_band(o, r, "r", 0.0343, 0.20);
  sd_band(o, r, "b2", 0.0431, 0.20);
  return o;
}

Outcome criterion4(Experiments& ex) {
  Outcome o;
  const auto& r = ex.get("m3_r04");
  convergence(o, r);
  mean_band(o, r, "b1", 0.990, 0.015);
  mean_band(o, r, "r", 0.396, 0.015);
  mean_band(o, r, "b2", 0.196, 0.015);
  return o;
}

Outcome criterion5(Experiments& ex) {
  Outcome o;
  const auto& r = ex.get("m4_c0");
  convergence(o, r);
  const std::vector<std::pair<std::string, double>> targets = {
      {"b10", 0.002}, {"b11", 0.994}, {"b12", 0.997}, {"b20", -0.004},
      {"b21", 0.999}, {"b22", 1.000}, {"c1", 0.005},  {"c2", 1.001}};
  for (const auto& [p, t] : targets) mean_band(o, r, p, t, 0.02);
  sd_band(o, r, "c2", 0.1509, 0.25);
  return o;
}

Outcome criterion6(Experiments& ex) {
  Outcome o;
  const auto& r = ex.get("m1_r04");
  for (const auto& a : r.aggregates) {
    o.check(a.se_ratio >= 0.90 && a.se_ratio <= 1.10,
            "SE/sd(" + a.parameter + ")=" + fmt("%.3f", a.se_ratio));
  }
  return o;
}

Outcome criterion7() {
  Outcome o;
  gii::sim::StructuralConfig s;
  s.model = ModelId::M1;
  s.beta = Eigen::Vector2d(1.0, 0.4);
  s.n = 200;
  s.periods = 5;
  auto shocks = std::make_shared<const gii::sim::ShockSet>(s, 5, 71);
  const auto data = gii::sim::generate_observed(s, *shocks);
  auto make = [&](double lambda) {
    gii::crit::CriterionConfig cfg;
    cfg.kind = gii::crit::Kind::lr;
    cfg.lambda = lambda;
    cfg.sims = 5;
    return gii::crit::Criterion(s, shocks, gii::aux::make_spec(s.model, 3, s.periods),
                                data.outcomes, cfg, gii::crit::Bounds::defaults(s.model));
  };
  auto hard = make(0.0);
  auto smooth = make(0.03);
  int hard_plateaus = 0, smooth_plateaus = 0, infinite_gradients = 0;
  double prev_hard = 0, prev_smooth = 0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::Vector2d beta(0.95 + 0.1 * k / 99.0, 0.4);
    const double h = hard.value(beta);
    const double v = smooth.value(beta);
    if (!smooth.gradient(beta).allFinite()) ++infinite_gradients;
    if (k > 0) {
      hard_plateaus += h == prev_hard;
      smooth_plateaus += v == prev_smooth;
    }
    prev_hard = h;
    prev_smooth = v;
  }
  o.check(hard_plateaus >= 1, "lambda=0 plateaus " + std::to_string(hard_plateaus));
  o.check(smooth_plateaus == 0, "lambda=0.03 plateaus " + std::to_string(smooth_plateaus));
  o.check(infinite_gradients == 0,
          "non-finite gradients " + std::to_string(infinite_gradients));
  return o;
}

Outcome criterion8() {
  Outcome o;
  double worst_sum = 0, worst_moment = 0, worst_poly = 0;
  std::mt19937_64 gen(8);
  for (int k = 0; k <= 4; ++k) {
    for (double delta : {0.3, 0.5, 0.7}) {
      const auto plan = gii::smooth::jackknife_weights(k, delta);
      const double sum = std::accumulate(plan.weights.begin(), plan.weights.end(), 0.0);
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      for (int j = 1; j <= k; ++j) {
        double moment = 0;
        for (int r = 0; r <= k; ++r) {
          moment += plan.weights[static_cast<std::size_t>(r)] * std::pow(delta, r * j);
        }
        worst_moment = std::max(worst_moment, std::abs(moment));
      }
      // theta(lambda) polynomial of degree k in lambda: the combination
      // recovers theta(0) exactly.
      const Eigen::VectorXd theta0 = oracle::random_normal(gen, 4, 1);
      const Eigen::MatrixXd coef = oracle::random_normal(gen, 4, std::max(k, 1));
      std::vector<Eigen::VectorXd> values;
      for (double l : plan.grid(0.03)) {
        Eigen::VectorXd v = theta0;
        for (int j = 1; j <= k; ++j) v += coef.col(j - 1) * std::pow(l, j);
        values.push_back(v);
      }
      const Eigen::VectorXd got = gii::smooth::jackknife_combine(values, plan);
      worst_poly = std::max(worst_poly, (got - theta0).cwiseAbs().maxCoeff());
    }
  }
  o.check(worst_sum <= 1e-10, fmt("weight-sum err %.1e", worst_sum));
  o.check(worst_moment <= 1e-10, fmt("annihilation err %.1e", worst_moment));
  o.check(worst_poly <= 1e-10, fmt("extrapolation err %.1e", worst_poly));
  return o;
}

double quad_model(const Eigen::Vector2d& g, const Eigen::Matrix2d& h, const Eigen::Vector2d& s) {
  return g.dot(s) + 0.5 * s.dot(h * s);
}

double grid_minimum(const Eigen::Vector2d& g, const Eigen::Matrix2d& h, double radius) {
  double best = 0.0;
  const int rings = 400, spokes = 1440;
  for (int k = 1; k <= rings; ++k) {
    const double rho = radius * k / rings;
    for (int j = 0; j < spokes; ++j) {
      const double phi = 2 * M_PI * j / spokes;
      best = std::min(best, quad_model(g, h, Eigen::Vector2d(rho * std::cos(phi),
                                                             rho * std::sin(phi))));
    }
  }
  return best;
}

Outcome criterion9() {
  Outcome o;
  namespace opt = gii::opt;
  std::mt19937_64 gen(9);

  {  // Gauss-Newton on a linear least-squares problem.
    const Eigen::MatrixXd a = oracle::random_normal(gen, 6, 3);
    const Eigen::VectorXd y = oracle::random_normal(gen, 6, 1);
    const Eigen::MatrixXd l = oracle::random_normal(gen, 6, 6);
    const Eigen::MatrixXd w = l * l.transpose() + Eigen::MatrixXd::Identity(6, 6);
    opt::Objective obj;
    obj.residual = [&](const Eigen::VectorXd& b) { return Eigen::VectorXd(a * b - y); };
    obj.jacobian = [&](const Eigen::VectorXd&) { return a; };
    obj.value = [&](const Eigen::VectorXd& b) {
      const Eigen::VectorXd r = a * b - y;
      return r.dot(w * r);
    };
    obj.gradient = [&](const Eigen::VectorXd& b) {
      return Eigen::VectorXd(2.0 * a.transpose() * w * (a * b - y));
    };
    obj.weight = w;
    opt::OptimizerConfig cfg;
    cfg.routine = opt::Routine::gauss_newton;
    cfg.grad_tol = 1e-10;
    const auto r = opt::minimize(obj, Eigen::Vector3d(5, -3, 2), cfg);
    const Eigen::VectorXd exact = (a.transpose() * w * a).ldlt().solve(a.transpose() * w * y);
    const double err = (r.beta - exact).cwiseAbs().maxCoeff();
    o.check(r.iterations == 1 && err <= 1e-10,
            "GN iterations " + std::to_string(r.iterations) + fmt(" err %.1e", err));
  }

  {  // BFGS secant condition, symmetry and definiteness.
    int bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::MatrixXd l = oracle::random_normal(gen, 4, 4);
      Eigen::MatrixXd delta = l * l.transpose() + 0.1 * Eigen::MatrixXd::Identity(4, 4);
      const Eigen::VectorXd x = oracle::random_normal(gen, 4, 1);
      Eigen::VectorXd d = oracle::random_normal(gen, 4, 1);
      if (d.dot(x) <= 0) d = -d;
      const bool updated = opt::bfgs_update(delta, x, d);
      const bool ok = updated &&
                      (delta * x - d).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, d.norm()) &&
                      (delta - delta.transpose()).cwiseAbs().maxCoeff() <= 1e-12 &&
                      Eigen::LLT<Eigen::MatrixXd>(delta).info() == Eigen::Success;
      bad += !ok;
    }
    o.check(bad == 0, "BFGS invariant failures " + std::to_string(bad) + "/100");
  }

  {  // Trust-region subproblem against a polar grid, plus the hard case.
    double worst = 0;
    for (int trial = 0; trial < 40; ++trial) {
      const Eigen::Matrix2d l = oracle::random_normal(gen, 2, 2);
      const Eigen::Matrix2d h = 0.5 * (l + l.transpose());
      const Eigen::Vector2d g = oracle::random_normal(gen, 2, 1);
      const double radius = 0.2 + trial * 0.05;
      const auto step = opt::tr_subproblem(g, h, radius);
      double gap = quad_model(g, h, step.step) - grid_minimum(g, h, radius);
      if (step.step.norm() > radius * (1 + 1e-10)) gap = INFINITY;
      worst = std::max(worst, gap);
    }
    Eigen::Matrix2d h;
    h << -1, 0, 0, 2;
    const Eigen::Vector2d g(0, 1);
    const auto hard = opt::tr_subproblem(g, h, 1.0);
    const double hard_gap = quad_model(g, h, hard.step) - grid_minimum(g, h, 1.0);
    o.check(worst <= 1e-3, fmt("TR grid gap %.1e", worst));
    o.check(hard.hard_case && hard_gap <= 1e-3, fmt("TR hard-case gap %.1e", hard_gap));
  }

  {  // The three routines agree on an M1 Wald fixture with the efficient weight.
    gii::sim::StructuralConfig st;
    st.model = ModelId::M1;
    st.beta = Eigen::Vector2d(1.0, 0.4);
    st.n = 1000;
    st.periods = 5;
    auto shocks = std::make_shared<const gii::sim::ShockSet>(st, 10, 99);
    const auto data = gii::sim::generate_observed(st, *shocks);
    const auto spec = gii::aux::make_spec(st.model, 3, st.periods);
    gii::crit::CriterionConfig cc;
    cc.kind = gii::crit::Kind::wald;
    cc.lambda = 0.03;
    cc.sims = 10;
    gii::crit::Criterion c(st, shocks, spec, data.outcomes, cc,
                           gii::crit::Bounds::defaults(st.model));
    cc.weight = -gii::aux::hessian(spec, c.data_fit().theta, c.data_fit().stats);
    c.reconfigure(cc);

    opt::Objective obj;
    obj.value = [&c](const Eigen::VectorXd& b) { return c.value(b); };
    obj.gradient = [&c](const Eigen::VectorXd& b) { return c.gradient(b); };
    obj.hessian = [&c](const Eigen::VectorXd& b) { return c.hessian(b); };
    obj.residual = [&c](const Eigen::VectorXd& b) { return c.residual(b); };
    obj.jacobian = [&c](const Eigen::VectorXd& b) { return c.binding_jacobian(b); };
    obj.weight = cc.weight;

    std::vector<Eigen::VectorXd> betas;
    std::string reasons;
    for (auto routine : {opt::Routine::gauss_newton, opt::Routine::bfgs,
                         opt::Routine::trust_region}) {
      opt::OptimizerConfig oc;
      oc.routine = routine;
      oc.grad_tol = 1e-5;
      const auto r = opt::minimize(obj, st.beta, oc);
      reasons += (reasons.empty() ? "" : ",") + opt::to_string(r.reason);
      if (r.reason != opt::Termination::near_root &&
          r.reason != opt::Termination::near_root_second_order) {
        o.check(false, opt::to_string(routine) + " stopped: " + opt::to_string(r.reason));
        return o;
      }
      betas.push_back(r.beta);
    }
    double spread = 0;
    for (const auto& b : betas) spread = std::max(spread, (b - betas[0]).cwiseAbs().maxCoeff());
    o.check(spread <= 1e-4, fmt("routine spread %.1e", spread) + " (" + reasons + ")");
  }
  return o;
}

int covariate_cols(ModelId m, int periods) {
  if (m == ModelId::M4) return 3;
  if (m == ModelId::M5) return 2;
  return periods;
}

Outcome criterion10() {
  Outcome o;
  std::mt19937_64 gen(10);
  double worst = 0;
  for (int instance = 0; instance < 20; ++instance) {
    const int n = std::uniform_int_distribution<int>(30, 50)(gen);
    ModelId model;
    int variant = 1, periods = 1, s = 0;
    switch (instance % 5) {
      case 0:
      case 1:
        model = instance % 2 ? ModelId::M2 : ModelId::M1;
        variant = 1 + instance % 4;
        periods = std::uniform_int_distribution<int>(5, 7)(gen);
        break;
      case 2:
        model = ModelId::M3;
        variant = 1 + instance % 4;
        s = std::uniform_int_distribution<int>(1, 3)(gen);
        periods = s + std::uniform_int_distribution<int>(5, 6)(gen);
        break;
      case 3:
        model = ModelId::M4;
        variant = 1 + instance % 3;
        break;
      default:
        model = ModelId::M5;
    }
    const auto spec = gii::aux::make_spec(model, variant, periods, s);
    const Eigen::MatrixXd x = oracle::random_normal(gen, n, covariate_cols(model, periods));
    const Eigen::MatrixXd y = oracle::random_panel(gen, model, n, periods, s);
    const gii::aux::FeatureCache cache(spec, x);
    const auto fit = gii::aux::fit(spec, gii::aux::accumulate_stats(spec, y, cache));
    std::vector<oracle::StackedBlock> blocks;
    if (model == ModelId::M4) {
      blocks.resize(1);
      oracle::append(blocks[0], oracle::trinomial_design(variant, x), y);
    } else if (model == ModelId::M5) {
      blocks = oracle::selection_blocks(y, x);
    } else {
      blocks = oracle::dynamic_blocks(variant, s, y, x);
    }
    const auto params = gii::aux::unpack(spec, fit.theta);
    if (params.size() != blocks.size()) {
      o.check(false, "block count mismatch in instance " + std::to_string(instance));
      return o;
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto ref = oracle::ols(blocks[b]);
      const auto rel = [](const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
        return (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
      };
      worst = std::max({worst, rel(params[b].coef, ref.coef),
                        rel(params[b].covariance(), ref.sigma)});
    }
  }
  o.check(worst <= 1e-10, fmt("max relative error %.1e over 20 instances", worst));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  Options opts;
  app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',');
  app.add_option("--threads", opts.threads, "Replication workers")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", opts.out_dir, "Directory for per-run CSV and tables");
  CLI11_PARSE(app, argc, argv);

  Experiments ex(opts);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"M1 r=0.4 means and sds", [&] { return criterion1(ex); }},
      {"M1 r=0.85 mean and sd", [&] { return criterion2(ex); }},
      {"M2 means and sds", [&] { return criterion3(ex); }},
      {"M3 means", [&] { return criterion4(ex); }},
      {"M4 means and sd(c2)", [&] { return criterion5(ex); }},
      {"SE calibration", [&] { return criterion6(ex); }},
      {"smoothing removes plateaus", criterion7},
      {"jackknife properties", criterion8},
      {"optimizer suite", criterion9},
      {"sufficient statistics vs raw OLS", criterion10},
  };
  const std::set<int> selected(only.begin(), only.end());

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.check(false, std::string("error: ") + e.what());
    }
    std::ostringstream notes;
    for (std::size_t k = 0; k < out.notes.size(); ++k) {
      notes << (k ? "; " : "") << out.notes[k];
    }
    std::printf("%s criterion %d (%s): %s\n", out.pass ? "PASS" : "FAIL", id,
                criteria[i].first.c_str(), notes.str().c_str());
    std::fflush(stdout);
    failures += !out.pass;
  }
  return failures == 0 ? 0 : 1;
}
