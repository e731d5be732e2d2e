#include "gii/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "gii/error.hpp"

namespace gii::opt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_value(const Objective& obj, const Eigen::VectorXd& beta) {
  try {
    const double v = obj.value(beta);
    return std::isfinite(v) ? v : kInf;
  } catch (const Error&) {
    return kInf;
  }
}

// Gradient of residual' W residual when no direct gradient is supplied.
Eigen::VectorXd objective_gradient(const Objective& obj,
                                   const Eigen::VectorXd& beta) {
  if (obj.gradient) return obj.gradient(beta);
  if (!obj.residual || !obj.jacobian) {
    throw ConfigError("objective has neither a gradient nor a residual form");
  }
  const Eigen::VectorXd r = obj.residual(beta);
  const Eigen::MatrixXd j = obj.jacobian(beta);
  if (obj.weight.size() == 0) return 2.0 * j.transpose() * r;
  return 2.0 * j.transpose() * (obj.weight * r);
}

double smallest_eigenvalue(const Eigen::MatrixXd& h, double* norm = nullptr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
  if (norm) *norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  return eig.eigenvalues().minCoeff();
}

bool second_order_ok(const Eigen::MatrixXd& h, double eig_tol) {
  double norm = 0.0;
  const double lmin = smallest_eigenvalue(h, &norm);
  return lmin >= -eig_tol * std::max(1.0, norm);
}

// Remembers the gradient computed at the last derivative query so the
// accepted step's gradient is not recomputed.
struct GradientMemo {
  double alpha = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd gradient;
};

LineFunction restrict(const Objective& obj, const Eigen::VectorXd& beta,
                      const Eigen::VectorXd& dir, GradientMemo& memo) {
  LineFunction phi;
  phi.value = [&obj, &beta, &dir](double a) {
    return safe_value(obj, beta + a * dir);
  };
  phi.derivative = [&obj, &beta, &dir, &memo](double a) {
    try {
      memo.gradient = objective_gradient(obj, beta + a * dir);
      memo.alpha = a;
      const double d = memo.gradient.dot(dir);
      return std::isfinite(d) ? d : std::numeric_limits<double>::quiet_NaN();
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  return phi;
}

double interpolate(double lo, double hi, double f_lo, double d_lo, double f_hi) {
  const double width = hi - lo;
  double a = lo + 0.5 * width;
  if (std::isfinite(f_hi) && std::isfinite(d_lo)) {
    const double curv = f_hi - f_lo - d_lo * width;
    if (curv > 0.0) a = lo - d_lo * width * width / (2.0 * curv);
  } else if (!std::isfinite(f_hi)) {
    a = lo + 0.25 * width;
  }
  const double left = std::min(lo, hi) + 0.1 * std::abs(width);
  const double right = std::max(lo, hi) - 0.1 * std::abs(width);
  if (!(a >= left && a <= right)) a = lo + 0.5 * width;
  return a;
}

OptResult finish(OptResult res, Termination reason) {
  res.reason = reason;
  return res;
}

void record(OptResult& res, const Eigen::VectorXd& beta, double value,
            const Eigen::VectorXd& grad, double step, const char* kind) {
  res.trace.push_back({beta, value, grad.norm(), step, kind});
}

OptResult run_line_search_method(const Objective& obj,
                                 const Eigen::VectorXd& beta0,
                                 const OptimizerConfig& cfg,
                                 const Eigen::MatrixXd* initial_hessian) {
  const bool gauss_newton = cfg.routine == Routine::gauss_newton;
  if (gauss_newton && (!obj.residual || !obj.jacobian)) {
    throw ConfigError("Gauss-Newton needs a residual and its Jacobian");
  }
  const Eigen::Index dim = beta0.size();

  OptResult res;
  res.beta = beta0;
  res.value = obj.value(beta0);
  if (!std::isfinite(res.value)) {
    throw NumericalError("objective is not finite at the starting point");
  }
  res.gradient = objective_gradient(obj, beta0);
  res.grad_tol = cfg.grad_tol > 0.0 ? cfg.grad_tol
                                    : 1e-6 * std::max(1.0, std::abs(res.value));
  record(res, res.beta, res.value, res.gradient, 0.0, "start");

  Eigen::MatrixXd delta = Eigen::MatrixXd::Identity(dim, dim);
  bool scaled = false;
  if (initial_hessian) {
    if (initial_hessian->rows() != dim || initial_hessian->cols() != dim) {
      throw ConfigError("initial Hessian has the wrong shape");
    }
    if (Eigen::LLT<Eigen::MatrixXd>(*initial_hessian).info() == Eigen::Success) {
      delta = *initial_hessian;
      scaled = true;
    }
  }
  const double c2 = cfg.curvature_constant();

  for (res.iterations = 0; res.iterations < cfg.max_iter; ++res.iterations) {
    if (res.gradient.norm() <= res.grad_tol) {
      res.hessian = delta;
      if (cfg.check_second_order && obj.hessian &&
          second_order_ok(obj.hessian(res.beta), cfg.eig_tol)) {
        return finish(std::move(res), Termination::near_root_second_order);
      }
      return finish(std::move(res), Termination::near_root);
    }

    Eigen::VectorXd dir;
    if (gauss_newton) {
      const Eigen::VectorXd r = obj.residual(res.beta);
      const Eigen::MatrixXd j = obj.jacobian(res.beta);
      const Eigen::MatrixXd wj = obj.weight.size() == 0 ? j : Eigen::MatrixXd(obj.weight * j);
      const Eigen::MatrixXd normal = j.transpose() * wj;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
      if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
        throw NumericalError("Gauss-Newton normal matrix is singular");
      }
      dir = -ldlt.solve(wj.transpose() * r);
      delta = 2.0 * normal;
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(delta);
      if (llt.info() != Eigen::Success) {
        delta.setIdentity();
        dir = -res.gradient;
      } else {
        dir = -llt.solve(res.gradient);
      }
    }
    double slope = res.gradient.dot(dir);
    if (!(slope < 0.0)) {
      // Not a descent direction: restart from steepest descent.
      delta.setIdentity();
      scaled = false;
      dir = -res.gradient;
      slope = -res.gradient.squaredNorm();
    }

    double alpha0 = 1.0;
    if (!gauss_newton && !scaled) alpha0 = std::min(1.0, 1.0 / dir.norm());

    GradientMemo memo;
    LineSearchResult ls;
    try {
      ls = wolfe_line_search(restrict(obj, res.beta, dir, memo), res.value,
                             slope, alpha0, cfg.c1, c2, cfg.max_line_search);
    } catch (const NumericalError&) {
      res.hessian = delta;
      return finish(std::move(res), Termination::line_search_fail);
    }

    const Eigen::VectorXd next = res.beta + ls.alpha * dir;
    const Eigen::VectorXd next_grad =
        memo.alpha == ls.alpha ? memo.gradient : objective_gradient(obj, next);
    const Eigen::VectorXd x = next - res.beta;
    const Eigen::VectorXd d = next_grad - res.gradient;

    const char* kind = "accepted";
    if (!gauss_newton) {
      if (!scaled && d.dot(x) > 0.0) {
        delta = (d.squaredNorm() / d.dot(x)) * Eigen::MatrixXd::Identity(dim, dim);
        scaled = true;
      }
      if (!bfgs_update(delta, x, d)) kind = "skip-update";
    }
    res.beta = next;
    res.value = ls.value;
    res.gradient = next_grad;
    record(res, res.beta, res.value, res.gradient, ls.alpha, kind);
  }
  res.hessian = delta;
  return finish(std::move(res), Termination::max_iter);
}

OptResult run_trust_region(const Objective& obj, const Eigen::VectorXd& beta0,
                           const OptimizerConfig& cfg) {
  if (!obj.hessian) throw ConfigError("trust region needs a Hessian");
  OptResult res;
  res.beta = beta0;
  res.value = obj.value(beta0);
  if (!std::isfinite(res.value)) {
    throw NumericalError("objective is not finite at the starting point");
  }
  res.gradient = objective_gradient(obj, beta0);
  res.hessian = obj.hessian(beta0);
  res.grad_tol = cfg.grad_tol > 0.0 ? cfg.grad_tol
                                    : 1e-6 * std::max(1.0, std::abs(res.value));
  record(res, res.beta, res.value, res.gradient, 0.0, "start");

  double radius = cfg.tr_init_radius;
  for (res.iterations = 0; res.iterations < cfg.max_iter; ++res.iterations) {
    if (res.gradient.norm() <= res.grad_tol &&
        second_order_ok(res.hessian, cfg.eig_tol)) {
      return finish(std::move(res), Termination::near_root_second_order);
    }
    const TrustRegionStep step = tr_subproblem(res.gradient, res.hessian, radius);
    if (!(step.predicted > 0.0)) {
      return finish(std::move(res), Termination::line_search_fail);
    }
    const Eigen::VectorXd trial = res.beta + step.step;
    const double trial_value = safe_value(obj, trial);
    const double rho = (res.value - trial_value) / step.predicted;
    const double length = step.step.norm();

    if (rho < 0.25) {
      radius = 0.25 * length;
    } else if (rho >= 0.75 && step.boundary) {
      radius = 2.0 * radius;
    }

    if (rho >= cfg.tr_eta_accept) {
      res.beta = trial;
      res.value = trial_value;
      res.gradient = objective_gradient(obj, trial);
      res.hessian = obj.hessian(trial);
      record(res, res.beta, res.value, res.gradient, length, "accepted");
    } else {
      record(res, trial, trial_value, res.gradient, length, "rejected");
    }
    if (radius < 1e-14 * std::max(1.0, res.beta.norm())) {
      return finish(std::move(res), Termination::line_search_fail);
    }
  }
  return finish(std::move(res), Termination::max_iter);
}

}  // namespace

Routine parse_routine(const std::string& name) {
  if (name == "gn" || name == "GN" || name == "gauss_newton") {
    return Routine::gauss_newton;
  }
  if (name == "bfgs" || name == "qn" || name == "QN_BFGS") return Routine::bfgs;
  if (name == "tr" || name == "TR" || name == "trust_region") {
    return Routine::trust_region;
  }
  throw ConfigError("unknown optimizer routine '" + name + "'");
}

std::string to_string(Routine routine) {
  switch (routine) {
    case Routine::gauss_newton:
      return "gn";
    case Routine::bfgs:
      return "bfgs";
    case Routine::trust_region:
      return "tr";
  }
  return "?";
}

std::string to_string(Termination reason) {
  switch (reason) {
    case Termination::near_root:
      return "near_root";
    case Termination::near_root_second_order:
      return "near_root_second_order";
    case Termination::max_iter:
      return "max_iter";
    case Termination::line_search_fail:
      return "line_search_fail";
  }
  return "?";
}

double OptimizerConfig::curvature_constant() const {
  if (c2 > 0.0) return c2;
  return routine == Routine::gauss_newton ? 0.1 : 0.9;
}

void OptimizerConfig::validate() const {
  const double curv = curvature_constant();
  if (!(c1 > 0.0 && c1 < curv && curv < 1.0)) {
    throw ConfigError("Wolfe constants must satisfy 0 < c1 < c2 < 1");
  }
  if (grad_tol < 0.0) throw ConfigError("grad_tol must be positive");
  if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (max_line_search < 2) throw ConfigError("max_line_search must be at least 2");
  if (!(tr_init_radius > 0.0)) throw ConfigError("tr_init_radius must be positive");
  if (!(tr_eta_accept > 0.0 && tr_eta_accept < 0.25)) {
    throw ConfigError("tr_eta_accept must lie in (0, 0.25)");
  }
  if (!(eig_tol >= 0.0)) throw ConfigError("eig_tol must be non-negative");
}

OptResult minimize(const Objective& objective, const Eigen::VectorXd& beta0,
                   const OptimizerConfig& config,
                   const Eigen::MatrixXd* initial_hessian) {
  config.validate();
  if (!objective.value) throw ConfigError("objective has no value function");
  if (config.routine == Routine::trust_region) {
    return run_trust_region(objective, beta0, config);
  }
  return run_line_search_method(objective, beta0, config, initial_hessian);
}

OptResult minimize_multistart(const Objective& objective,
                              std::span<const Eigen::VectorXd> starts,
                              const OptimizerConfig& config) {
  if (starts.empty()) throw ConfigError("multi-start needs at least one start");
  std::optional<OptResult> best;
  std::optional<Error> last_error;
  for (const Eigen::VectorXd& start : starts) {
    try {
      OptResult r = minimize(objective, start, config);
      if (!best || r.value < best->value) best = std::move(r);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      last_error = e;
    }
  }
  if (!best) throw *last_error;
  return std::move(*best);
}

LineSearchResult wolfe_line_search(const LineFunction& phi, double phi0,
                                   double dphi0, double alpha0, double c1,
                                   double c2, int max_evals) {
  if (!(dphi0 < 0.0)) {
    throw NumericalError("line search needs a descent direction");
  }
  if (!(alpha0 > 0.0)) throw ConfigError("initial step must be positive");

  LineSearchResult out;
  auto sufficient = [&](double a, double f) {
    return f <= phi0 + c1 * a * dphi0;
  };
  auto curvature = [&](double d) { return std::abs(d) <= -c2 * dphi0; };
  auto exhausted = [&] {
    if (out.evaluations >= max_evals) {
      throw NumericalError("no strong-Wolfe step within " +
                           std::to_string(max_evals) + " evaluations");
    }
  };

  auto zoom = [&](double lo, double hi, double f_lo, double d_lo,
                  double f_hi) -> LineSearchResult {
    for (;;) {
      exhausted();
      if (std::abs(hi - lo) <= 1e-16 * std::max(1.0, std::abs(lo))) {
        throw NumericalError("line search interval collapsed");
      }
      const double a = interpolate(lo, hi, f_lo, d_lo, f_hi);
      const double f = phi.value(a);
      ++out.evaluations;
      if (!sufficient(a, f) || f >= f_lo) {
        hi = a;
        f_hi = f;
        continue;
      }
      const double d = phi.derivative(a);
      if (std::isnan(d)) {
        hi = a;
        f_hi = kInf;
        continue;
      }
      if (curvature(d)) {
        out.alpha = a;
        out.value = f;
        out.derivative = d;
        return out;
      }
      if (d * (hi - lo) >= 0.0) {
        hi = lo;
        f_hi = f_lo;
      }
      lo = a;
      f_lo = f;
      d_lo = d;
    }
  };

  double a_prev = 0.0;
  double f_prev = phi0;
  double d_prev = dphi0;
  double a = alpha0;
  for (int i = 0;; ++i) {
    exhausted();
    const double f = phi.value(a);
    ++out.evaluations;
    if (!sufficient(a, f) || (i > 0 && f >= f_prev)) {
      return zoom(a_prev, a, f_prev, d_prev, f);
    }
    const double d = phi.derivative(a);
    if (std::isnan(d)) return zoom(a_prev, a, f_prev, d_prev, kInf);
    if (curvature(d)) {
      out.alpha = a;
      out.value = f;
      out.derivative = d;
      return out;
    }
    if (d >= 0.0) return zoom(a, a_prev, f, d, f_prev);
    a_prev = a;
    f_prev = f;
    d_prev = d;
    a *= 2.0;
  }
}

bool bfgs_update(Eigen::MatrixXd& delta, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& d) {
  const double dx = d.dot(x);
  if (!(dx > 0.0)) return false;
  const Eigen::VectorXd dx_vec = delta * x;
  const double xdx = x.dot(dx_vec);
  if (!(xdx > 0.0)) return false;
  delta += d * d.transpose() / dx - dx_vec * dx_vec.transpose() / xdx;
  delta = 0.5 * (delta + delta.transpose());
  return true;
}

TrustRegionStep tr_subproblem(const Eigen::VectorXd& grad,
                              const Eigen::MatrixXd& hess, double radius) {
  if (!(radius > 0.0)) throw ConfigError("trust radius must be positive");
  const Eigen::Index n = grad.size();
  if (hess.rows() != n || hess.cols() != n) {
    throw ConfigError("trust-region Hessian has the wrong shape");
  }
  const double scale = std::max(1.0, hess.cwiseAbs().maxCoeff());
  if ((hess - hess.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ConfigError("trust-region Hessian is not symmetric");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const Eigen::MatrixXd& q = eig.eigenvectors();
  const Eigen::VectorXd gq = q.transpose() * grad;
  const double lmin = lam[0];

  auto step_at = [&](double mu) -> Eigen::VectorXd {
    return -(q * (gq.array() / (lam.array() + mu)).matrix());
  };
  auto finish_step = [&](TrustRegionStep s) {
    s.predicted = -(grad.dot(s.step) + 0.5 * s.step.dot(hess * s.step));
    return s;
  };

  TrustRegionStep out;
  if (lmin > 0.0) {
    out.step = step_at(0.0);
    if (out.step.norm() <= radius) return finish_step(std::move(out));
  }

  // Eigen-directions belonging to the smallest eigenvalue.
  const double eig_gap = 1e-12 * scale;
  const double gnorm = grad.norm();
  bool orthogonal = true;
  for (Eigen::Index i = 0; i < n && lam[i] - lmin <= eig_gap; ++i) {
    if (std::abs(gq[i]) > 1e-12 * std::max(1.0, gnorm)) orthogonal = false;
  }
  const double lo_mu = std::max(0.0, -lmin);

  if (orthogonal && lmin <= 0.0) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lam[i] - lmin > eig_gap) p -= gq[i] / (lam[i] - lmin) * q.col(i);
    }
    if (p.norm() <= radius) {
      const double tau = std::sqrt(std::max(0.0, radius * radius - p.squaredNorm()));
      out.step = p + tau * q.col(0);
      out.mu = -lmin;
      out.boundary = true;
      out.hard_case = true;
      return finish_step(std::move(out));
    }
  }

  // Secular equation ||p(mu)|| = radius on (lo_mu, hi_mu).
  double lo = lo_mu;
  double hi = lo_mu + gnorm / radius + 1.0;
  while (step_at(hi).norm() > radius) hi *= 2.0;
  double mu = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::ArrayXd denom = lam.array() + mu;
    const double pn = (gq.array() / denom).matrix().norm();
    if (!std::isfinite(pn) || pn > radius) {
      lo = mu;
    } else {
      hi = mu;
    }
    if (std::isfinite(pn) && std::abs(pn - radius) <= 1e-12 * radius) break;
    double next = 0.5 * (lo + hi);
    if (std::isfinite(pn) && pn > 0.0) {
      const double qn2 = (gq.array().square() / denom.cube()).sum();
      const double newton = mu + (pn - radius) / radius * pn * pn / qn2;
      if (newton > lo && newton < hi) next = newton;
    }
    if (next == mu) break;
    mu = next;
  }
  out.step = step_at(mu);
  out.mu = mu;
  out.boundary = true;
  return finish_step(std::move(out));
}

}  // namespace gii::opt
