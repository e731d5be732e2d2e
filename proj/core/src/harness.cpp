#include "gii/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "gii/auxiliary.hpp"
#include "gii/error.hpp"
#include "parallel.hpp"

namespace gii::harness {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool converged_reason(const std::string& reason) {
  return reason == "near_root" || reason == "near_root_second_order" ||
         reason == "newton_step";
}

opt::Objective make_objective(crit::Criterion& c) {
  opt::Objective obj;
  obj.value = [&c](const Eigen::VectorXd& b) { return c.value(b); };
  obj.gradient = [&c](const Eigen::VectorXd& b) { return c.gradient(b); };
  obj.hessian = [&c](const Eigen::VectorXd& b) { return c.hessian(b); };
  if (c.config().kind == crit::Kind::wald) {
    obj.residual = [&c](const Eigen::VectorXd& b) { return c.residual(b); };
    obj.jacobian = [&c](const Eigen::VectorXd& b) {
      return c.binding_jacobian(b);
    };
    obj.weight = c.config().weight;
  }
  return obj;
}

std::vector<Eigen::VectorXd> default_starts(const crit::Bounds& bounds) {
  const Eigen::Index d = bounds.lower.size();
  std::vector<Eigen::VectorXd> out;
  for (double level : {0.0, 0.5, -0.5}) {
    out.push_back(Eigen::VectorXd::Constant(d, level)
                      .cwiseMax(bounds.lower)
                      .cwiseMin(bounds.upper));
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  if (s == "nan" || s == "NaN") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " value '" + s + "'");
  }
}

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) {
      out.push_back(v[i]);
    } else {
      out.push_back(nullptr);
    }
  }
  return out;
}

}  // namespace

crit::Bounds ExperimentConfig::effective_bounds() const {
  return bounds ? *bounds : crit::Bounds::defaults(structural.model);
}

crit::CriterionConfig ExperimentConfig::criterion_config(
    const ScheduleStep& step) const {
  crit::CriterionConfig c;
  c.kind = kind;
  c.lambda = step.lambda;
  c.sims = step.sims;
  c.jackknife = smooth::jackknife_weights(jackknife_order, jackknife_delta);
  c.kernel.family = kernel;
  c.dyn_mode = dyn_mode;
  c.fd_step = fd_step;
  c.threads = criterion_threads;
  return c;
}

int ExperimentConfig::max_sims() const {
  int m = 0;
  for (const auto& s : schedule) m = std::max(m, s.sims);
  return m;
}

void ExperimentConfig::validate() const {
  try {
    structural.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("$.structural: ") + e.what());
  }
  if (schedule.empty()) throw ConfigError("$.schedule: must not be empty");
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const std::string at = "$.schedule[" + std::to_string(s) + "]";
    if (!(schedule[s].lambda > 0.0)) {
      throw ConfigError(at + ".lambda: must be positive");
    }
    if (schedule[s].sims < 1) throw ConfigError(at + ".sims: must be >= 1");
    if (s > 0 && !(schedule[s].lambda < schedule[s - 1].lambda)) {
      throw ConfigError(at + ".lambda: must decrease along the schedule");
    }
    if (s > 0 && schedule[s].sims < schedule[s - 1].sims) {
      throw ConfigError(at + ".sims: must not decrease along the schedule");
    }
  }
  if (replications < 1) throw ConfigError("$.replications: must be >= 1");
  if (threads < 1) throw ConfigError("$.threads: must be >= 1");
  if (criterion_threads < 1) throw ConfigError("$.criterion_threads: must be >= 1");
  try {
    optimizer.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("$.optimizer: ") + e.what());
  }
  if (optimizer.routine == opt::Routine::gauss_newton && kind != crit::Kind::wald) {
    throw ConfigError("$.optimizer.routine: Gauss-Newton needs the Wald criterion");
  }
  try {
    smooth::jackknife_weights(jackknife_order, jackknife_delta);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("$.criterion.jackknife: ") + e.what());
  }
  if (fd_step && !(*fd_step > 0.0)) {
    throw ConfigError("$.criterion.fd_step: must be positive");
  }
  try {
    aux::make_spec(structural.model, aux_variant, structural.periods,
                   structural.unobserved);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("$.auxiliary: ") + e.what());
  }
  const crit::Bounds b = effective_bounds();
  const int d = sim::parameter_count(structural.model);
  if (b.lower.size() != d || b.upper.size() != d) {
    throw ConfigError("$.bounds: need " + std::to_string(d) + " entries");
  }
  if (start_at_truth && !b.contains(structural.beta)) {
    throw ConfigError("$.structural.beta: true parameters lie outside the bounds");
  }
  for (std::size_t k = 0; k < starts.size(); ++k) {
    if (!b.contains(starts[k])) {
      throw ConfigError("$.starts[" + std::to_string(k) +
                        "]: outside the bounds or wrong length");
    }
  }
  for (std::size_t k = 0; k < acceptance.size(); ++k) {
    const auto& band = acceptance[k];
    const std::string at = "$.acceptance[" + std::to_string(k) + "]";
    const auto names = sim::parameter_names(structural.model);
    if (std::find(names.begin(), names.end(), band.parameter) == names.end()) {
      throw ConfigError(at + ".parameter: unknown parameter '" + band.parameter + "'");
    }
    if (band.statistic != "mean" && band.statistic != "sd" &&
        band.statistic != "se_ratio") {
      throw ConfigError(at + ".statistic: must be mean, sd or se_ratio");
    }
    if (!(band.tolerance >= 0.0)) throw ConfigError(at + ".tolerance: must be >= 0");
  }
}

EstimateResult estimate(const ExperimentConfig& cfg,
                        std::shared_ptr<const sim::ShockSet> shocks,
                        const Eigen::MatrixXd& outcomes, int rep) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = sim::parameter_count(cfg.structural.model);
  EstimateResult res;
  res.rep = rep;
  res.beta_hat = Eigen::VectorXd::Constant(d, kNaN);
  res.se = Eigen::VectorXd::Constant(d, kNaN);

  try {
    aux::AuxiliarySpec spec =
        aux::make_spec(cfg.structural.model, cfg.aux_variant,
                       cfg.structural.periods, cfg.structural.unobserved);
    const crit::Bounds bounds = cfg.effective_bounds();
    crit::Criterion criterion(cfg.structural, std::move(shocks), std::move(spec),
                              outcomes, cfg.criterion_config(cfg.schedule[0]),
                              bounds);
    const opt::Objective objective = make_objective(criterion);

    Eigen::VectorXd beta = cfg.structural.beta;
    Eigen::MatrixXd hessian;
    for (std::size_t s = 0; s < cfg.schedule.size(); ++s) {
      if (s > 0) criterion.reconfigure(cfg.criterion_config(cfg.schedule[s]));
      StepRecord rec;
      rec.lambda = cfg.schedule[s].lambda;
      rec.sims = cfg.schedule[s].sims;
      const long evals_before = criterion.evaluations();

      if (s == 0 || cfg.second_step == SecondStep::full) {
        opt::OptResult r;
        if (s == 0 && !cfg.start_at_truth) {
          const auto starts = cfg.starts.empty() ? default_starts(bounds) : cfg.starts;
          r = opt::minimize_multistart(objective, starts, cfg.optimizer);
          rec.start = r.trace.front().beta;
        } else {
          rec.start = beta;
          r = opt::minimize(objective, beta, cfg.optimizer,
                            hessian.size() != 0 ? &hessian : nullptr);
        }
        beta = r.beta;
        hessian = r.hessian;
        rec.value = r.value;
        rec.grad_norm = r.gradient.norm();
        rec.reason = opt::to_string(r.reason);
        rec.iterations = r.iterations;
      } else {
        rec.start = beta;
        const Eigen::VectorXd g = criterion.gradient(beta);
        const Eigen::MatrixXd h = criterion.hessian(beta);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
          throw NumericalError("Newton step: criterion Hessian is singular");
        }
        beta = beta - ldlt.solve(g);
        rec.value = criterion.value(beta);
        rec.grad_norm = criterion.gradient(beta).norm();
        rec.reason = "newton_step";
        rec.iterations = 1;
      }
      rec.beta = beta;
      rec.evaluations = criterion.evaluations() - evals_before;
      res.steps.push_back(std::move(rec));
    }
    res.beta_hat = beta;
    res.status = res.steps.back().reason;
    res.converged = converged_reason(res.status);

    if (cfg.compute_se) {
      try {
        res.variance = inf::assess(criterion, beta);
        res.se = res.variance->result.se;
      } catch (const Error& e) {
        res.message = std::string("standard errors unavailable: ") + e.what();
      }
    }
  } catch (const Error& e) {
    res.status = "error";
    res.converged = false;
    res.message = e.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

EstimateResult estimate_once(const ExperimentConfig& cfg, int rep) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(rep);
    auto shocks = std::make_shared<const sim::ShockSet>(cfg.structural,
                                                        cfg.max_sims(), seed);
    const sim::ObservedData data = sim::generate_observed(cfg.structural, *shocks);
    EstimateResult res = estimate(cfg, shocks, data.outcomes, rep);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  } catch (const Error& e) {
    EstimateResult res;
    const int d = sim::parameter_count(cfg.structural.model);
    res.rep = rep;
    res.beta_hat = Eigen::VectorXd::Constant(d, kNaN);
    res.se = Eigen::VectorXd::Constant(d, kNaN);
    res.status = "error";
    res.message = e.what();
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }
}

std::string EstimateResult::to_json(const std::vector<std::string>& names) const {
  nlohmann::json j;
  j["rep"] = rep;
  j["names"] = names;
  j["beta_hat"] = vec_json(beta_hat);
  j["se"] = vec_json(se);
  j["status"] = status;
  j["converged"] = converged;
  if (!message.empty()) j["message"] = message;
  j["seconds"] = seconds;
  nlohmann::json steps_json = nlohmann::json::array();
  for (const StepRecord& s : steps) {
    steps_json.push_back({{"lambda", s.lambda},
                          {"sims", s.sims},
                          {"start", vec_json(s.start)},
                          {"beta", vec_json(s.beta)},
                          {"value", s.value},
                          {"grad_norm", s.grad_norm},
                          {"reason", s.reason},
                          {"iterations", s.iterations},
                          {"evaluations", s.evaluations}});
  }
  j["steps"] = std::move(steps_json);
  if (variance) j["variance"] = nlohmann::json::parse(variance->to_json());
  return j.dump(2);
}

double MCResult::convergence_rate() const {
  return rows.empty() ? 0.0 : static_cast<double>(converged) / static_cast<double>(rows.size());
}

MCResult run_mc(const ExperimentConfig& cfg, int reps, int threads) {
  if (reps < 1) throw ConfigError("number of replications must be >= 1");
  ExperimentConfig local = cfg;
  if (threads > 1) local.criterion_threads = 1;
  local.validate();

  MCResult out;
  out.names = sim::parameter_names(cfg.structural.model);
  out.truth = cfg.structural.beta;
  out.rows.resize(static_cast<std::size_t>(reps));
  detail::parallel_for(reps, threads, [&](int k) {
    out.rows[static_cast<std::size_t>(k)] = estimate_once(local, k);
  });
  aggregate(out, cfg.exclude_flagged);
  return out;
}

void aggregate(MCResult& result, bool exclude_flagged) {
  const std::size_t d = result.names.size();
  result.converged = 0;
  result.failed = 0;
  double seconds = 0.0;
  for (const auto& row : result.rows) {
    if (row.converged) ++result.converged;
    if (row.status == "error") ++result.failed;
    seconds += row.seconds;
  }
  result.mean_seconds = result.rows.empty() ? 0.0 : seconds / static_cast<double>(result.rows.size());

  result.aggregates.assign(d, {});
  for (std::size_t j = 0; j < d; ++j) {
    Aggregate& a = result.aggregates[j];
    a.parameter = result.names[j];
    a.truth = result.truth.size() == static_cast<Eigen::Index>(d)
                  ? result.truth[static_cast<Eigen::Index>(j)]
                  : kNaN;
    std::vector<double> values;
    std::vector<double> ses;
    for (const auto& row : result.rows) {
      if (exclude_flagged && !row.converged) continue;
      const double v = row.beta_hat[static_cast<Eigen::Index>(j)];
      if (!std::isfinite(v)) continue;
      values.push_back(v);
      const double se = row.se.size() > static_cast<Eigen::Index>(j)
                            ? row.se[static_cast<Eigen::Index>(j)]
                            : kNaN;
      if (std::isfinite(se)) ses.push_back(se);
    }
    a.count = static_cast<int>(values.size());
    if (values.empty()) {
      a.mean = a.sd = a.mean_se = a.se_ratio = kNaN;
      continue;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    double se_sum = 0.0;
    for (double s : ses) se_sum += s;
    a.mean_se = ses.empty() ? kNaN : se_sum / static_cast<double>(ses.size());
    a.se_ratio = a.sd > 0.0 ? a.mean_se / a.sd : kNaN;
  }
}

void write_csv(std::ostream& os, const MCResult& result) {
  os << "rep";
  for (const auto& n : result.names) os << ',' << n << "_hat";
  for (const auto& n : result.names) os << ",se_" << n;
  os << ",status,seconds\n";
  for (const auto& row : result.rows) {
    os << row.rep;
    for (Eigen::Index j = 0; j < row.beta_hat.size(); ++j) {
      os << ',' << format_double(row.beta_hat[j]);
    }
    for (std::size_t j = 0; j < result.names.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      os << ',' << format_double(jj < row.se.size() ? row.se[jj] : kNaN);
    }
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", row.seconds);
    os << ',' << row.status << ',' << secs << '\n';
  }
}

MCResult read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty result CSV");
  const std::vector<std::string> header = split(line, ',');
  MCResult out;
  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) {
    col[header[k]] = k;
    const std::string& h = header[k];
    if (h.size() > 4 && h.compare(h.size() - 4, 4, "_hat") == 0) {
      out.names.push_back(h.substr(0, h.size() - 4));
    }
  }
  for (const char* required : {"rep", "status", "seconds"}) {
    if (!col.count(required)) {
      throw ConfigError(std::string("result CSV lacks column '") + required + "'");
    }
  }
  if (out.names.empty()) throw ConfigError("result CSV has no *_hat columns");
  const auto d = static_cast<Eigen::Index>(out.names.size());

  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != header.size()) {
      throw ConfigError("result CSV line " + std::to_string(line_no) +
                        " has " + std::to_string(f.size()) + " fields");
    }
    EstimateResult row;
    row.rep = std::stoi(f[col["rep"]]);
    row.beta_hat.resize(d);
    row.se = Eigen::VectorXd::Constant(d, kNaN);
    for (Eigen::Index j = 0; j < d; ++j) {
      const std::string& name = out.names[static_cast<std::size_t>(j)];
      row.beta_hat[j] = parse_double(f[col[name + "_hat"]], name + "_hat");
      if (auto it = col.find("se_" + name); it != col.end()) {
        row.se[j] = parse_double(f[it->second], "se_" + name);
      }
    }
    row.status = f[col["status"]];
    row.converged = converged_reason(row.status);
    row.seconds = parse_double(f[col["seconds"]], "seconds");
    out.rows.push_back(std::move(row));
  }
  aggregate(out, false);
  return out;
}

std::string render_table(const MCResult& result) {
  std::ostringstream os;
  os << std::fixed;
  // Wide layout: one Mean/Std.dev pair per parameter, then the time.
  os << std::setw(8) << "";
  for (const auto& a : result.aggregates) {
    os << std::setw(20) << a.parameter;
  }
  os << '\n' << std::setw(8) << "";
  for (std::size_t k = 0; k < result.aggregates.size(); ++k) {
    os << std::setw(10) << "Mean" << std::setw(10) << "Std.dev";
  }
  os << std::setw(10) << "Time" << '\n' << std::setw(8) << "GII";
  for (const auto& a : result.aggregates) {
    os << std::setprecision(4) << std::setw(10) << a.mean << std::setw(10) << a.sd;
  }
  os << std::setprecision(2) << std::setw(10) << result.mean_seconds << "\n\n";

  os << std::setw(10) << "parameter" << std::setw(10) << "true" << std::setw(10)
     << "Mean" << std::setw(10) << "Std.dev" << std::setw(10) << "Mean SE"
     << std::setw(10) << "SE/sd" << std::setw(8) << "n" << '\n';
  for (const auto& a : result.aggregates) {
    os << std::setw(10) << a.parameter << std::setprecision(4) << std::setw(10)
       << a.truth << std::setw(10) << a.mean << std::setw(10) << a.sd
       << std::setw(10) << a.mean_se << std::setprecision(3) << std::setw(10)
       << a.se_ratio << std::setw(8) << a.count << '\n';
  }
  os << "replications: " << result.rows.size() << " (converged "
     << result.converged << ", failed " << result.failed << ")\n";
  return os.str();
}

std::vector<std::string> check_acceptance(const MCResult& result,
                                          const std::vector<AcceptanceBand>& bands) {
  std::vector<std::string> failures;
  for (const auto& band : bands) {
    auto it = std::find_if(result.aggregates.begin(), result.aggregates.end(),
                           [&](const Aggregate& a) { return a.parameter == band.parameter; });
    if (it == result.aggregates.end()) {
      failures.push_back("no estimates for parameter " + band.parameter);
      continue;
    }
    double stat = kNaN;
    if (band.statistic == "mean") stat = it->mean;
    if (band.statistic == "sd") stat = it->sd;
    if (band.statistic == "se_ratio") stat = it->se_ratio;
    const double tol = band.relative ? band.tolerance * std::abs(band.target) : band.tolerance;
    if (!(std::abs(stat - band.target) <= tol)) {
      std::ostringstream msg;
      msg << band.statistic << '(' << band.parameter << ") = " << stat
          << " outside " << band.target << " +/- " << tol;
      failures.push_back(msg.str());
    }
  }
  return failures;
}

void write_dataset(std::ostream& os, const sim::ObservedData& data) {
  const int n = data.n();
  const int dx = static_cast<int>(data.covariates.cols());
  switch (data.model) {
    case sim::ModelId::M4:
      os << "i,t,y1,y2,x1,x2,x3\n";
      break;
    case sim::ModelId::M5:
      os << "i,t,y,w,x1,x2\n";
      break;
    default:
      os << "i,t,y,x\n";
      break;
  }
  auto cell = [&](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  if (data.model == sim::ModelId::M4 || data.model == sim::ModelId::M5) {
    for (int i = 0; i < n; ++i) {
      os << i + 1 << ",1," << cell(data.outcomes(i, 0)) << ',';
      if (data.model == sim::ModelId::M4) {
        os << cell(data.outcomes(i, 1));
      } else {
        os << cell(data.wage.size() ? data.wage[i] : kNaN);
      }
      for (int k = 0; k < dx; ++k) os << ',' << cell(data.covariates(i, k));
      os << '\n';
    }
    return;
  }
  const int periods = static_cast<int>(data.outcomes.cols());
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < periods; ++t) {
      os << i + 1 << ',' << t + 1 << ',' << cell(data.outcomes(i, t)) << ','
         << cell(data.covariates(i, t)) << '\n';
    }
  }
}

sim::ObservedData read_dataset(std::istream& is, sim::ModelId model) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty dataset");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string expected = "i,t,y,x";
  int values = 2;
  if (model == sim::ModelId::M4) {
    expected = "i,t,y1,y2,x1,x2,x3";
    values = 5;
  } else if (model == sim::ModelId::M5) {
    expected = "i,t,y,w,x1,x2";
    values = 4;
  }
  if (line != expected) {
    throw ConfigError("dataset header '" + line + "' does not match '" + expected +
                      "' for " + sim::to_string(model));
  }

  std::vector<std::vector<std::string>> rows;
  int n = 0;
  int periods = 0;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (static_cast<int>(f.size()) != values + 2) {
      throw ConfigError("dataset line " + std::to_string(line_no) + " has " +
                        std::to_string(f.size()) + " fields");
    }
    const int i = std::stoi(f[0]);
    const int t = std::stoi(f[1]);
    if (i < 1 || t < 1) {
      throw ConfigError("dataset line " + std::to_string(line_no) +
                        ": indices start at 1");
    }
    n = std::max(n, i);
    periods = std::max(periods, t);
    rows.push_back(std::move(f));
  }
  if (n == 0) throw ConfigError("dataset has no rows");
  auto num = [](const std::string& s) {
    return s.empty() ? kNaN : parse_double(s, "dataset");
  };

  sim::ObservedData data;
  data.model = model;
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(n, periods);
  if (model == sim::ModelId::M4 || model == sim::ModelId::M5) {
    if (periods != 1) throw ConfigError("static models have a single period");
    data.outcomes.resize(n, 2);
    data.covariates.resize(n, values - 2);
    if (model == sim::ModelId::M5) data.wage.resize(n);
    for (const auto& f : rows) {
      const int i = std::stoi(f[0]) - 1;
      ++seen(i, 0);
      const double y = num(f[2]);
      if (model == sim::ModelId::M4) {
        data.outcomes(i, 0) = y;
        data.outcomes(i, 1) = num(f[3]);
      } else {
        const double w = num(f[3]);
        if (y > 0.5 && std::isnan(w)) {
          throw ConfigError("dataset: worker " + std::to_string(i + 1) + " has no wage");
        }
        data.outcomes(i, 0) = y;
        data.outcomes(i, 1) = y > 0.5 ? w : 0.0;
        data.wage[i] = y > 0.5 ? w : kNaN;
      }
      for (int k = 0; k < values - 2; ++k) data.covariates(i, k) = num(f[4 + k]);
    }
  } else {
    data.outcomes.resize(n, periods);
    data.covariates.resize(n, periods);
    for (const auto& f : rows) {
      const int i = std::stoi(f[0]) - 1;
      const int t = std::stoi(f[1]) - 1;
      ++seen(i, t);
      data.outcomes(i, t) = num(f[2]);
      data.covariates(i, t) = num(f[3]);
    }
  }
  if ((seen.array() != 1).any()) {
    throw ConfigError("dataset must contain every (i, t) exactly once");
  }
  if (!data.covariates.allFinite()) throw ConfigError("dataset has missing covariates");

  // Leading missing choices are M3's unobserved periods.
  int unobserved = 0;
  if (model != sim::ModelId::M4 && model != sim::ModelId::M5) {
    while (unobserved < periods && data.outcomes.col(unobserved).hasNaN()) ++unobserved;
    if (!data.outcomes.rightCols(periods - unobserved).allFinite()) {
      throw ConfigError("dataset: missing choices after the first observed period");
    }
    if (unobserved > 0 && model != sim::ModelId::M3) {
      throw ConfigError("dataset: only M3 may have unobserved initial choices");
    }
  } else if (!data.outcomes.allFinite()) {
    throw ConfigError("dataset has missing outcomes");
  }
  data.unobserved = unobserved;
  return data;
}

}  // namespace gii::harness
