// gii: simulate datasets, estimate structural parameters, run Monte Carlo
// experiments and re-render stored results.
//
// Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
// 4 acceptance-threshold failure (mc --ci).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gii/error.hpp"
#include "gii/harness.hpp"
#include "gii/model.hpp"

namespace {

using namespace gii;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;
constexpr int kAcceptanceFailure = 4;

struct Common {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment JSON document");
  cmd->add_option("-o,--output", c.output, "output path (default: stdout)");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--reps", c.reps, "number of replications");
  cmd->add_option("--threads", c.threads, "worker threads");
}

// Writes through `path`, or to stdout when it is empty or "-".
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw ConfigError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  bool is_stdout() const { return !file_.is_open(); }

 private:
  std::ofstream file_;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--beta: '" + item + "' is not a number");
    }
  }
  return out;
}

// Experiment from --config, else a bare one for `model`.
harness::ExperimentConfig base_config(const Common& c,
                                      const std::string& model) {
  harness::ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = harness::load_experiment(c.config);
    if (!model.empty() && sim::parse_model_id(model) != cfg.structural.model) {
      throw ConfigError("--model " + model + " disagrees with the config");
    }
  } else {
    if (model.empty()) throw ConfigError("need --config or --model");
    cfg.structural.model = sim::parse_model_id(model);
    if (cfg.structural.model == sim::ModelId::M5) cfg.aux_variant = 1;
    cfg.structural.beta =
        Eigen::VectorXd::Zero(sim::parameter_count(cfg.structural.model));
  }
  if (c.seed) cfg.base_seed = *c.seed;
  if (c.reps) cfg.replications = *c.reps;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.output.empty()) cfg.output = c.output;
  return cfg;
}

struct SimulateArgs {
  Common common;
  std::string model;
  std::string beta;
  std::optional<int> n;
  std::optional<int> periods;
  std::optional<int> unobserved;
};

int run_simulate(SimulateArgs& a) {
  harness::ExperimentConfig cfg = base_config(a.common, a.model);
  sim::StructuralConfig& s = cfg.structural;
  if (!a.beta.empty()) {
    const auto v = parse_list(a.beta);
    s.beta = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (a.n) s.n = *a.n;
  if (a.periods) s.periods = *a.periods;
  if (a.unobserved) s.unobserved = *a.unobserved;
  s.validate();
  const sim::ShockSet shocks(s, 0, cfg.base_seed);
  const sim::ObservedData data = sim::generate_observed(s, shocks);
  Sink out(a.common.output);
  harness::write_dataset(out.stream(), data);
  return kOk;
}

struct EstimateArgs {
  Common common;
  std::string model;
  std::string data;
};

int run_estimate(EstimateArgs& a) {
  harness::ExperimentConfig cfg = base_config(a.common, a.model);
  if (a.common.threads) cfg.criterion_threads = *a.common.threads;
  harness::EstimateResult res;
  if (a.data.empty()) {
    if (a.common.config.empty()) throw ConfigError("need --data or --config");
    cfg.validate();
    res = harness::estimate_once(cfg, 0);
  } else {
    std::ifstream in(a.data);
    if (!in) throw ConfigError("cannot open dataset '" + a.data + "'");
    const sim::ObservedData data = harness::read_dataset(in, cfg.structural.model);
    sim::StructuralConfig& s = cfg.structural;
    s.n = data.n();
    const bool dynamic = s.model != sim::ModelId::M4 && s.model != sim::ModelId::M5;
    s.periods = dynamic ? static_cast<int>(data.outcomes.cols()) : 1;
    s.unobserved = data.unobserved;
    if (a.common.config.empty()) cfg.start_at_truth = false;
    cfg.validate();
    auto shocks = std::make_shared<const sim::ShockSet>(s, cfg.max_sims(), cfg.base_seed,
                                                        data.covariates);
    res = harness::estimate(cfg, shocks, data.outcomes, 0);
  }
  Sink out(a.common.output);
  out.stream() << res.to_json(sim::parameter_names(cfg.structural.model)) << '\n';
  if (res.status == "error") {
    std::cerr << "gii: estimation failed: " << res.message << '\n';
    return kNumericalError;
  }
  return kOk;
}

struct McArgs {
  Common common;
  bool ci = false;
  double min_convergence = 0.98;
};

int run_mc(McArgs& a) {
  if (a.common.config.empty()) throw ConfigError("mc needs --config");
  harness::ExperimentConfig cfg = base_config(a.common, "");
  cfg.validate();
  harness::MCResult result = harness::run_mc(cfg, cfg.replications, cfg.threads);

  Sink out(cfg.output);
  harness::write_csv(out.stream(), result);
  std::ostream& summary = out.is_stdout() ? std::cerr : std::cout;
  summary << harness::render_table(result);

  if (!a.ci) return kOk;
  auto failures = harness::check_acceptance(result, cfg.acceptance);
  if (result.convergence_rate() < a.min_convergence) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "convergence rate %.3f below %.3f",
                  result.convergence_rate(), a.min_convergence);
    failures.emplace_back(buf);
  }
  for (const auto& f : failures) summary << "FAIL " << f << '\n';
  if (!failures.empty()) return kAcceptanceFailure;
  summary << "all acceptance bands satisfied\n";
  return kOk;
}

struct TableArgs {
  std::string input;
  std::string config;
  std::string format = "text";
  std::string output;
};

int run_table(TableArgs& a) {
  std::ifstream in(a.input);
  if (!in) throw ConfigError("cannot open result file '" + a.input + "'");
  harness::MCResult result = harness::read_csv(in);
  bool exclude_flagged = false;
  if (!a.config.empty()) {
    const auto cfg = harness::load_experiment(a.config);
    if (cfg.structural.beta.size() == static_cast<Eigen::Index>(result.names.size())) {
      result.truth = cfg.structural.beta;
    }
    exclude_flagged = cfg.exclude_flagged;
  }
  harness::aggregate(result, exclude_flagged);
  Sink out(a.output);
  std::ostream& os = out.stream();
  if (a.format == "csv") {
    os << "parameter,true,mean,sd,mean_se,se_ratio,n\n";
    for (const auto& g : result.aggregates) {
      os << g.parameter << ',' << g.truth << ',' << g.mean << ',' << g.sd << ','
         << g.mean_se << ',' << g.se_ratio << ',' << g.count << '\n';
    }
    os << "time," << result.mean_seconds << ",,,,," << result.rows.size() << '\n';
  } else if (a.format == "text") {
    os << harness::render_table(result);
  } else {
    throw ConfigError("--format must be 'text' or 'csv'");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized indirect inference for discrete-choice panels"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "emit a simulated dataset as CSV");
  add_common(simulate, sim_args.common);
  simulate->add_option("--model", sim_args.model, "M1..M5");
  simulate->add_option("--beta", sim_args.beta, "comma-separated true parameters");
  simulate->add_option("--n", sim_args.n, "number of individuals");
  simulate->add_option("--periods", sim_args.periods, "number of periods T");
  simulate->add_option("--unobserved", sim_args.unobserved, "leading unobserved periods (M3)");

  EstimateArgs est_args;
  auto* estimate = app.add_subcommand("estimate", "estimate on one dataset, print JSON");
  add_common(estimate, est_args.common);
  estimate->add_option("--model", est_args.model, "M1..M5");
  estimate->add_option("--data", est_args.data, "dataset CSV (default: simulate rep 0)");

  McArgs mc_args;
  auto* mc = app.add_subcommand("mc", "Monte Carlo replications to CSV plus summary");
  add_common(mc, mc_args.common);
  mc->add_flag("--ci", mc_args.ci, "check acceptance bands; exit 4 on failure");
  mc->add_option("--min-convergence", mc_args.min_convergence,
                 "required converged fraction in --ci mode");

  TableArgs table_args;
  auto* table = app.add_subcommand("table", "re-render a stored Monte Carlo CSV");
  table->add_option("input", table_args.input, "CSV written by mc")->required();
  table->add_option("-c,--config", table_args.config, "experiment JSON (true values)");
  table->add_option("--format", table_args.format, "text or csv");
  table->add_option("-o,--output", table_args.output, "output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*simulate) return run_simulate(sim_args);
    if (*estimate) return run_estimate(est_args);
    if (*mc) return run_mc(mc_args);
    if (*table) return run_table(table_args);
  } catch (const ConfigError& e) {
    std::cerr << "gii: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const Error& e) {
    std::cerr << "gii: " << e.what() << '\n';
    return kNumericalError;
  }
  return kOk;
}
