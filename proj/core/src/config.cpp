#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gii/error.hpp"
#include "gii/harness.hpp"

namespace gii::harness {
namespace {

using nlohmann::json;

// Typed access to one JSON object, reporting problems by JSON path.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [key, value] : j_.items()) {
      if (!known.count(key)) fail("unknown field '" + key + "'");
    }
  }

  bool has(const char* key) const {
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json& at(const char* key) const {
    if (!has(key)) fail(std::string("missing required field '") + key + "'");
    return j_.at(key);
  }

  Node child(const char* key) const { return Node(at(key), where(key)); }

  std::string where(const char* key) const { return path_ + "." + key; }

  double number(const char* key) const {
    const json& v = at(key);
    if (!v.is_number()) fail_at(key, "expected a number");
    return v.get<double>();
  }
  double number(const char* key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  long long integer(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) fail_at(key, "expected an integer");
    return v.get<long long>();
  }
  long long integer(const char* key, long long fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) fail_at(key, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) fail_at(key, "expected a string");
    return v.get<std::string>();
  }
  std::string string(const char* key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  Eigen::VectorXd vector(const char* key) const {
    return to_vector(at(key), where(key));
  }

  template <class F>
  auto convert(const char* key, F&& parse) const {
    try {
      return parse(string(key));
    } catch (const ConfigError& e) {
      fail_at(key, e.what());
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(path_ + ": " + msg);
  }
  [[noreturn]] void fail_at(const char* key, const std::string& msg) const {
    throw ConfigError(where(key) + ": " + msg);
  }

  static Eigen::VectorXd to_vector(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number()) {
        throw ConfigError(path + "[" + std::to_string(k) + "]: expected a number");
      }
      out[static_cast<Eigen::Index>(k)] = v[k].get<double>();
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
};

int to_int(long long v, const std::string& path) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(path + ": value out of range");
  }
  return static_cast<int>(v);
}

json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("$: invalid JSON: ") + e.what());
  }
  const Node root(doc, "$");
  root.allow({"structural", "auxiliary", "criterion", "schedule", "second_step",
              "optimizer", "bounds", "starts", "replications", "base_seed",
              "start_at_truth", "compute_se", "exclude_flagged", "threads",
              "criterion_threads", "output", "acceptance"});

  ExperimentConfig cfg;
  {
    const Node s = root.child("structural");
    s.allow({"model", "beta", "n", "periods", "unobserved"});
    cfg.structural.model = s.convert("model", sim::parse_model_id);
    cfg.structural.beta = s.vector("beta");
    cfg.structural.n = to_int(s.integer("n"), s.where("n"));
    cfg.structural.periods = to_int(s.integer("periods", 1), s.where("periods"));
    cfg.structural.unobserved = to_int(s.integer("unobserved", 0), s.where("unobserved"));
  }
  cfg.aux_variant = cfg.structural.model == sim::ModelId::M5 ? 1 : 3;
  if (root.has("auxiliary")) {
    const Node a = root.child("auxiliary");
    a.allow({"variant"});
    cfg.aux_variant = to_int(a.integer("variant", cfg.aux_variant), a.where("variant"));
  }
  if (root.has("criterion")) {
    const Node c = root.child("criterion");
    c.allow({"kind", "kernel", "dyn_mode", "jackknife", "fd_step"});
    if (c.has("kind")) cfg.kind = c.convert("kind", crit::parse_kind);
    if (c.has("kernel")) cfg.kernel = c.convert("kernel", smooth::parse_kernel_family);
    if (c.has("dyn_mode")) cfg.dyn_mode = c.convert("dyn_mode", sim::parse_dyn_mode);
    if (c.has("jackknife")) {
      const Node jk = c.child("jackknife");
      jk.allow({"order", "delta"});
      cfg.jackknife_order = to_int(jk.integer("order", 0), jk.where("order"));
      cfg.jackknife_delta = jk.number("delta", 0.5);
    }
    if (c.has("fd_step")) cfg.fd_step = c.number("fd_step");
  }
  if (root.has("schedule")) {
    const json& arr = root.at("schedule");
    if (!arr.is_array()) root.fail_at("schedule", "expected an array");
    cfg.schedule.clear();
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const Node step(arr[k], "$.schedule[" + std::to_string(k) + "]");
      step.allow({"lambda", "sims"});
      cfg.schedule.push_back(
          {step.number("lambda"), to_int(step.integer("sims"), step.where("sims"))});
    }
  }
  if (root.has("second_step")) {
    const std::string s = root.string("second_step");
    if (s == "full") {
      cfg.second_step = SecondStep::full;
    } else if (s == "newton_step") {
      cfg.second_step = SecondStep::newton_step;
    } else {
      root.fail_at("second_step", "expected 'full' or 'newton_step'");
    }
  }
  if (root.has("optimizer")) {
    const Node o = root.child("optimizer");
    o.allow({"routine", "c1", "c2", "grad_tol", "max_iter", "max_line_search",
             "tr_init_radius", "tr_eta_accept", "eig_tol", "check_second_order"});
    opt::OptimizerConfig& oc = cfg.optimizer;
    if (o.has("routine")) oc.routine = o.convert("routine", opt::parse_routine);
    oc.c1 = o.number("c1", oc.c1);
    oc.c2 = o.number("c2", oc.c2);
    oc.grad_tol = o.number("grad_tol", oc.grad_tol);
    oc.max_iter = to_int(o.integer("max_iter", oc.max_iter), o.where("max_iter"));
    oc.max_line_search =
        to_int(o.integer("max_line_search", oc.max_line_search), o.where("max_line_search"));
    oc.tr_init_radius = o.number("tr_init_radius", oc.tr_init_radius);
    oc.tr_eta_accept = o.number("tr_eta_accept", oc.tr_eta_accept);
    oc.eig_tol = o.number("eig_tol", oc.eig_tol);
    oc.check_second_order = o.boolean("check_second_order", oc.check_second_order);
  }
  if (root.has("bounds")) {
    const Node b = root.child("bounds");
    b.allow({"lower", "upper"});
    cfg.bounds = crit::Bounds{b.vector("lower"), b.vector("upper")};
  }
  if (root.has("starts")) {
    const json& arr = root.at("starts");
    if (!arr.is_array()) root.fail_at("starts", "expected an array of vectors");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      cfg.starts.push_back(
          Node::to_vector(arr[k], "$.starts[" + std::to_string(k) + "]"));
    }
  }
  cfg.replications = to_int(root.integer("replications", 1), "$.replications");
  const long long seed = root.integer("base_seed", 1);
  if (seed < 0) root.fail_at("base_seed", "must be non-negative");
  cfg.base_seed = static_cast<std::uint64_t>(seed);
  cfg.start_at_truth = root.boolean("start_at_truth", true);
  cfg.compute_se = root.boolean("compute_se", true);
  cfg.exclude_flagged = root.boolean("exclude_flagged", false);
  cfg.threads = to_int(root.integer("threads", 1), "$.threads");
  cfg.criterion_threads = to_int(root.integer("criterion_threads", 1), "$.criterion_threads");
  cfg.output = root.string("output", "");
  if (root.has("acceptance")) {
    const json& arr = root.at("acceptance");
    if (!arr.is_array()) root.fail_at("acceptance", "expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const Node band(arr[k], "$.acceptance[" + std::to_string(k) + "]");
      band.allow({"parameter", "statistic", "target", "tolerance", "relative"});
      cfg.acceptance.push_back({band.string("parameter"), band.string("statistic"),
                                band.number("target"), band.number("tolerance"),
                                band.boolean("relative", false)});
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_experiment(text.str());
}

std::string to_json(const ExperimentConfig& cfg) {
  json j;
  j["structural"] = {{"model", sim::to_string(cfg.structural.model)},
                     {"beta", vector_json(cfg.structural.beta)},
                     {"n", cfg.structural.n},
                     {"periods", cfg.structural.periods},
                     {"unobserved", cfg.structural.unobserved}};
  j["auxiliary"] = {{"variant", cfg.aux_variant}};
  j["criterion"] = {{"kind", crit::to_string(cfg.kind)},
                    {"kernel", smooth::to_string(cfg.kernel)},
                    {"dyn_mode", sim::to_string(cfg.dyn_mode)},
                    {"jackknife", {{"order", cfg.jackknife_order},
                                   {"delta", cfg.jackknife_delta}}}};
  if (cfg.fd_step) j["criterion"]["fd_step"] = *cfg.fd_step;
  j["schedule"] = json::array();
  for (const auto& s : cfg.schedule) {
    j["schedule"].push_back({{"lambda", s.lambda}, {"sims", s.sims}});
  }
  j["second_step"] = cfg.second_step == SecondStep::full ? "full" : "newton_step";
  const opt::OptimizerConfig& o = cfg.optimizer;
  j["optimizer"] = {{"routine", opt::to_string(o.routine)},
                    {"c1", o.c1},
                    {"c2", o.c2},
                    {"grad_tol", o.grad_tol},
                    {"max_iter", o.max_iter},
                    {"max_line_search", o.max_line_search},
                    {"tr_init_radius", o.tr_init_radius},
                    {"tr_eta_accept", o.tr_eta_accept},
                    {"eig_tol", o.eig_tol},
                    {"check_second_order", o.check_second_order}};
  if (cfg.bounds) {
    j["bounds"] = {{"lower", vector_json(cfg.bounds->lower)},
                   {"upper", vector_json(cfg.bounds->upper)}};
  }
  if (!cfg.starts.empty()) {
    j["starts"] = json::array();
    for (const auto& s : cfg.starts) j["starts"].push_back(vector_json(s));
  }
  j["replications"] = cfg.replications;
  j["base_seed"] = cfg.base_seed;
  j["start_at_truth"] = cfg.start_at_truth;
  j["compute_se"] = cfg.compute_se;
  j["exclude_flagged"] = cfg.exclude_flagged;
  j["threads"] = cfg.threads;
  j["criterion_threads"] = cfg.criterion_threads;
  j["output"] = cfg.output;
  if (!cfg.acceptance.empty()) {
    j["acceptance"] = json::array();
    for (const auto& b : cfg.acceptance) {
      j["acceptance"].push_back({{"parameter", b.parameter},
                                 {"statistic", b.statistic},
                                 {"target", b.target},
                                 {"tolerance", b.tolerance},
                                 {"relative", b.relative}});
    }
  }
  return j.dump(2);
}

}  // namespace gii::harness
