#include "fahmc/bench/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fahmc/trace.hpp"

namespace fahmc::bench {

namespace {

namespace pt = boost::property_tree;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  double value = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || end != t.data() + t.size() || t.empty())
    fail(field, "expected a number, got '" + text + "'");
  if (!std::isfinite(value)) fail(field, "must be finite");
  return value;
}

std::uint64_t to_uint(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || end != t.data() + t.size() || t.empty()) {
    // Accept integral scientific notation such as 1e7.
    double d = 0;
    const auto [e2, ec2] = std::from_chars(t.data(), t.data() + t.size(), d);
    if (ec2 != std::errc{} || e2 != t.data() + t.size() || d < 0 ||
        d != std::floor(d) || d > 1.8e19)
      fail(field, "expected a non-negative integer, got '" + text + "'");
    return static_cast<std::uint64_t>(d);
  }
  return value;
}

template <typename E>
E to_enum(const std::string& field, const std::string& text,
          const std::vector<std::pair<std::string, E>>& names) {
  const std::string t = trim(text);
  for (const auto& [name, value] : names)
    if (name == t) return value;
  std::string allowed;
  for (const auto& [name, _] : names)
    allowed += (allowed.empty() ? "" : "|") + name;
  fail(field, "expected one of " + allowed + ", got '" + text + "'");
}

template <typename E>
std::string enum_name(E value,
                      const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [name, v] : names)
    if (v == value) return name;
  return "?";
}

const std::vector<std::pair<std::string, ModelKind>> kModelKinds{
    {"quadratic", ModelKind::quadratic}, {"logistic", ModelKind::logistic}};
const std::vector<std::pair<std::string, NoiseKind>> kNoiseKinds{
    {"exact", NoiseKind::exact},
    {"gaussian", NoiseKind::additive_gaussian},
    {"minibatch", NoiseKind::minibatch}};
const std::vector<std::pair<std::string, Algorithm>> kAlgorithms{
    {"fa-hmc", Algorithm::fa_hmc},
    {"fa-ld", Algorithm::fa_ld},
    {"debias-fa-hmc", Algorithm::debias_fa_hmc},
    {"single-hmc", Algorithm::single_hmc}};
const std::vector<std::pair<std::string, DebiasAnchor>> kAnchors{
    {"lagged", DebiasAnchor::lagged}, {"current", DebiasAnchor::current}};
const std::vector<std::pair<std::string, ScheduleChoice>> kSchedules{
    {"constant", ScheduleChoice::constant},
    {"theorem", ScheduleChoice::theorem},
    {"dynamic", ScheduleChoice::dynamic},
    {"piecewise", ScheduleChoice::piecewise}};
const std::vector<std::pair<std::string, StoppingRule>> kRules{
    {"fixed", StoppingRule::fixed},
    {"w2", StoppingRule::w2},
    {"me", StoppingRule::me}};
const std::vector<std::pair<std::string, MomentPooling>> kPooling{
    {"isotropic", MomentPooling::isotropic},
    {"diagonal", MomentPooling::diagonal}};

// Reads one section, rejecting keys it does not consume.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree)
      : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) {
    seen_.insert(key);
    if (tree_ == nullptr) return std::nullopt;
    const auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return it->second.data();
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }

  void get(const std::string& key, double& out) {
    if (auto v = raw(key)) out = to_double(field(key), *v);
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (auto v = raw(key)) out = to_uint(field(key), *v);
  }
  void get(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = trim(*v);
  }
  void get(const std::string& key, std::optional<double>& out) {
    if (auto v = raw(key)) {
      if (trim(*v) == "auto")
        out.reset();
      else
        out = to_double(field(key), *v);
    }
  }
  void get(const std::string& key, std::optional<std::size_t>& out) {
    if (auto v = raw(key)) {
      if (trim(*v) == "auto")
        out.reset();
      else
        out = to_uint(field(key), *v);
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (auto v = raw(key)) {
      out.clear();
      for (const auto& item : split(*v, ',')) out.push_back(to_double(field(key), item));
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (auto v = raw(key)) {
      out.clear();
      for (const auto& item : split(*v, ',')) out.push_back(to_uint(field(key), item));
    }
  }
  template <typename E>
  void get(const std::string& key, E& out,
           const std::vector<std::pair<std::string, E>>& names) {
    if (auto v = raw(key)) out = to_enum(field(key), *v, names);
  }

  void reject_unknown() const {
    if (tree_ == nullptr) return;
    for (const auto& [key, _] : *tree_)
      if (!seen_.count(key)) fail(field(key), "unknown key");
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> seen_;
};

std::string num(double x) { return fahmc::detail::format_number(x); }

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += num(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

std::string optional_num(const std::optional<double>& x) {
  return x ? num(*x) : "auto";
}

void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) fail(field, what);
}

}  // namespace

std::string to_string(Algorithm a) { return enum_name(a, kAlgorithms); }
std::string to_string(ModelKind k) { return enum_name(k, kModelKinds); }

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  static const std::set<std::string> sections{
      "model", "federation", "schedule", "stopping", "output", "sweep"};
  for (const auto& [name, child] : tree) {
    if (child.empty() && !child.data().empty())
      fail(name, "key outside of a section");
    if (!sections.count(name)) fail(name, "unknown section");
  }
  auto section = [&](const std::string& name) {
    const auto it = tree.find(name);
    return Section(name, it == tree.not_found() ? nullptr : &it->second);
  };

  ExperimentConfig c;
  {
    auto s = section("model");
    s.get("kind", c.model.kind, kModelKinds);
    std::uint64_t u = c.model.dim;
    s.get("dim", u);
    c.model.dim = u;
    s.get("means", c.model.means);
    s.get("precisions", c.model.precisions);
    s.get("mean_spread", c.model.mean_spread);
    s.get("data", c.model.data);
    u = c.model.samples;
    s.get("samples", u);
    c.model.samples = u;
    s.get("prior_precision", c.model.prior_precision);
    s.get("feature_scale", c.model.feature_scale);
    s.get("data_seed", c.model.data_seed);
    s.get("noise", c.model.noise, kNoiseKinds);
    s.get("noise_variance", c.model.noise_variance);
    u = c.model.batch_size;
    s.get("batch_size", u);
    c.model.batch_size = u;
    s.reject_unknown();
  }
  {
    auto s = section("federation");
    s.get("algorithm", c.federation.algorithm, kAlgorithms);
    std::uint64_t u = c.federation.nodes;
    s.get("nodes", u);
    c.federation.nodes = u;
    s.get("weights", c.federation.weights);
    u = c.federation.local_steps;
    s.get("local_steps", u);
    c.federation.local_steps = u;
    s.get("leapfrog_steps", c.federation.leapfrog_steps);
    s.get("rho", c.federation.rho);
    s.get("seed", c.federation.seed);
    s.get("debias_anchor", c.federation.debias_anchor, kAnchors);
    s.get("theta0", c.federation.theta0);
    s.reject_unknown();
  }
  {
    auto s = section("schedule");
    s.get("kind", c.schedule.kind, kSchedules);
    s.get("eta", c.schedule.eta);
    s.get("eta_dim_exponent", c.schedule.eta_dim_exponent);
    s.get("epsilon", c.schedule.epsilon);
    s.get("C", c.schedule.C);
    s.get("sigma_g", c.schedule.sigma_g);
    s.get("L", c.schedule.L);
    s.get("mu", c.schedule.mu);
    s.get("D", c.schedule.D);
    s.get("c_d", c.schedule.c_d);
    if (auto v = s.raw("breakpoints")) {
      c.schedule.breakpoints.clear();
      for (const auto& item : split(*v, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
          fail(s.field("breakpoints"), "expected start:eta pairs");
        c.schedule.breakpoints.emplace_back(
            to_uint(s.field("breakpoints"), item.substr(0, colon)),
            to_double(s.field("breakpoints"), item.substr(colon + 1)));
      }
    }
    s.reject_unknown();
  }
  {
    auto s = section("stopping");
    s.get("rule", c.stopping.rule, kRules);
    std::uint64_t u = c.stopping.iterations;
    s.get("iterations", u);
    c.stopping.iterations = u;
    s.get("threshold", c.stopping.threshold);
    u = c.stopping.max_iterations;
    s.get("max_iterations", u);
    c.stopping.max_iterations = u;
    u = c.stopping.record_every;
    s.get("record_every", u);
    c.stopping.record_every = u;
    u = c.stopping.replicates;
    s.get("replicates", u);
    c.stopping.replicates = u;
    u = c.stopping.ensembles;
    s.get("ensembles", u);
    c.stopping.ensembles = u;
    s.get("moments", c.stopping.moments, kPooling);
    s.reject_unknown();
  }
  {
    auto s = section("output");
    s.get("trace", c.output.trace);
    s.get("samples", c.output.samples);
    s.get("reference", c.output.reference);
    s.get("summary", c.output.summary);
    s.get("table", c.output.table);
    s.get("burn_in", c.output.burn_in);
    s.reject_unknown();
  }
  {
    auto s = section("sweep");
    s.get("eta_list", c.sweep.eta_list);
    s.get("k_grid", c.sweep.k_grid);
    s.get("T_list", c.sweep.T_list);
    s.get("d_list", c.sweep.d_list);
    s.get("eps_list", c.sweep.eps_list);
    s.reject_unknown();
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  return parse_config(in);
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto& m = c.model;
  o << "[model]\n"
    << "kind = " << enum_name(m.kind, kModelKinds) << '\n'
    << "dim = " << m.dim << '\n'
    << "means = " << join(m.means) << '\n'
    << "precisions = " << join(m.precisions) << '\n'
    << "mean_spread = " << num(m.mean_spread) << '\n'
    << "data = " << m.data << '\n'
    << "samples = " << m.samples << '\n'
    << "prior_precision = " << num(m.prior_precision) << '\n'
    << "feature_scale = " << num(m.feature_scale) << '\n'
    << "data_seed = " << m.data_seed << '\n'
    << "noise = " << enum_name(m.noise, kNoiseKinds) << '\n'
    << "noise_variance = " << num(m.noise_variance) << '\n'
    << "batch_size = " << m.batch_size << "\n\n";
  const auto& f = c.federation;
  o << "[federation]\n"
    << "algorithm = " << enum_name(f.algorithm, kAlgorithms) << '\n'
    << "nodes = " << f.nodes << '\n'
    << "weights = " << join(f.weights) << '\n'
    << "local_steps = " << f.local_steps << '\n'
    << "leapfrog_steps = "
    << (f.leapfrog_steps ? std::to_string(*f.leapfrog_steps) : "auto") << '\n'
    << "rho = " << num(f.rho) << '\n'
    << "seed = " << f.seed << '\n'
    << "debias_anchor = " << enum_name(f.debias_anchor, kAnchors) << '\n'
    << "theta0 = " << num(f.theta0) << "\n\n";
  const auto& s = c.schedule;
  std::string bps;
  for (const auto& [start, eta] : s.breakpoints)
    bps += (bps.empty() ? "" : ",") + std::to_string(start) + ":" + num(eta);
  o << "[schedule]\n"
    << "kind = " << enum_name(s.kind, kSchedules) << '\n'
    << "eta = " << num(s.eta) << '\n'
    << "eta_dim_exponent = " << num(s.eta_dim_exponent) << '\n'
    << "epsilon = " << num(s.epsilon) << '\n'
    << "C = " << num(s.C) << '\n'
    << "sigma_g = " << optional_num(s.sigma_g) << '\n'
    << "L = " << optional_num(s.L) << '\n'
    << "mu = " << optional_num(s.mu) << '\n'
    << "D = " << num(s.D) << '\n'
    << "c_d = " << optional_num(s.c_d) << '\n'
    << "breakpoints = " << bps << "\n\n";
  const auto& st = c.stopping;
  o << "[stopping]\n"
    << "rule = " << enum_name(st.rule, kRules) << '\n'
    << "iterations = " << st.iterations << '\n'
    << "threshold = " << num(st.threshold) << '\n'
    << "max_iterations = " << st.max_iterations << '\n'
    << "record_every = " << st.record_every << '\n'
    << "replicates = " << st.replicates << '\n'
    << "ensembles = " << st.ensembles << '\n'
    << "moments = " << enum_name(st.moments, kPooling) << "\n\n";
  const auto& out = c.output;
  o << "[output]\n"
    << "trace = " << out.trace << '\n'
    << "samples = " << out.samples << '\n'
    << "reference = " << out.reference << '\n'
    << "summary = " << out.summary << '\n'
    << "table = " << out.table << '\n'
    << "burn_in = " << num(out.burn_in) << "\n\n";
  const auto& sw = c.sweep;
  o << "[sweep]\n"
    << "eta_list = " << join(sw.eta_list) << '\n'
    << "k_grid = " << join(sw.k_grid) << '\n'
    << "T_list = " << join(sw.T_list) << '\n'
    << "d_list = " << join(sw.d_list) << '\n'
    << "eps_list = " << join(sw.eps_list) << '\n';
  return o.str();
}

void ExperimentConfig::validate() const {
  const auto& m = model;
  const auto& f = federation;
  check(m.dim >= 1, "model.dim", "must be >= 1");
  check(f.nodes >= 1, "federation.nodes", "must be >= 1");
  if (m.kind == ModelKind::quadratic) {
    check(m.means.size() == f.nodes, "model.means",
          "needs one value per node (" + std::to_string(f.nodes) + ")");
    check(m.precisions.size() == f.nodes, "model.precisions",
          "needs one value per node (" + std::to_string(f.nodes) + ")");
    for (double p : m.precisions)
      check(p > 0, "model.precisions", "must be positive");
    check(m.noise != NoiseKind::minibatch, "model.noise",
          "minibatch needs a logistic (data-backed) model");
  } else {
    check(!m.data.empty() || m.samples >= f.nodes, "model.samples",
          "must be >= federation.nodes");
    check(m.prior_precision >= 0, "model.prior_precision", "must be >= 0");
    check(f.weights.empty(), "federation.weights",
          "logistic fleets use n_c/n weights; leave empty");
  }
  check(m.mean_spread >= 0, "model.mean_spread", "must be >= 0");
  check(m.feature_scale > 0, "model.feature_scale", "must be > 0");
  check(m.noise_variance >= 0, "model.noise_variance", "must be >= 0");
  if (m.noise == NoiseKind::minibatch)
    check(m.batch_size >= 1, "model.batch_size", "must be >= 1 for minibatch");

  if (!f.weights.empty()) {
    check(f.weights.size() == f.nodes, "federation.weights",
          "needs one weight per node");
    double total = 0;
    for (double w : f.weights) {
      check(w > 0, "federation.weights", "must be positive");
      total += w;
    }
    check(std::abs(total - 1) <= 1e-12, "federation.weights", "must sum to 1");
  }
  check(f.local_steps >= 1, "federation.local_steps", "must be >= 1");
  check(!f.leapfrog_steps || *f.leapfrog_steps >= 1,
        "federation.leapfrog_steps", "must be >= 1 or auto");
  check(f.rho >= 0 && f.rho <= 1, "federation.rho", "must lie in [0, 1]");

  const auto& s = schedule;
  switch (s.kind) {
    case ScheduleChoice::constant:
      check(s.eta > 0, "schedule.eta", "must be > 0");
      break;
    case ScheduleChoice::piecewise:
      check(!s.breakpoints.empty() && s.breakpoints.front().first == 0,
            "schedule.breakpoints", "must start at iteration 0");
      for (std::size_t i = 0; i < s.breakpoints.size(); ++i) {
        check(s.breakpoints[i].second > 0, "schedule.breakpoints",
              "stepsizes must be > 0");
        if (i > 0) {
          check(s.breakpoints[i].first > s.breakpoints[i - 1].first,
                "schedule.breakpoints", "starts must increase");
          check(s.breakpoints[i].second <= s.breakpoints[i - 1].second,
                "schedule.breakpoints", "stepsizes must not increase");
        }
      }
      break;
    case ScheduleChoice::theorem:
    case ScheduleChoice::dynamic:
      check(f.leapfrog_steps.has_value(), "federation.leapfrog_steps",
            "must be explicit for theorem/dynamic schedules");
      check(s.epsilon > 0, "schedule.epsilon", "must be > 0");
      check(s.C > 0, "schedule.C", "must be > 0");
      check(s.D > 0, "schedule.D", "must be > 0");
      check(!s.sigma_g || *s.sigma_g >= 0, "schedule.sigma_g", "must be >= 0");
      check(!s.L || *s.L > 0, "schedule.L", "must be > 0");
      check(!s.mu || *s.mu > 0, "schedule.mu", "must be > 0");
      check(!s.c_d || *s.c_d > 0, "schedule.c_d", "must be > 0");
      check(!(m.noise == NoiseKind::minibatch && !s.sigma_g),
            "schedule.sigma_g", "must be set explicitly for minibatch noise");
      break;
  }

  const auto& st = stopping;
  check(st.iterations >= 1, "stopping.iterations", "must be >= 1");
  check(st.threshold > 0, "stopping.threshold", "must be > 0");
  check(st.max_iterations >= 1, "stopping.max_iterations", "must be >= 1");
  check(st.record_every >= 1, "stopping.record_every", "must be >= 1");
  check(st.replicates >= 1, "stopping.replicates", "must be >= 1");
  check(st.ensembles >= 1, "stopping.ensembles", "must be >= 1");
  if (st.rule == StoppingRule::w2)
    check(m.kind == ModelKind::quadratic, "stopping.rule",
          "w2 needs a quadratic fleet (closed-form target)");
  if (st.rule != StoppingRule::fixed)
    check(st.replicates >= 2, "stopping.replicates",
          "threshold rules need >= 2 replicates");

  check(output.burn_in >= 0 && output.burn_in < 1, "output.burn_in",
        "must lie in [0, 1)");
  for (double e : sweep.eta_list) check(e > 0, "sweep.eta_list", "must be > 0");
  for (auto k : sweep.k_grid) check(k >= 1, "sweep.k_grid", "must be >= 1");
  for (auto t : sweep.T_list) check(t >= 1, "sweep.T_list", "must be >= 1");
  for (auto d : sweep.d_list) check(d >= 1, "sweep.d_list", "must be >= 1");
  for (double e : sweep.eps_list) check(e > 0, "sweep.eps_list", "must be > 0");
}

}  // namespace fahmc::bench
