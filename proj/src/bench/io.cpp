#include "fahmc/bench/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fahmc::bench {

namespace {

using nlohmann::ordered_json;
using fahmc::detail::format_number;

std::string opt(const std::optional<double>& x) {
  return x ? format_number(*x) : std::string();
}

// JSON has no inf/nan; those become null.
ordered_json number(double x) {
  return std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
      cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  fahmc::detail::write_atomically(path, false,
                                  [&](std::ostream& out) { out << text; });
}

LogisticData<double> read_logistic_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("model.data: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("model.data: empty file");
  const auto header = split_csv(line);
  if (header.size() < 2 || header.back() != "y")
    throw ConfigError("model.data: header must be x_1,...,x_d,y");
  for (std::size_t j = 0; j + 1 < header.size(); ++j)
    if (header[j] != "x_" + std::to_string(j + 1))
      throw ConfigError("model.data: header must be x_1,...,x_d,y");
  const std::size_t d = header.size() - 1;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != d + 1)
      throw ConfigError("model.data: line " + std::to_string(line_no) +
                        " has the wrong number of fields");
    std::vector<double> row;
    for (const auto& cell : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError("model.data: line " + std::to_string(line_no) +
                          ": bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("model.data: no rows");
  LogisticData<double> data;
  const auto n = static_cast<Eigen::Index>(rows.size());
  data.features.resize(n, static_cast<Eigen::Index>(d));
  data.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      data.features(i, static_cast<Eigen::Index>(j)) = rows[std::size_t(i)][j];
    data.labels[i] = rows[std::size_t(i)][d];
  }
  return data;
}

std::string logistic_csv(const LogisticData<double>& data) {
  std::ostringstream out;
  const Eigen::Index d = data.features.cols();
  for (Eigen::Index j = 0; j < d; ++j) out << "x_" << (j + 1) << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      out << format_number(data.features(i, j)) << ',';
    // labels may be stored as ±1; the file uses 0/1
    out << (data.labels[i] > 0 ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string run_summary_json(const ExperimentConfig& c, const RunResult& r) {
  ordered_json j;
  j["command"] = "run";
  j["algorithm"] = to_string(c.federation.algorithm);
  j["model"] = to_string(c.model.kind);
  j["dim"] = c.model.dim;
  j["nodes"] = c.federation.nodes;
  j["seed"] = c.federation.seed;
  j["iterations"] = c.stopping.iterations;
  j["rows"] = r.trace.rows();
  j["gradient_evals"] = r.gradient_evals;
  j["wall_seconds"] = r.wall_seconds;
  ordered_json finals = ordered_json::object();
  for (const auto& [name, value] : r.final_metrics) finals[name] = number(value);
  j["final"] = finals;
  if (r.threshold) {
    const auto& t = *r.threshold;
    const std::string key =
        c.stopping.rule == StoppingRule::w2 ? "rounds_to_w2" : "rounds_to_me";
    j[key] = t.rounds.front() ? ordered_json(*t.rounds.front())
                              : ordered_json(nullptr);
    j["threshold"] = t.thresholds.front();
    j["threshold_metric"] =
        c.stopping.rule == StoppingRule::w2 ? "w2_squared" : "me";
    j["threshold_final_value"] = number(t.final_metric);
    j["threshold_iterations"] = t.iterations;
    j["replicates"] = c.stopping.replicates;
    j["ensemble_gradient_evals"] = t.gradient_evals;
    j["converged"] = t.rounds.front().has_value();
  }
  return j.dump(2) + "\n";
}

std::string dim_vs_comm_csv(const DimCommResult& r) {
  std::ostringstream out;
  out << "kind,d,eta,rounds,rounds_se,rounds_sq,alpha,beta,r2\n";
  for (const auto& p : r.points) {
    out << (p.rounds ? "point" : "failure") << ',' << p.dim << ','
        << format_number(p.eta) << ',' << opt(p.rounds) << ','
        << opt(p.rounds_se) << ','
        << (p.rounds ? format_number(*p.rounds * *p.rounds) : std::string())
        << ",,,\n";
  }
  if (r.fit)
    out << "fit,,,,,," << format_number(r.fit->slope) << ','
        << format_number(r.fit->intercept) << ',' << format_number(r.fit->r2)
        << '\n';
  return out.str();
}

std::string dim_vs_comm_json(const ExperimentConfig& c, const DimCommResult& r) {
  ordered_json j;
  j["command"] = "dim-vs-comm";
  j["threshold_w2_squared"] = c.stopping.threshold;
  j["replicates"] = c.stopping.replicates;
  j["ensembles"] = c.stopping.ensembles;
  ordered_json pts = ordered_json::array();
  bool failures = false;
  for (const auto& p : r.points) {
    ordered_json e;
    e["d"] = p.dim;
    e["eta"] = p.eta;
    e["rounds"] = p.rounds ? ordered_json(*p.rounds) : ordered_json(nullptr);
    e["rounds_se"] = p.rounds_se ? ordered_json(*p.rounds_se) : ordered_json(nullptr);
    failures = failures || !p.rounds;
    pts.push_back(e);
  }
  j["points"] = pts;
  if (r.fit)
    j["fit"] = {{"alpha", r.fit->slope},
                {"beta", r.fit->intercept},
                {"r2", r.fit->r2}};
  else
    j["fit"] = nullptr;
  // Per-coordinate target moments; the published recipe quotes 16.2 / 1.6.
  if (r.target_at_first_dim.dim() > 0)
    j["target"] = {{"mean", r.target_at_first_dim.mean[0]},
                   {"var", r.target_at_first_dim.var[0]},
                   {"published_mean", 16.2},
                   {"published_var", 1.6}};
  j["failures"] = failures;
  return j.dump(2) + "\n";
}

std::string sweep_stepsize_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "algorithm,eta,K,T,me,n_samples\n";
  for (const auto& r : rows)
    out << r.algorithm << ',' << format_number(r.eta) << ',' << r.K << ','
        << r.T << ',' << format_number(r.me) << ',' << r.n_samples << '\n';
  return out.str();
}

std::string sweep_local_csv(const std::vector<LocalRow>& rows) {
  std::ostringstream out;
  out << "T,epsilon,rounds,iterations,status\n";
  for (const auto& r : rows)
    out << r.T << ',' << format_number(r.epsilon) << ','
        << (r.rounds ? std::to_string(*r.rounds) : std::string()) << ','
        << r.iterations << ',' << (r.rounds ? "ok" : "cap") << '\n';
  return out.str();
}

std::string compare_json(const CompareResult& r) {
  ordered_json j;
  j["command"] = "compare";
  j["n"] = r.n;
  j["d"] = r.dim;
  j["me"] = number(r.me);
  j["w2_moments"] = number(r.w2_moments);
  return j.dump(2) + "\n";
}

}  // namespace fahmc::bench
