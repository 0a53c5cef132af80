// fahmc: command-line driver for the federated HMC experiments.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fahmc/bench/config.hpp"
#include "fahmc/bench/experiments.hpp"
#include "fahmc/bench/io.hpp"
#include "fahmc/types.hpp"

namespace fs = std::filesystem;
using namespace fahmc;
using namespace fahmc::bench;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, diverged = 3, not_converged = 4 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out = ".";
};

ExperimentConfig load(const Flags& f) {
  if (f.config.empty()) throw ConfigError("--config: required for this command");
  ExperimentConfig c = load_config(f.config);
  if (f.seed) c.federation.seed = *f.seed;
  return c;
}

fs::path in_out(const Flags& f, const std::string& name) {
  return fs::path(f.out) / name;
}

int cmd_run(const Flags& f) {
  const ExperimentConfig c = load(f);
  const RunResult r = run_experiment(c, f.workers, f.out);
  if (!c.output.trace.empty()) write_trace_csv(in_out(f, c.output.trace), r.trace);
  if (!c.output.samples.empty()) write_snapshots(in_out(f, c.output.samples), r.trace);
  const std::string summary = run_summary_json(c, r);
  if (!c.output.summary.empty()) write_text(in_out(f, c.output.summary), summary);
  std::cout << summary;
  if (r.threshold && !r.threshold->rounds.front()) {
    std::cerr << "fahmc: threshold not reached within stopping.max_iterations\n";
    return not_converged;
  }
  return ok;
}

std::string table_name(const ExperimentConfig& c, const char* fallback) {
  return c.output.table.empty() ? fallback : c.output.table;
}

int cmd_dim_vs_comm(const Flags& f) {
  const ExperimentConfig c = load(f);
  const DimCommResult r = dim_vs_comm(c, f.workers);
  write_text(in_out(f, table_name(c, "dim_vs_comm.csv")), dim_vs_comm_csv(r));
  std::cout << dim_vs_comm_json(c, r);
  for (const auto& p : r.points)
    if (!p.rounds) return not_converged;
  return ok;
}

int cmd_sweep_stepsize(const Flags& f) {
  const ExperimentConfig c = load(f);
  const auto rows = sweep_stepsize(c, f.workers, f.out);
  const std::string text = sweep_stepsize_csv(rows);
  write_text(in_out(f, table_name(c, "sweep_stepsize.csv")), text);
  std::cout << text;
  return ok;
}

int cmd_sweep_local(const Flags& f) {
  const ExperimentConfig c = load(f);
  const auto rows = sweep_local(c, f.workers, f.out);
  const std::string text = sweep_local_csv(rows);
  write_text(in_out(f, table_name(c, "sweep_local.csv")), text);
  std::cout << text;
  for (const auto& r : rows)
    if (!r.rounds) return not_converged;
  return ok;
}

int cmd_compare(const std::string& a, const std::string& b) {
  std::cout << compare_json(compare_samples(read_snapshots(a), read_snapshots(b)));
  return ok;
}

int cmd_gen_data(const Flags& f, const std::string& path) {
  const ExperimentConfig c = load(f);
  const fs::path target = in_out(f, path);
  write_text(target, logistic_csv(generate_logistic_data(c.model)));
  std::cout << target.string() << '\n';
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated averaging HMC experiments"};
  app.require_subcommand(1);
  Flags flags;
  auto add_flags = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", flags.config, "experiment INI file");
    if (needs_config) opt->required();
    sub->add_option("--seed", flags.seed, "overrides federation.seed");
    sub->add_option("--workers", flags.workers, "worker threads")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", flags.out, "output directory");
  };

  auto* run = app.add_subcommand("run", "run one sampler and write its trace");
  add_flags(run, true);
  auto* dim = app.add_subcommand("dim-vs-comm", "rounds to a W2 threshold vs d");
  add_flags(dim, true);
  auto* sweep = app.add_subcommand("sweep-stepsize", "ME vs eta for FA-HMC and FA-LD");
  add_flags(sweep, true);
  auto* local = app.add_subcommand("sweep-local", "rounds to an ME threshold vs T");
  add_flags(local, true);
  std::string sample_a, sample_b;
  auto* compare = app.add_subcommand("compare", "ME and moment W2 of two snapshot files");
  compare->add_option("samplesA", sample_a)->required();
  compare->add_option("samplesB", sample_b)->required();
  add_flags(compare, false);
  std::string data_path = "logistic_data.csv";
  auto* gen = app.add_subcommand("gen-logistic-data", "write the synthetic logistic data set");
  gen->add_option("path", data_path, "CSV file, relative to --out");
  add_flags(gen, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*run) return cmd_run(flags);
    if (*dim) return cmd_dim_vs_comm(flags);
    if (*sweep) return cmd_sweep_stepsize(flags);
    if (*local) return cmd_sweep_local(flags);
    if (*compare) return cmd_compare(sample_a, sample_b);
    if (*gen) return cmd_gen_data(flags, data_path);
  } catch (const ConfigError& e) {
    std::cerr << "fahmc: config error: " << e.what() << '\n';
    return config_error;
  } catch (const ContractViolation& e) {
    std::cerr << "fahmc: invalid input: " << e.what() << '\n';
    return config_error;
  } catch (const UnsupportedCombination& e) {
    std::cerr << "fahmc: unsupported: " << e.what() << '\n';
    return config_error;
  } catch (const DivergenceError& e) {
    std::cerr << "fahmc: diverged: " << e.what() << '\n';
    return diverged;
  } catch (const std::exception& e) {
    std::cerr << "fahmc: " << e.what() << '\n';
    return failure;
  }
  return failure;
}
