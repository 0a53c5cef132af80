#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fahmc/federation.hpp"
#include "fahmc/models.hpp"

namespace fahmc::bench {

/// Invalid experiment configuration. The message starts with the
/// offending field path, e.g. "federation.rho: must lie in [0, 1]".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { quadratic, logistic };
enum class Algorithm { fa_hmc, fa_ld, debias_fa_hmc, single_hmc };
enum class ScheduleChoice { constant, theorem, dynamic, piecewise };
enum class StoppingRule { fixed, w2, me };
enum class MomentPooling { isotropic, diagonal };

struct ModelSpec {
  ModelKind kind = ModelKind::quadratic;
  std::size_t dim = 2;
  // Quadratic fleet: node c has mean means[c]·1_d (plus an optional
  // seeded N(0, mean_spread²) offset per coordinate) and precision
  // precisions[c].
  std::vector<double> means{0.0};
  std::vector<double> precisions{1.0};
  double mean_spread = 0.0;
  // Logistic fleet: rows from `data` (CSV x_1..x_d,y) or synthesized.
  std::string data;
  std::size_t samples = 1000;
  double prior_precision = 1.0;
  double feature_scale = 1.0;
  std::uint64_t data_seed = 0;
  NoiseKind noise = NoiseKind::exact;
  double noise_variance = 0.0;
  std::size_t batch_size = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct FederationSpec {
  Algorithm algorithm = Algorithm::fa_hmc;
  std::size_t nodes = 1;
  std::vector<double> weights;  // empty: uniform, or n_c/n for logistic
  std::size_t local_steps = 1;
  std::optional<std::size_t> leapfrog_steps = 1;  // nullopt: heuristic
  double rho = 1.0;
  std::uint64_t seed = 0;
  DebiasAnchor debias_anchor = DebiasAnchor::lagged;
  double theta0 = 0.0;

  friend bool operator==(const FederationSpec&, const FederationSpec&) = default;
};

struct ScheduleSpec {
  ScheduleChoice kind = ScheduleChoice::constant;
  double eta = 0.1;
  double eta_dim_exponent = 0.0;  // constant: η = eta / d^exponent
  double epsilon = 0.1;
  double C = 1.0;
  std::optional<double> sigma_g;  // nullopt: derived from the noise
  std::optional<double> L;        // nullopt: max over nodes
  std::optional<double> mu;       // nullopt: min over nodes
  double D = 1.0;
  std::optional<double> c_d;  // nullopt: 128 + 32 ln²(2d)
  std::vector<std::pair<std::size_t, double>> breakpoints;

  friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

struct StoppingSpec {
  StoppingRule rule = StoppingRule::fixed;
  std::size_t iterations = 1000;
  double threshold = 0.1;
  std::size_t max_iterations = 10'000'000;
  std::size_t record_every = 1;
  std::size_t replicates = 1;
  std::size_t ensembles = 1;
  MomentPooling moments = MomentPooling::isotropic;

  friend bool operator==(const StoppingSpec&, const StoppingSpec&) = default;
};

struct OutputSpec {
  std::string trace = "trace.csv";
  std::string samples;
  std::string reference;
  std::string summary;
  std::string table;
  double burn_in = 0.5;

  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct SweepSpec {
  std::vector<double> eta_list;
  std::vector<std::size_t> k_grid;
  std::vector<std::size_t> T_list;
  std::vector<std::size_t> d_list;
  std::vector<double> eps_list;

  friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct ExperimentConfig {
  ModelSpec model;
  FederationSpec federation;
  ScheduleSpec schedule;
  StoppingSpec stopping;
  OutputSpec output;
  SweepSpec sweep;

  /// Cross-field checks; throws ConfigError naming the field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig parse_config_string(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key, in a stable order, with shortest round-trip numbers.
std::string serialize_config(const ExperimentConfig& config);

std::string to_string(Algorithm a);
std::string to_string(ModelKind k);

}  // namespace fahmc::bench
