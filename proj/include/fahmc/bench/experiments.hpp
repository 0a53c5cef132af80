#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fahmc/bench/config.hpp"
#include "fahmc/federation.hpp"
#include "fahmc/metrics.hpp"
#include "fahmc/models.hpp"
#include "fahmc/trace.hpp"

namespace fahmc::bench {

/// Node models plus what the recipes need to know about their sum.
struct BenchFleet {
  std::vector<TargetModel<double>> models;
  std::vector<double> weights;
  std::optional<TargetModel<double>> global;     // Σ w_c f_c as one model
  std::optional<DiagGaussian<double>> target;    // quadratic fleets only
  double L = 0;   // max over nodes
  double mu = 0;  // min over nodes
  std::size_t dim() const { return static_cast<std::size_t>(dimension(models.front())); }
};

BenchFleet build_fleet(const ExperimentConfig& config);
GradientNoise<double> build_noise(const ModelSpec& model);

/// Constant-schedule stepsize at the configured dimension: eta / d^exponent.
double scaled_eta(const ScheduleSpec& schedule, std::size_t dim);

/// K from the config, or ⌊π/(3η)⌋ when set to auto.
std::size_t resolve_leapfrog_steps(const ExperimentConfig& config, double eta);

/// σ_g from the config, or the value implied by the noise model.
double resolve_sigma_g(const ExperimentConfig& config, const BenchFleet& fleet);

StepsizeSchedule<double> build_schedule(const ExperimentConfig& config,
                                        const BenchFleet& fleet);

/// Federation settings for one replicate seed. single-hmc maps to one node
/// holding the global model with fully shared momentum.
FederationConfig<double> build_federation(const ExperimentConfig& config,
                                          const BenchFleet& fleet,
                                          std::uint64_t seed);

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t index);

/// Runs body(i) for i < n on up to `workers` threads. The first exception
/// (by index) is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

/// Reference sample for ME. `output.reference` is a snapshot file, or
/// "exact" for iid draws from the closed-form target (quadratic only).
/// A missing file is a ConfigError naming the command that makes one.
SampleMatrix<double> load_reference(const ExperimentConfig& config,
                                    const BenchFleet& fleet,
                                    std::size_t min_rows,
                                    const std::filesystem::path& base_dir = {});

/// First sync round at which an ensemble of replicate chains reaches each
/// threshold. The metric is evaluated on the R global parameters at every
/// multiple of T: W2² of the fitted Gaussian against the target, or ME
/// against the reference.
struct ThresholdRun {
  std::vector<double> thresholds;
  std::vector<std::optional<std::size_t>> rounds;  // nullopt: cap reached
  std::size_t iterations = 0;                      // per replicate
  double final_metric = 0;
  std::uint64_t gradient_evals = 0;
};

ThresholdRun ensemble_rounds(const ExperimentConfig& config,
                             const BenchFleet& fleet,
                             const std::vector<double>& thresholds,
                             std::uint64_t seed,
                             const SampleMatrix<double>* reference,
                             std::size_t workers);

struct RunResult {
  ChainTrace<double> trace;
  double wall_seconds = 0;
  std::uint64_t gradient_evals = 0;
  std::map<std::string, double> final_metrics;
  std::optional<ThresholdRun> threshold;
};

/// Replicate-0 trace for stopping.iterations, plus the ensemble threshold
/// measurement when the stopping rule asks for one.
RunResult run_experiment(const ExperimentConfig& config, std::size_t workers = 1,
                         const std::filesystem::path& base_dir = {});

struct DimCommPoint {
  std::size_t dim = 0;
  double eta = 0;
  std::optional<double> rounds;     // mean over ensembles
  std::optional<double> rounds_se;  // needs >= 2 ensembles
};

struct DimCommResult {
  std::vector<DimCommPoint> points;
  std::optional<LinearFit<double>> fit;  // rounds² ≈ α·d + β
  DiagGaussian<double> target_at_first_dim;
};

DimCommResult dim_vs_comm(const ExperimentConfig& config, std::size_t workers = 1);

struct SweepRow {
  std::string algorithm;
  double eta = 0;
  std::size_t K = 0;
  std::size_t T = 0;
  double me = 0;  // +inf after divergence
  std::size_t n_samples = 0;
};

std::vector<SweepRow> sweep_stepsize(const ExperimentConfig& config,
                                     std::size_t workers = 1,
                                     const std::filesystem::path& base_dir = {});

struct LocalRow {
  std::size_t T = 0;
  double epsilon = 0;
  std::optional<std::size_t> rounds;
  std::size_t iterations = 0;  // at the crossing, or the cap
};

std::vector<LocalRow> sweep_local(const ExperimentConfig& config,
                                  std::size_t workers = 1,
                                  const std::filesystem::path& base_dir = {});

struct CompareResult {
  double me = 0;
  double w2_moments = 0;
  std::size_t n = 0;
  std::size_t dim = 0;
};

/// The larger set is strided down to the size of the smaller one.
CompareResult compare_samples(const SampleMatrix<double>& a,
                              const SampleMatrix<double>& b);

LogisticData<double> generate_logistic_data(const ModelSpec& model);

}  // namespace fahmc::bench
