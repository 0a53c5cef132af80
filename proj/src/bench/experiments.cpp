#include "fahmc/bench/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <thread>

#include "fahmc/bench/io.hpp"
#include "fahmc/integrator.hpp"
#include "fahmc/random.hpp"
#include "fahmc/schedules.hpp"

namespace fahmc::bench {

namespace {

using Models = std::shared_ptr<const std::vector<TargetModel<double>>>;

bool is_single(const ExperimentConfig& c) {
  return c.federation.algorithm == Algorithm::single_hmc;
}

Models sampler_models(const ExperimentConfig& c, const BenchFleet& fleet) {
  if (is_single(c))
    return std::make_shared<const std::vector<TargetModel<double>>>(
        std::vector<TargetModel<double>>{*fleet.global});
  return std::make_shared<const std::vector<TargetModel<double>>>(fleet.models);
}

Variant variant_of(const ExperimentConfig& c) {
  return c.federation.algorithm == Algorithm::debias_fa_hmc ? Variant::debias
                                                            : Variant::fa_hmc;
}

Vec<double> start_point(const ExperimentConfig& c, std::size_t dim) {
  return Vec<double>::Constant(static_cast<Eigen::Index>(dim),
                               c.federation.theta0);
}

// Seeds for the e-th independent ensemble; ensemble 0 uses the seed itself.
std::uint64_t ensemble_seed(std::uint64_t seed, std::size_t e) {
  return e == 0 ? seed : replicate_seed(seed, (std::uint64_t{1} << 32) + e);
}

std::pair<SampleMatrix<double>, SampleMatrix<double>> equalize(
    const SampleMatrix<double>& a, const SampleMatrix<double>& b) {
  const Eigen::Index n = std::min(a.rows(), b.rows());
  return {strided_subsample(a, n), strided_subsample(b, n)};
}

}  // namespace

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t index) {
  return StreamFactory(seed).replicate(index).master_seed();
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

GradientNoise<double> build_noise(const ModelSpec& m) {
  switch (m.noise) {
    case NoiseKind::exact:
      return GradientNoise<double>::exact();
    case NoiseKind::additive_gaussian:
      return GradientNoise<double>::additive_gaussian(m.noise_variance);
    case NoiseKind::minibatch:
      return GradientNoise<double>::minibatch(m.batch_size);
  }
  return {};
}

LogisticData<double> generate_logistic_data(const ModelSpec& m) {
  Engine rng = StreamFactory(m.data_seed).stream(StreamRole::data, 0, 0);
  return synthetic_logistic_data<double>(static_cast<Eigen::Index>(m.samples),
                                         static_cast<Eigen::Index>(m.dim),
                                         m.feature_scale, rng);
}

BenchFleet build_fleet(const ExperimentConfig& c) {
  c.validate();
  const auto& m = c.model;
  const std::size_t N = c.federation.nodes;
  const auto d = static_cast<Eigen::Index>(m.dim);
  BenchFleet fleet;
  if (m.kind == ModelKind::quadratic) {
    fleet.weights = c.federation.weights;
    if (fleet.weights.empty()) fleet.weights.assign(N, 1.0 / double(N));
    std::vector<GaussianFactor<double>> factors;
    double precision = 0;
    for (std::size_t c_ = 0; c_ < N; ++c_) {
      Vec<double> mean = Vec<double>::Constant(d, m.means[c_]);
      if (m.mean_spread > 0) {
        Engine rng = StreamFactory(m.data_seed).stream(StreamRole::data, c_, 1);
        mean += m.mean_spread * standard_normal<double>(d, rng);
      }
      fleet.models.emplace_back(QuadraticNode<double>(mean, m.precisions[c_]));
      factors.push_back({mean, m.precisions[c_], fleet.weights[c_]});
      precision += fleet.weights[c_] * m.precisions[c_];
    }
    fleet.target = gaussian_product_posterior(factors);
    fleet.global = QuadraticNode<double>(fleet.target->mean, precision);
  } else {
    LogisticData<double> data = m.data.empty() ? generate_logistic_data(m)
                                               : read_logistic_csv(m.data);
    if (static_cast<std::size_t>(data.features.cols()) != m.dim)
      throw ConfigError("model.dim: data file has " +
                        std::to_string(data.features.cols()) + " features");
    if (static_cast<std::size_t>(data.features.rows()) < N)
      throw ConfigError("federation.nodes: more nodes than data rows");
    auto split = split_logistic_fleet(data, N, m.prior_precision);
    fleet.models = std::move(split.models);
    fleet.weights = std::move(split.weights);
    fleet.global = LogisticNode<double>(data.features, data.labels,
                                        m.prior_precision, 1.0);
  }
  fleet.L = 0;
  fleet.mu = std::numeric_limits<double>::infinity();
  for (const auto& model : fleet.models) {
    const auto s = smoothness(model);
    fleet.L = std::max(fleet.L, s.L);
    fleet.mu = std::min(fleet.mu, s.mu);
  }
  return fleet;
}

double scaled_eta(const ScheduleSpec& s, std::size_t dim) {
  return s.eta / std::pow(double(dim), s.eta_dim_exponent);
}

std::size_t resolve_leapfrog_steps(const ExperimentConfig& c, double eta) {
  if (c.federation.algorithm == Algorithm::fa_ld) return 1;
  if (c.federation.leapfrog_steps) return *c.federation.leapfrog_steps;
  return heuristic_K(eta);
}

double resolve_sigma_g(const ExperimentConfig& c, const BenchFleet& fleet) {
  if (c.schedule.sigma_g) return *c.schedule.sigma_g;
  const double L = c.schedule.L.value_or(fleet.L);
  switch (c.model.noise) {
    case NoiseKind::exact:
      return 0;
    case NoiseKind::additive_gaussian:
      // tr Var = σ²d ≤ σ_g² L d
      return std::sqrt(c.model.noise_variance / L);
    case NoiseKind::minibatch:
      break;
  }
  throw ConfigError("schedule.sigma_g: must be set explicitly for minibatch noise");
}

StepsizeSchedule<double> build_schedule(const ExperimentConfig& c,
                                        const BenchFleet& fleet) {
  const auto& s = c.schedule;
  switch (s.kind) {
    case ScheduleChoice::constant:
      return StepsizeSchedule<double>::constant(scaled_eta(s, fleet.dim()));
    case ScheduleChoice::piecewise:
      return StepsizeSchedule<double>::piecewise(s.breakpoints);
    case ScheduleChoice::theorem:
    case ScheduleChoice::dynamic:
      break;
  }
  StepsizeProblem<double> p;
  p.epsilon = s.epsilon;
  p.dim = double(fleet.dim());
  p.local_steps = c.federation.local_steps;
  p.leapfrog_steps = resolve_leapfrog_steps(c, 1.0);
  p.L = s.L.value_or(fleet.L);
  p.rho = is_single(c) ? 1.0 : c.federation.rho;
  p.nodes = fleet.weights.size();
  p.sigma_g = resolve_sigma_g(c, fleet);
  p.weights = fleet.weights;
  p.C = s.C;
  if (s.kind == ScheduleChoice::theorem)
    return StepsizeSchedule<double>::constant(theorem_stepsize(p));
  const double gamma = dynamic_gamma(p);
  const double dt = delta_tilde(p.dim, p.local_steps, gamma, p.rho, p.nodes,
                                p.weights, p.sigma_g, p.leapfrog_steps);
  return dynamic_schedule(s.D, dt, p.L, s.mu.value_or(fleet.mu),
                          p.leapfrog_steps, p.local_steps,
                          s.c_d.value_or(default_cd(p.dim)));
}

FederationConfig<double> build_federation(const ExperimentConfig& c,
                                          const BenchFleet& fleet,
                                          std::uint64_t seed) {
  FederationConfig<double> fc;
  fc.weights = is_single(c) ? std::vector<double>{1.0} : fleet.weights;
  fc.local_steps = c.federation.local_steps;
  fc.schedule = build_schedule(c, fleet);
  fc.leapfrog_steps = resolve_leapfrog_steps(c, fc.schedule.initial());
  fc.rho = is_single(c) ? 1.0 : c.federation.rho;
  fc.noise = build_noise(c.model);
  fc.master_seed = seed;
  fc.debias_anchor = c.federation.debias_anchor;
  return fc;
}

SampleMatrix<double> load_reference(const ExperimentConfig& c,
                                    const BenchFleet& fleet,
                                    std::size_t min_rows,
                                    const std::filesystem::path& base_dir) {
  const std::string& ref = c.output.reference;
  const std::string how =
      "generate one with `fahmc run --config <file>` using "
      "federation.algorithm = single-hmc and output.samples = <path>";
  if (ref.empty())
    throw ConfigError("output.reference: required for this command; " + how +
                      ", or use `exact` for a quadratic fleet");
  if (ref == "exact") {
    if (!fleet.target)
      throw ConfigError("output.reference: `exact` needs a quadratic fleet");
    const auto d = static_cast<Eigen::Index>(fleet.dim());
    const auto n = static_cast<Eigen::Index>(std::max<std::size_t>(min_rows, 2));
    const StreamFactory streams(c.federation.seed);
    const Vec<double> sd = fleet.target->var.array().sqrt();
    SampleMatrix<double> out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      Engine rng = streams.stream(StreamRole::reference, 0, std::uint64_t(i));
      out.row(i) = (fleet.target->mean +
                    sd.cwiseProduct(standard_normal<double>(d, rng)))
                       .transpose();
    }
    return out;
  }
  const std::filesystem::path path = base_dir / ref;
  if (!std::filesystem::exists(path))
    throw ConfigError("output.reference: file '" + path.string() +
                      "' not found; " + how);
  SampleMatrix<double> out = read_snapshots(path);
  if (static_cast<std::size_t>(out.cols()) != fleet.dim())
    throw ConfigError("output.reference: sample dimension " +
                      std::to_string(out.cols()) + " does not match model.dim");
  return out;
}

ThresholdRun ensemble_rounds(const ExperimentConfig& c, const BenchFleet& fleet,
                             const std::vector<double>& thresholds,
                             std::uint64_t seed,
                             const SampleMatrix<double>* reference,
                             std::size_t workers) {
  const std::size_t R = c.stopping.replicates;
  const bool use_me = reference != nullptr;
  if (!use_me && !fleet.target)
    throw ConfigError("stopping.rule: w2 needs a quadratic fleet");
  if (R < 2) throw ConfigError("stopping.replicates: need >= 2 for an ensemble");
  SampleMatrix<double> ref;
  if (use_me) {
    if (static_cast<std::size_t>(reference->rows()) < R)
      throw ConfigError("output.reference: fewer rows than stopping.replicates");
    ref = strided_subsample(*reference, static_cast<Eigen::Index>(R));
  }

  const Models models = sampler_models(c, fleet);
  const Vec<double> theta0 = start_point(c, fleet.dim());
  std::vector<std::unique_ptr<FederatedSampler<double>>> samplers;
  for (std::size_t r = 0; r < R; ++r)
    samplers.push_back(std::make_unique<FederatedSampler<double>>(
        build_federation(c, fleet, replicate_seed(seed, r)), models, theta0,
        variant_of(c)));
  const std::size_t T = c.federation.local_steps;
  const auto d = static_cast<Eigen::Index>(fleet.dim());

  ThresholdRun out;
  out.thresholds = thresholds;
  out.rounds.assign(thresholds.size(), std::nullopt);
  SampleMatrix<double> ensemble(static_cast<Eigen::Index>(R), d);
  std::size_t pending = thresholds.size();
  while (pending > 0 && out.iterations + T <= c.stopping.max_iterations) {
    parallel_for(R, workers, [&](std::size_t r) {
      for (std::size_t i = 0; i < T; ++i) samplers[r]->step();
      ensemble.row(static_cast<Eigen::Index>(r)) =
          samplers[r]->global_theta().transpose();
    });
    out.iterations += T;
    const std::size_t round = out.iterations / T;
    double metric;
    if (use_me) {
      metric = marginal_error(ensemble, ref);
    } else {
      const auto fitted = c.stopping.moments == MomentPooling::isotropic
                              ? empirical_moments_isotropic(ensemble)
                              : empirical_moments(ensemble);
      metric = std::pow(w2_gaussian(fitted, *fleet.target), 2);
    }
    out.final_metric = metric;
    for (std::size_t k = 0; k < thresholds.size(); ++k)
      if (!out.rounds[k] && metric < thresholds[k]) {
        out.rounds[k] = round;
        --pending;
      }
  }
  for (const auto& s : samplers) out.gradient_evals += s->gradient_evals();
  return out;
}

RunResult run_experiment(const ExperimentConfig& c, std::size_t workers,
                         const std::filesystem::path& base_dir) {
  const auto start = std::chrono::steady_clock::now();
  const BenchFleet fleet = build_fleet(c);
  const std::uint64_t seed = c.federation.seed;
  const FederationConfig<double> fc = build_federation(c, fleet, seed);
  const Vec<double> theta0 = start_point(c, fleet.dim());
  const std::size_t iterations = c.stopping.iterations;
  const std::size_t every = c.stopping.record_every;

  RunResult result;
  if (is_single(c)) {
    result.trace = hmc_chain(*fleet.global, theta0, fc.schedule,
                             fc.leapfrog_steps, fc.noise, iterations,
                             StreamFactory(seed), every);
  } else {
    FederatedSampler<double> sampler(fc, fleet.models, theta0, variant_of(c));
    result.trace = fahmc::detail::drive(sampler, iterations, every);
  }
  auto& trace = result.trace;
  result.gradient_evals = trace.gradient_evals;
  if (trace.rows() > 0)
    result.final_metrics["theta_norm"] = trace.global_params.back().norm();
  if (fleet.target) {
    auto& dist = trace.metrics["dist_to_mean"];
    for (const auto& theta : trace.global_params)
      dist.push_back((theta - fleet.target->mean).norm());
    if (!dist.empty()) result.final_metrics["dist_to_mean"] = dist.back();
  }
  if (!c.output.reference.empty() && trace.rows() >= 2) {
    const auto samples = trace.samples(c.output.burn_in);
    if (samples.rows() >= 1) {
      const auto ref = load_reference(c, fleet, std::size_t(samples.rows()),
                                      base_dir);
      const auto [a, b] = equalize(samples, ref);
      result.final_metrics["me"] = marginal_error(a, b);
    }
  }
  if (c.stopping.rule != StoppingRule::fixed) {
    SampleMatrix<double> ref;
    if (c.stopping.rule == StoppingRule::me)
      ref = load_reference(c, fleet, c.stopping.replicates, base_dir);
    result.threshold = ensemble_rounds(
        c, fleet, {c.stopping.threshold}, seed,
        c.stopping.rule == StoppingRule::me ? &ref : nullptr, workers);
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

DimCommResult dim_vs_comm(const ExperimentConfig& base, std::size_t workers) {
  if (base.model.kind != ModelKind::quadratic)
    throw ConfigError("model.kind: dim-vs-comm needs a quadratic fleet");
  if (base.stopping.replicates < 2)
    throw ConfigError("stopping.replicates: dim-vs-comm needs >= 2");
  std::vector<std::size_t> dims = base.sweep.d_list;
  if (dims.empty()) dims.push_back(base.model.dim);

  DimCommResult result;
  std::vector<double> xs, ys;
  for (std::size_t d : dims) {
    ExperimentConfig c = base;
    c.model.dim = d;
    const BenchFleet fleet = build_fleet(c);
    if (result.points.empty()) result.target_at_first_dim = *fleet.target;
    DimCommPoint point;
    point.dim = d;
    point.eta = build_schedule(c, fleet).initial();
    std::vector<double> rounds;
    bool failed = false;
    for (std::size_t e = 0; e < c.stopping.ensembles && !failed; ++e) {
      const auto run = ensemble_rounds(c, fleet, {c.stopping.threshold},
                                       ensemble_seed(c.federation.seed, e),
                                       nullptr, workers);
      if (run.rounds.front())
        rounds.push_back(double(*run.rounds.front()));
      else
        failed = true;
    }
    if (!failed) {
      const double n = double(rounds.size());
      const double mean = std::accumulate(rounds.begin(), rounds.end(), 0.0) / n;
      point.rounds = mean;
      if (rounds.size() >= 2) {
        double ss = 0;
        for (double r : rounds) ss += (r - mean) * (r - mean);
        point.rounds_se = std::sqrt(ss / (n - 1) / n);
      }
      xs.push_back(double(d));
      ys.push_back(mean * mean);
    }
    result.points.push_back(point);
  }
  if (xs.size() >= 2 && *std::max_element(xs.begin(), xs.end()) >
                            *std::min_element(xs.begin(), xs.end()))
    result.fit = fit_line(xs, ys);
  return result;
}

std::vector<SweepRow> sweep_stepsize(const ExperimentConfig& base,
                                     std::size_t workers,
                                     const std::filesystem::path& base_dir) {
  if (base.sweep.eta_list.empty())
    throw ConfigError("sweep.eta_list: required for sweep-stepsize");
  const BenchFleet fleet = build_fleet(base);
  const std::size_t R = base.stopping.replicates;

  struct Point {
    ExperimentConfig config;
    SweepRow row;
  };
  std::vector<Point> points;
  for (Algorithm alg : {Algorithm::fa_hmc, Algorithm::fa_ld}) {
    for (double eta : base.sweep.eta_list) {
      std::vector<std::size_t> ks;
      if (alg == Algorithm::fa_ld)
        ks = {1};
      else if (eta <= 0.01)
        ks = {heuristic_K(eta)};
      else if (!base.sweep.k_grid.empty())
        ks = base.sweep.k_grid;
      else
        ks = {base.federation.leapfrog_steps.value_or(heuristic_K(eta))};
      for (std::size_t K : ks) {
        Point p{base, {}};
        p.config.federation.algorithm = alg;
        p.config.federation.leapfrog_steps = K;
        p.config.schedule = ScheduleSpec{};
        p.config.schedule.kind = ScheduleChoice::constant;
        p.config.schedule.eta = eta;
        p.row = {to_string(alg), eta, K, base.federation.local_steps, 0, 0};
        points.push_back(std::move(p));
      }
    }
  }

  const std::size_t per_chain =
      base.stopping.iterations / base.stopping.record_every;
  const SampleMatrix<double> reference =
      load_reference(base, fleet, per_chain, base_dir);
  const Vec<double> theta0 = start_point(base, fleet.dim());

  std::vector<double> me(points.size() * R, 0.0);
  std::vector<std::size_t> used(points.size() * R, 0);
  parallel_for(points.size() * R, workers, [&](std::size_t job) {
    const Point& p = points[job / R];
    const std::size_t r = job % R;
    const auto fc =
        build_federation(p.config, fleet, replicate_seed(base.federation.seed, r));
    try {
      const auto trace =
          p.config.federation.algorithm == Algorithm::fa_ld
              ? run_fa_ld(fc, fleet.models, theta0, base.stopping.iterations,
                          base.stopping.record_every)
              : run_fa_hmc(fc, fleet.models, theta0, base.stopping.iterations,
                           base.stopping.record_every);
      const auto samples = trace.samples(base.output.burn_in);
      if (samples.rows() < 1) throw ConfigError("output.burn_in: no samples left");
      const auto [a, b] = equalize(samples, reference);
      me[job] = marginal_error(a, b);
      used[job] = std::size_t(a.rows());
    } catch (const DivergenceError&) {
      me[job] = std::numeric_limits<double>::infinity();
    }
  });

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < points.size(); ++i) {
    SweepRow row = points[i].row;
    double total = 0;
    for (std::size_t r = 0; r < R; ++r) {
      total += me[i * R + r];
      row.n_samples = std::max(row.n_samples, used[i * R + r]);
    }
    row.me = total / double(R);
    rows.push_back(row);
  }
  return rows;
}

std::vector<LocalRow> sweep_local(const ExperimentConfig& base,
                                  std::size_t workers,
                                  const std::filesystem::path& base_dir) {
  std::vector<std::size_t> Ts = base.sweep.T_list;
  if (Ts.empty()) Ts.push_back(base.federation.local_steps);
  std::vector<double> eps = base.sweep.eps_list;
  if (eps.empty()) eps.push_back(base.stopping.threshold);
  const BenchFleet fleet = build_fleet(base);
  const SampleMatrix<double> reference =
      load_reference(base, fleet, base.stopping.replicates, base_dir);

  std::vector<LocalRow> rows;
  for (std::size_t T : Ts) {
    ExperimentConfig c = base;
    c.federation.local_steps = T;
    const auto run = ensemble_rounds(c, fleet, eps, c.federation.seed,
                                     &reference, workers);
    for (std::size_t k = 0; k < eps.size(); ++k) {
      LocalRow row{T, eps[k], run.rounds[k], run.iterations};
      if (row.rounds) row.iterations = *row.rounds * T;
      rows.push_back(row);
    }
  }
  return rows;
}

CompareResult compare_samples(const SampleMatrix<double>& a,
                              const SampleMatrix<double>& b) {
  if (a.cols() != b.cols())
    throw ContractViolation("compare: sample dimensions differ");
  const auto [x, y] = equalize(a, b);
  CompareResult out;
  out.n = std::size_t(x.rows());
  out.dim = std::size_t(x.cols());
  out.me = marginal_error(x, y);
  out.w2_moments = x.rows() >= 2 ? w2_gaussian(empirical_moments(x),
                                               empirical_moments(y))
                                 : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace fahmc::bench
