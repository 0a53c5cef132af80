#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fahmc/bench/config.hpp"
#include "fahmc/bench/experiments.hpp"
#include "fahmc/models.hpp"

namespace fahmc::bench {

/// CSV with header x_1,...,x_d,y and labels in {0,1}.
LogisticData<double> read_logistic_csv(const std::filesystem::path& path);
std::string logistic_csv(const LogisticData<double>& data);

void write_text(const std::filesystem::path& path, const std::string& text);

std::string run_summary_json(const ExperimentConfig& config,
                             const RunResult& result);

/// kind,d,eta,rounds,rounds_se,rounds_sq,alpha,beta,r2 with one `point`
/// or `failure` row per d and a trailing `fit` row when a fit exists.
std::string dim_vs_comm_csv(const DimCommResult& result);
std::string dim_vs_comm_json(const ExperimentConfig& config,
                             const DimCommResult& result);

/// algorithm,eta,K,T,me,n_samples
std::string sweep_stepsize_csv(const std::vector<SweepRow>& rows);

/// T,epsilon,rounds,iterations,status
std::string sweep_local_csv(const std::vector<LocalRow>& rows);

std::string compare_json(const CompareResult& result);

}  // namespace fahmc::bench
