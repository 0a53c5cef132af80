#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "fahmc/types.hpp"

namespace fahmc {

/**
 * Time-indexed record of a sampler run.
 *
 * Row r holds the global parameter θ_t after t = record_iterations[r]
 * completed iterations. `eta_used[i]` is the stepsize of iteration
 * first_iteration + i. `sync_events` lists the iterations that began
 * with a broadcast.
 */
template <typename S>
struct ChainTrace {
  std::size_t first_iteration = 0;
  std::vector<std::size_t> record_iterations;
  std::vector<Vec<S>> global_params;
  std::vector<std::uint8_t> record_sync;
  std::vector<std::size_t> sync_events;
  std::vector<S> eta_used;
  std::map<std::string, std::vector<S>> metrics;
  std::uint64_t gradient_evals = 0;

  std::size_t rows() const noexcept { return global_params.size(); }

  Eigen::Index dim() const noexcept {
    return global_params.empty() ? 0 : global_params.front().size();
  }

  S eta_for_row(std::size_t row) const {
    return eta_used.at(record_iterations.at(row) - 1 - first_iteration);
  }

  /// Recorded rows after dropping the leading `burn_in` fraction.
  SampleMatrix<S> samples(double burn_in = 0.5) const {
    detail::require(burn_in >= 0.0 && burn_in < 1.0,
                    "burn-in fraction must lie in [0, 1)");
    const auto skip = static_cast<std::size_t>(burn_in * double(rows()));
    SampleMatrix<S> out(static_cast<Eigen::Index>(rows() - skip), dim());
    for (std::size_t r = skip; r < rows(); ++r)
      out.row(static_cast<Eigen::Index>(r - skip)) =
          global_params[r].transpose();
    return out;
  }
};

namespace detail {

inline std::string format_number(double x) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

/// Write through a temporary sibling and rename over the target.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, bool binary,
                      Writer&& writer) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc
                                  : std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    writer(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little ||
                std::endian::native == std::endian::big);
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes{};
  in.read(bytes.data(), bytes.size());
  if (!in) throw std::runtime_error("truncated binary snapshot file");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace detail

/// CSV with header `t,eta,sync,theta_norm,metric_<name>...`.
template <typename S>
std::string trace_csv(const ChainTrace<S>& trace) {
  std::ostringstream out;
  out << "t,eta,sync,theta_norm";
  for (const auto& [name, _] : trace.metrics) out << ",metric_" << name;
  out << '\n';
  for (std::size_t r = 0; r < trace.rows(); ++r) {
    out << trace.record_iterations[r] << ','
        << detail::format_number(double(trace.eta_for_row(r))) << ','
        << int(trace.record_sync[r]) << ','
        << detail::format_number(double(trace.global_params[r].norm()));
    for (const auto& [_, values] : trace.metrics)
      out << ',' << (r < values.size() ? detail::format_number(double(values[r]))
                                       : std::string());
    out << '\n';
  }
  return out.str();
}

template <typename S>
void write_trace_csv(const std::filesystem::path& path,
                     const ChainTrace<S>& trace) {
  const std::string text = trace_csv(trace);
  detail::write_atomically(path, false,
                           [&](std::ostream& out) { out << text; });
}

/**
 * Binary snapshots of the recorded θ_t: an 8-byte little-endian d,
 * then one row of d little-endian IEEE-754 doubles per record.
 */
template <typename S>
void write_snapshots(const std::filesystem::path& path,
                     const ChainTrace<S>& trace) {
  detail::write_atomically(path, true, [&](std::ostream& out) {
    detail::put_le<std::uint64_t>(out, std::uint64_t(trace.dim()));
    for (const auto& theta : trace.global_params)
      for (Eigen::Index i = 0; i < theta.size(); ++i)
        detail::put_le<double>(out, double(theta[i]));
  });
}

inline SampleMatrix<double> read_snapshots(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto d = detail::get_le<std::uint64_t>(in);
  if (d == 0) throw std::runtime_error("snapshot file declares d = 0");
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(in.tellg()) - 8;
  if (bytes % (8 * d) != 0)
    throw std::runtime_error("snapshot file size is not a multiple of 8·d");
  in.seekg(8);
  const auto n = static_cast<Eigen::Index>(bytes / (8 * d));
  SampleMatrix<double> out(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      out(r, c) = detail::get_le<double>(in);
  return out;
}

}  // namespace fahmc
