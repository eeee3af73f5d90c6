#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfiekf/sim.hpp"

namespace nfiekf {

inline constexpr const char* kVersionTag = "nfiekf-0.1.0";

/// Configuration problem located at a 1-based line of the source text (0 when unknown).
class ConfigError : public std::invalid_argument {
public:
  ConfigError(int line, const std::string& message);
  int line() const { return line_; }

private:
  int line_;
};

struct BenchmarkSetup {
  SimConfig config;
  CableProfile profile = CableProfile::default_profile();
  std::vector<FilterKind> filters{FilterKind::Ekf, FilterKind::Iekf, FilterKind::NoiseFreeIekf};
};

/**
 * Parses a JSON object whose keys mirror SimConfig:
 * theta0_deg, duration_s, rate_hz, substeps, gravity, gyro_noise_std, accel_noise_std,
 * p0 (5x5 rows or a 5-entry diagonal), baseline_meas_var, tol, max_iter, runs, seed,
 * profile ("t:l,..."), filters (names), initial_error (5 entries).
 * Missing keys keep their defaults; unknown keys are rejected.
 */
BenchmarkSetup parse_config(const std::string& text);
BenchmarkSetup load_config_file(const std::filesystem::path& path);

nlohmann::json config_to_json(const BenchmarkSetup& setup);

/// Parses a comma-separated filter list such as "nf-iekf,iekf".
std::vector<FilterKind> parse_filter_list(const std::string& text);

/// Columns: step,time_s,filter_name,err_norm_mean,err_norm_std
void write_summary_csv(std::ostream& os, const BenchmarkResult& result);
/// Columns: run,step,time_s,filter_name,err_norm,cycles,run_diverged
void write_runs_csv(std::ostream& os, const BenchmarkResult& result);

struct RunManifest {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string version = kVersionTag;
  struct FilterStats {
    std::string filter;
    double steps_to_1pct_mean = 0.0;
    double steps_to_1pct_std = 0.0;
    double final_err_mean = 0.0;
    int runs_used = 0;
    int diverged_runs = 0;
    int diverged_updates = 0;
    int unreached_runs = 0;
    double mean_cycles = 0.0;
  };
  std::vector<FilterStats> filters;

  nlohmann::json to_json() const;
};

RunManifest make_manifest(const BenchmarkSetup& setup, const BenchmarkResult& result);

/// Human-readable steps-to-1% table.
std::string format_summary_table(const BenchmarkResult& result);

}  // namespace nfiekf
