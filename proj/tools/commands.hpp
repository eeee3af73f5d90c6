#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "nfiekf/io.hpp"

namespace nfiekf::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kBadInput = 2 };

/// Flags common to bench and demo. Unset fields keep the config file's (or the default) value.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<std::string> filters;
  std::optional<double> tol;
  std::optional<std::string> profile;
};

struct BenchOptions {
  CommonOptions common;
  std::filesystem::path out = "out";
  unsigned threads = 0;  ///< 0: NFIEKF_THREADS or hardware concurrency
};

struct DemoOptions {
  CommonOptions common;
  int run = 0;
  /// Replaces the random draw by xi0 = scale * sqrt(diag(P0)).
  std::optional<double> xi0_scale;
  /// When set, demo.csv and manifest.json are written there.
  std::optional<std::filesystem::path> out;
};

/// Loads the config file (if any) and applies flag overrides; throws ConfigError or std::invalid_argument.
BenchmarkSetup resolve_setup(const CommonOptions& opts);

/// Writes summary.csv, runs.csv and manifest.json into opts.out and prints the steps-to-1% table.
int cmd_bench(const BenchOptions& opts, std::ostream& out, std::ostream& err);

/// One trajectory: per-step error of every filter and the noise-free cycle counts.
int cmd_demo(const DemoOptions& opts, std::ostream& out, std::ostream& err);

/// Fast self-test of the core identities on random inputs.
int cmd_check(std::uint64_t seed, std::ostream& out, std::ostream& err);

}  // namespace nfiekf::cli
