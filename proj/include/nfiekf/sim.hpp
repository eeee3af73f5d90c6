#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nfiekf/filters.hpp"
#include "nfiekf/lie.hpp"
#include "nfiekf/model.hpp"

namespace nfiekf {

struct CableKnot {
  double time = 0.0;    ///< s
  double length = 0.0;  ///< m
};

/// Piecewise-linear cable length l(t). Outside the knots the end values are held.
class CableProfile {
public:
  explicit CableProfile(std::vector<CableKnot> knots);

  /// 10 m for 0.5 s, linear ramp to 8 m over 1 s, then constant up to 2 s.
  static CableProfile default_profile();
  /// Parses "t:l,t:l,...".
  static CableProfile parse(const std::string& text);

  double length(double t) const;
  /// Right derivative dl/dt.
  double rate(double t) const;
  double start_time() const { return knots_.front().time; }
  double end_time() const { return knots_.back().time; }
  const std::vector<CableKnot>& knots() const { return knots_; }
  std::string to_string() const;

private:
  std::vector<CableKnot> knots_;
};

struct SimConfig {
  double theta0 = 20.0 * 3.14159265358979323846 / 180.0;  ///< rad
  double duration = 2.0;                                   ///< s
  double rate = 100.0;                                     ///< Hz, IMU and filters
  int substeps = 10;                                       ///< ground-truth integrator steps per sample
  double gravity = kGravity;
  double gyro_noise_std = 0.005;   ///< rad/s, per sample
  double accel_noise_std = 0.005;  ///< m/s^2, per sample
  Eigen::MatrixXd p0 = default_p0();
  double baseline_meas_var = 1e-4;  ///< N = baseline_meas_var * I for the EKF and IEKF
  double tol = kDefaultCycleTol;
  int max_iter = kDefaultMaxCycles;
  int runs = 30;
  std::uint64_t seed = 42;
  /// Fixed initial error instead of a draw from N(0, p0).
  std::optional<Eigen::VectorXd> initial_error;

  static Eigen::MatrixXd default_p0();

  double dt() const { return 1.0 / rate; }
  int steps() const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  FilterSettings filter_settings() const;
};

struct TruthSample {
  double time = 0.0;
  double angle = 0.0;       ///< cable angle from the downward vertical, rad
  double angle_rate = 0.0;  ///< rad/s
  double length = 0.0;      ///< m
  /// Hook pose. R is the cable angle plus pi so that the body lever (0, -l) points up the cable.
  /// The velocity is the forward difference of sampled positions, i.e. the velocity of the
  /// first-order strapdown model, so that noise-free replay reproduces the samples.
  GroupElement state = GroupElement::identity(Space::Planar);
  Eigen::Vector2d physical_velocity = Eigen::Vector2d::Zero();  ///< dp/dt of the continuous pendulum
};

/// Variable-length pendulum hanging from the origin, RK4 at substeps * rate. Returns steps()+1 samples.
std::vector<TruthSample> simulate_truth(const SimConfig& cfg, const CableProfile& profile);

/// Noise-free readings that replay the truth exactly through propagate_mean.
std::vector<ImuSample> exact_imu(const std::vector<TruthSample>& truth, const SimConfig& cfg);

/// exact_imu plus Gaussian gyro and accelerometer noise of the configured std.
std::vector<ImuSample> synthesize_imu(const std::vector<TruthSample>& truth, const SimConfig& cfg,
                                      std::mt19937_64& rng);

/// Independent random stream for one Monte-Carlo run.
std::mt19937_64 run_stream(std::uint64_t seed, int run_index);

struct FilterTrace {
  FilterKind kind = FilterKind::NoiseFreeIekf;
  std::vector<double> err_norm;  ///< ||log(chi_hat^-1 chi_k)||, k = 0..steps
  std::vector<int> cycles;       ///< update iterations, 0 at k = 0
  std::vector<Belief> snapshots;
  int diverged_updates = 0;
  bool diverged = false;  ///< any update flagged divergence or the error went non-finite
  std::optional<int> steps_to_1pct;
};

struct TrajectoryRecord {
  int run = 0;
  Eigen::VectorXd initial_error;
  std::vector<ImuSample> imu;
  std::vector<Constraint> constraints;  ///< index k holds the constraint observed at sample k
  std::vector<FilterTrace> traces;
};

/// First k >= 1 with err_norm[k] <= 0.01 * err_norm[0].
std::optional<int> steps_to_one_percent(const std::vector<double>& err_norm);

/// One Monte-Carlo run on a shared truth; every filter sees the same IMU and constraint streams.
TrajectoryRecord simulate_run(const SimConfig& cfg, const std::vector<TruthSample>& truth,
                              const std::vector<FilterKind>& filters, int run_index);

struct FilterSummary {
  FilterKind kind = FilterKind::NoiseFreeIekf;
  std::vector<double> err_mean;  ///< per step, over non-diverged runs
  std::vector<double> err_std;
  int runs_used = 0;
  int diverged_runs = 0;
  /// Runs that never reached 1 %; they enter the step statistics as steps() + 1.
  int unreached_runs = 0;
  double steps_mean = 0.0;
  double steps_std = 0.0;
  double final_err_mean = 0.0;
  double mean_cycles = 0.0;  ///< mean update iterations over steps 1..N of the used runs
};

struct BenchmarkResult {
  SimConfig config;
  CableProfile profile = CableProfile::default_profile();
  std::vector<FilterKind> filters;
  std::vector<double> times;
  std::vector<TrajectoryRecord> runs;
  std::vector<FilterSummary> summaries;

  const FilterSummary& summary(FilterKind kind) const;
};

/// Population mean and standard deviation; divides by the count.
FilterSummary summarize(FilterKind kind, const std::vector<TrajectoryRecord>& runs, int steps);

/// Runs cfg.runs independent simulations, concurrently when threads > 1 (0 = from environment).
BenchmarkResult run_benchmark(const SimConfig& cfg, const CableProfile& profile,
                              const std::vector<FilterKind>& filters, unsigned threads = 0);

/// NFIEKF_THREADS if set, else the hardware concurrency.
unsigned default_thread_count();

}  // namespace nfiekf
