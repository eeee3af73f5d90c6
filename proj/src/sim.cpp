#include "nfiekf/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nfiekf/gain.hpp"

namespace nfiekf {

// ---------------------------------------------------------------------------
// CableProfile

CableProfile::CableProfile(std::vector<CableKnot> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw std::invalid_argument("cable profile needs at least one knot");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!(knots_[i].length > 0.0) || !std::isfinite(knots_[i].length)) {
      throw std::invalid_argument("cable length must be positive at knot " + std::to_string(i));
    }
    if (!std::isfinite(knots_[i].time)) {
      throw std::invalid_argument("cable knot time must be finite at knot " + std::to_string(i));
    }
    if (i > 0 && !(knots_[i].time > knots_[i - 1].time)) {
      throw std::invalid_argument("cable knot times must be strictly increasing at knot " +
                                  std::to_string(i));
    }
  }
}

CableProfile CableProfile::default_profile() {
  return CableProfile({{0.0, 10.0}, {0.5, 10.0}, {1.5, 8.0}, {2.0, 8.0}});
}

CableProfile CableProfile::parse(const std::string& text) {
  std::vector<CableKnot> knots;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("cable knot '" + item + "' is not of the form t:l");
    }
    try {
      std::size_t used_t = 0;
      std::size_t used_l = 0;
      const std::string t_text = item.substr(0, colon);
      const std::string l_text = item.substr(colon + 1);
      const double t = std::stod(t_text, &used_t);
      const double l = std::stod(l_text, &used_l);
      if (used_t != t_text.size() || used_l != l_text.size()) throw std::invalid_argument("trailing");
      knots.push_back({t, l});
    } catch (const std::logic_error&) {
      throw std::invalid_argument("cable knot '" + item + "' is not numeric");
    }
  }
  return CableProfile(std::move(knots));
}

double CableProfile::length(double t) const {
  if (t <= knots_.front().time) return knots_.front().length;
  if (t >= knots_.back().time) return knots_.back().length;
  const auto upper = std::upper_bound(knots_.begin(), knots_.end(), t,
                                      [](double v, const CableKnot& k) { return v < k.time; });
  const CableKnot& b = *upper;
  const CableKnot& a = *(upper - 1);
  const double s = (t - a.time) / (b.time - a.time);
  return a.length + s * (b.length - a.length);
}

double CableProfile::rate(double t) const {
  if (t < knots_.front().time || t >= knots_.back().time) return 0.0;
  const auto upper = std::upper_bound(knots_.begin(), knots_.end(), t,
                                      [](double v, const CableKnot& k) { return v < k.time; });
  const CableKnot& b = *upper;
  const CableKnot& a = *(upper - 1);
  return (b.length - a.length) / (b.time - a.time);
}

std::string CableProfile::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (i > 0) os << ',';
    os << knots_[i].time << ':' << knots_[i].length;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// SimConfig

Eigen::MatrixXd SimConfig::default_p0() {
  Eigen::VectorXd diag(5);
  diag << 0.05 * 0.05, 0.25, 0.25, 0.25, 0.25;
  return diag.asDiagonal();
}

int SimConfig::steps() const { return static_cast<int>(std::lround(duration * rate)); }

void SimConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be non-negative");
    }
  };
  if (!std::isfinite(theta0) || std::abs(theta0) >= std::numbers::pi) {
    throw std::invalid_argument("theta0 must lie in (-180, 180) degrees");
  }
  positive(duration, "duration");
  positive(rate, "rate");
  positive(gravity, "gravity");
  non_negative(gyro_noise_std, "gyro_noise_std");
  non_negative(accel_noise_std, "accel_noise_std");
  positive(baseline_meas_var, "baseline_meas_var");
  positive(tol, "tol");
  if (substeps < 1) throw std::invalid_argument("substeps must be at least 1");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
  if (runs < 1) throw std::invalid_argument("runs must be at least 1");
  if (steps() < 1) throw std::invalid_argument("duration * rate must give at least one step");
  if (p0.rows() != 5 || p0.cols() != 5) throw std::invalid_argument("p0 must be 5x5");
  if ((p0 - p0.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, p0.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("p0 must be symmetric");
  }
  try {
    factor_psd(p0);
  } catch (const std::exception&) {
    throw std::invalid_argument("p0 must be positive semi-definite");
  }
  if (initial_error && initial_error->size() != 5) {
    throw std::invalid_argument("initial_error must have 5 entries");
  }
}

FilterSettings SimConfig::filter_settings() const {
  // The simulator adds per-sample noise of std sigma to rates that are integrated over dt, so
  // each step sees increment variance sigma^2 dt^2. As a white-noise density that is sigma^2 dt,
  // which process_noise then scales by dt.
  FilterSettings s;
  s.noise.gyro_cov = Eigen::MatrixXd::Constant(1, 1, gyro_noise_std * gyro_noise_std * dt());
  s.noise.accel_cov = accel_noise_std * accel_noise_std * dt() * Eigen::MatrixXd::Identity(2, 2);
  s.noise.meas_cov = baseline_meas_var * Eigen::MatrixXd::Identity(2, 2);
  s.gravity = gravity_vector(Space::Planar, gravity);
  s.tol = tol;
  s.max_iter = max_iter;
  return s;
}

// ---------------------------------------------------------------------------
// Ground truth

namespace {

struct PendulumState {
  double angle;
  double rate;
};

PendulumState pendulum_derivative(const PendulumState& s, double t, double g, const CableProfile& profile) {
  const double l = profile.length(t);
  const double ldot = profile.rate(t);
  return {s.rate, -(g / l) * std::sin(s.angle) - 2.0 * (ldot / l) * s.rate};
}

PendulumState rk4_step(const PendulumState& s, double t, double h, double g, const CableProfile& profile) {
  auto add = [](const PendulumState& a, const PendulumState& b, double k) {
    return PendulumState{a.angle + k * b.angle, a.rate + k * b.rate};
  };
  const PendulumState k1 = pendulum_derivative(s, t, g, profile);
  const PendulumState k2 = pendulum_derivative(add(s, k1, h / 2), t + h / 2, g, profile);
  const PendulumState k3 = pendulum_derivative(add(s, k2, h / 2), t + h / 2, g, profile);
  const PendulumState k4 = pendulum_derivative(add(s, k3, h), t + h, g, profile);
  return {s.angle + h / 6 * (k1.angle + 2 * k2.angle + 2 * k3.angle + k4.angle),
          s.rate + h / 6 * (k1.rate + 2 * k2.rate + 2 * k3.rate + k4.rate)};
}

Eigen::Vector2d hook_position(double angle, double length) {
  return {length * std::sin(angle), -length * std::cos(angle)};
}

}  // namespace

std::vector<TruthSample> simulate_truth(const SimConfig& cfg, const CableProfile& profile) {
  cfg.validate();
  if (profile.start_time() > 0.0 || profile.end_time() < cfg.duration) {
    throw std::invalid_argument("cable profile does not cover [0, duration]");
  }
  const int n = cfg.steps();
  const double dt = cfg.dt();
  const double h = dt / cfg.substeps;

  // One extra sample closes the forward difference of the last velocity.
  std::vector<PendulumState> states(n + 2);
  states[0] = {cfg.theta0, 0.0};
  for (int k = 0; k + 1 < static_cast<int>(states.size()); ++k) {
    PendulumState s = states[k];
    for (int j = 0; j < cfg.substeps; ++j) {
      s = rk4_step(s, k * dt + j * h, h, cfg.gravity, profile);
    }
    states[k + 1] = s;
  }

  std::vector<TruthSample> truth;
  truth.reserve(n + 1);
  for (int k = 0; k <= n; ++k) {
    const double t = k * dt;
    const double l = profile.length(t);
    const Eigen::Vector2d p = hook_position(states[k].angle, l);
    const Eigen::Vector2d p_next = hook_position(states[k + 1].angle, profile.length(t + dt));
    const Eigen::Vector2d v = (p_next - p) / dt;
    const double ldot = profile.rate(t);
    const double a = states[k].angle;

    TruthSample sample;
    sample.time = t;
    sample.angle = a;
    sample.angle_rate = states[k].rate;
    sample.length = l;
    sample.state = GroupElement(so2::exp(a + std::numbers::pi), v, p);
    sample.physical_velocity = Eigen::Vector2d(ldot * std::sin(a) + l * std::cos(a) * states[k].rate,
                                               -ldot * std::cos(a) + l * std::sin(a) * states[k].rate);
    truth.push_back(std::move(sample));
  }
  return truth;
}

std::vector<ImuSample> exact_imu(const std::vector<TruthSample>& truth, const SimConfig& cfg) {
  const double dt = cfg.dt();
  const Eigen::VectorXd g = gravity_vector(Space::Planar, cfg.gravity);
  std::vector<ImuSample> imu;
  if (truth.size() < 2) return imu;
  imu.reserve(truth.size() - 1);
  for (std::size_t k = 0; k + 1 < truth.size(); ++k) {
    const GroupElement& now = truth[k].state;
    const GroupElement& next = truth[k + 1].state;
    ImuSample u;
    u.dt = dt;
    u.omega = Eigen::VectorXd::Constant(1, (truth[k + 1].angle - truth[k].angle) / dt);
    u.accel = now.rotation().transpose() * ((next.velocity() - now.velocity()) / dt - g);
    imu.push_back(std::move(u));
  }
  return imu;
}

std::vector<ImuSample> synthesize_imu(const std::vector<TruthSample>& truth, const SimConfig& cfg,
                                      std::mt19937_64& rng) {
  std::vector<ImuSample> imu = exact_imu(truth, cfg);
  std::normal_distribution<double> gyro(0.0, 1.0);
  std::normal_distribution<double> accel(0.0, 1.0);
  for (ImuSample& u : imu) {
    u.omega(0) += cfg.gyro_noise_std * gyro(rng);
    u.accel(0) += cfg.accel_noise_std * accel(rng);
    u.accel(1) += cfg.accel_noise_std * accel(rng);
  }
  return imu;
}

std::mt19937_64 run_stream(std::uint64_t seed, int run_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run_index), 0x6e66u};
  return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------
// Monte-Carlo runs

std::optional<int> steps_to_one_percent(const std::vector<double>& err_norm) {
  if (err_norm.empty()) return std::nullopt;
  const double threshold = 0.01 * err_norm.front();
  for (std::size_t k = 1; k < err_norm.size(); ++k) {
    if (err_norm[k] <= threshold) return static_cast<int>(k);
  }
  return std::nullopt;
}

namespace {

double error_norm(const GroupElement& estimate, const GroupElement& truth) {
  try {
    return log(compose(inverse(estimate), truth)).norm();
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

TrajectoryRecord simulate_run(const SimConfig& cfg, const std::vector<TruthSample>& truth,
                              const std::vector<FilterKind>& filters, int run_index) {
  std::mt19937_64 rng = run_stream(cfg.seed, run_index);

  TrajectoryRecord record;
  record.run = run_index;
  if (cfg.initial_error) {
    record.initial_error = *cfg.initial_error;
  } else {
    const PsdFactor f = factor_psd(cfg.p0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd w(f.rank());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = normal(rng);
    record.initial_error = f.L * w;
  }
  record.imu = synthesize_imu(truth, cfg, rng);
  record.constraints.reserve(truth.size());
  for (const TruthSample& s : truth) record.constraints.push_back(crane_constraint(Space::Planar, s.length));

  // Initial error is exactly xi0 under the left-invariant convention.
  const GroupElement initial_mean =
      compose(truth.front().state, exp(Tangent(Space::Planar, -record.initial_error)));
  const FilterSettings settings = cfg.filter_settings();

  for (FilterKind kind : filters) {
    FilterTrace trace;
    trace.kind = kind;
    auto filter = make_filter(kind, initial_mean, cfg.p0, settings);
    trace.err_norm.reserve(truth.size());
    trace.err_norm.push_back(error_norm(filter->estimate(), truth.front().state));
    trace.cycles.push_back(0);
    trace.snapshots.push_back(Belief{filter->estimate(), filter->covariance()});

    bool failed = false;
    for (std::size_t k = 1; k < truth.size(); ++k) {
      if (!failed) {
        try {
          filter->propagate(record.imu[k - 1]);
          const UpdateReport report = filter->update(record.constraints[k]);
          trace.cycles.push_back(report.iterations);
          if (report.diverged) ++trace.diverged_updates;
          trace.err_norm.push_back(error_norm(filter->estimate(), truth[k].state));
          trace.snapshots.push_back(Belief{filter->estimate(), filter->covariance()});
          if (!std::isfinite(trace.err_norm.back())) failed = true;
          continue;
        } catch (const std::exception&) {
          failed = true;
        }
      }
      trace.cycles.push_back(0);
      trace.err_norm.push_back(std::numeric_limits<double>::quiet_NaN());
      trace.snapshots.push_back(trace.snapshots.back());
    }
    trace.diverged = failed || trace.diverged_updates > 0;
    trace.steps_to_1pct = steps_to_one_percent(trace.err_norm);
    record.traces.push_back(std::move(trace));
  }
  return record;
}

FilterSummary summarize(FilterKind kind, const std::vector<TrajectoryRecord>& runs, int steps) {
  FilterSummary s;
  s.kind = kind;
  s.err_mean.assign(steps + 1, 0.0);
  s.err_std.assign(steps + 1, 0.0);

  std::vector<const FilterTrace*> used;
  for (const TrajectoryRecord& run : runs) {
    for (const FilterTrace& t : run.traces) {
      if (t.kind != kind) continue;
      if (t.diverged) {
        ++s.diverged_runs;
      } else {
        used.push_back(&t);
      }
    }
  }
  s.runs_used = static_cast<int>(used.size());
  if (used.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::fill(s.err_mean.begin(), s.err_mean.end(), nan);
    std::fill(s.err_std.begin(), s.err_std.end(), nan);
    s.steps_mean = s.steps_std = s.final_err_mean = s.mean_cycles = nan;
    return s;
  }

  const double count = static_cast<double>(used.size());
  for (int k = 0; k <= steps; ++k) {
    double sum = 0.0;
    for (const FilterTrace* t : used) sum += t->err_norm[k];
    const double mean = sum / count;
    double sq = 0.0;
    for (const FilterTrace* t : used) sq += (t->err_norm[k] - mean) * (t->err_norm[k] - mean);
    s.err_mean[k] = mean;
    s.err_std[k] = std::sqrt(sq / count);
  }

  double step_sum = 0.0;
  std::vector<double> step_values;
  double cycle_sum = 0.0;
  for (const FilterTrace* t : used) {
    const double v = t->steps_to_1pct ? *t->steps_to_1pct : static_cast<double>(steps + 1);
    if (!t->steps_to_1pct) ++s.unreached_runs;
    step_values.push_back(v);
    step_sum += v;
    for (int k = 1; k <= steps; ++k) cycle_sum += t->cycles[k];
  }
  s.steps_mean = step_sum / count;
  double sq = 0.0;
  for (double v : step_values) sq += (v - s.steps_mean) * (v - s.steps_mean);
  s.steps_std = std::sqrt(sq / count);
  s.final_err_mean = s.err_mean.back();
  s.mean_cycles = cycle_sum / (count * steps);
  return s;
}

const FilterSummary& BenchmarkResult::summary(FilterKind kind) const {
  for (const FilterSummary& s : summaries) {
    if (s.kind == kind) return s;
  }
  throw std::out_of_range("filter " + to_string(kind) + " was not part of the benchmark");
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("NFIEKF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

BenchmarkResult run_benchmark(const SimConfig& cfg, const CableProfile& profile,
                              const std::vector<FilterKind>& filters, unsigned threads) {
  BenchmarkResult result;
  result.config = cfg;
  result.profile = profile;
  result.filters = filters;

  const std::vector<TruthSample> truth = simulate_truth(cfg, profile);
  for (const TruthSample& s : truth) result.times.push_back(s.time);

  result.runs.resize(cfg.runs);
  if (threads == 0) threads = default_thread_count();
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.runs));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (int i = next++; i < cfg.runs && !failed; i = next++) {
      try {
        result.runs[i] = simulate_run(cfg, truth, filters, i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (FilterKind kind : filters) result.summaries.push_back(summarize(kind, result.runs, cfg.steps()));
  return result;
}

}  // namespace nfiekf
