#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "nfiekf/filters.hpp"
#include "nfiekf/gain.hpp"
#include "nfiekf/lie.hpp"
#include "nfiekf/sim.hpp"

namespace nfiekf::cli {
namespace fs = std::filesystem;

namespace {

using FileSet = std::vector<std::pair<std::string, std::string>>;  // name, contents

// Everything is rendered in memory first; files appear only once all of them are written, so a
// failure never leaves a partial set behind.
void publish(const fs::path& dir, const FileSet& files) {
  fs::create_directories(dir);
  std::vector<fs::path> staged;
  try {
    for (const auto& [name, contents] : files) {
      const fs::path tmp = dir / ("." + name + ".tmp");
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      staged.push_back(tmp);
      os << contents;
      os.close();
      if (!os) throw std::runtime_error("cannot write " + tmp.string());
    }
  } catch (...) {
    for (const fs::path& p : staged) fs::remove(p);
    throw;
  }
  for (std::size_t i = 0; i < files.size(); ++i) fs::rename(staged[i], dir / files[i].first);
}

std::string manifest_text(const BenchmarkSetup& setup, const BenchmarkResult& result) {
  return make_manifest(setup, result).to_json().dump(2) + "\n";
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

}  // namespace

BenchmarkSetup resolve_setup(const CommonOptions& opts) {
  BenchmarkSetup setup = opts.config ? load_config_file(*opts.config) : BenchmarkSetup{};
  SimConfig& cfg = setup.config;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.runs) cfg.runs = *opts.runs;
  if (opts.tol) cfg.tol = *opts.tol;
  if (opts.filters) setup.filters = parse_filter_list(*opts.filters);
  if (opts.profile) setup.profile = CableProfile::parse(*opts.profile);
  cfg.validate();
  if (setup.profile.end_time() < cfg.duration || setup.profile.start_time() > 0.0) {
    throw std::invalid_argument("cable profile must cover [0, duration]");
  }
  return setup;
}

int cmd_bench(const BenchOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const BenchmarkSetup setup = resolve_setup(opts.common);
    const BenchmarkResult result = run_benchmark(setup.config, setup.profile, setup.filters, opts.threads);

    std::ostringstream summary;
    std::ostringstream runs;
    write_summary_csv(summary, result);
    write_runs_csv(runs, result);
    publish(opts.out, {{"summary.csv", summary.str()},
                       {"runs.csv", runs.str()},
                       {"manifest.json", manifest_text(setup, result)}});

    out << format_summary_table(result);
    out << "wrote " << (opts.out / "summary.csv").string() << ", runs.csv, manifest.json\n";
    return static_cast<int>(kOk);
  });
}

int cmd_demo(const DemoOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    BenchmarkSetup setup = resolve_setup(opts.common);
    SimConfig& cfg = setup.config;
    if (opts.run < 0) throw std::invalid_argument("--run must be non-negative");
    if (opts.xi0_scale) cfg.initial_error = *opts.xi0_scale * cfg.p0.diagonal().cwiseSqrt();

    const std::vector<TruthSample> truth = simulate_truth(cfg, setup.profile);
    BenchmarkResult result;
    result.config = cfg;
    result.profile = setup.profile;
    result.filters = setup.filters;
    for (const TruthSample& s : truth) result.times.push_back(s.time);
    result.runs.push_back(simulate_run(cfg, truth, setup.filters, opts.run));
    for (FilterKind kind : setup.filters) result.summaries.push_back(summarize(kind, result.runs, cfg.steps()));
    const TrajectoryRecord& rec = result.runs.front();

    std::ostringstream table;
    table << "step,time_s";
    for (const FilterTrace& t : rec.traces) table << ',' << to_string(t.kind) << "_err," << to_string(t.kind) << "_cycles";
    table << '\n';
    for (std::size_t k = 0; k < truth.size(); ++k) {
      table << k << ',' << fmt::format("{}", result.times[k]);
      for (const FilterTrace& t : rec.traces) table << ',' << fmt::format("{}", t.err_norm[k]) << ',' << t.cycles[k];
      table << '\n';
    }

    if (opts.out) publish(*opts.out, {{"demo.csv", table.str()}, {"manifest.json", manifest_text(setup, result)}});

    out << table.str();
    out << fmt::format("initial |xi0| = {:.6g}\n", rec.initial_error.norm());
    for (const FilterTrace& t : rec.traces) {
      double cycles = 0.0;
      for (std::size_t k = 1; k < t.cycles.size(); ++k) cycles += t.cycles[k];
      out << fmt::format("{:<8} steps-to-1% {:>5}  final |xi| {:.3e}  mean cycles {:.3f}  diverged updates {}{}\n",
                         to_string(t.kind), t.steps_to_1pct ? std::to_string(*t.steps_to_1pct) : "never",
                         t.err_norm.back(), cycles / static_cast<double>(t.cycles.size() - 1),
                         t.diverged_updates, t.diverged ? " (run flagged diverged)" : "");
    }
    return static_cast<int>(kOk);
  });
}

int cmd_check(std::uint64_t seed, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    auto random_matrix = [&](Eigen::Index r, Eigen::Index c) {
      Eigen::MatrixXd m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
      return m;
    };

    bool all = true;
    auto report = [&](const std::string& name, double worst, double bound) {
      const bool ok = worst <= bound;
      all = all && ok;
      out << fmt::format("{:<4} {:<42} worst {:.2e} (bound {:.2g})\n", ok ? "ok" : "FAIL", name, worst, bound);
    };

    double roundtrip = 0.0;
    for (Space s : {Space::Planar, Space::Spatial}) {
      for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd xi = random_matrix(tangent_dim(s), 1);
        const double angle = xi.head(rotation_dof(s)).norm();
        if (angle > 2.5) xi.head(rotation_dof(s)) *= 2.5 / angle;  // stay off the branch cut
        roundtrip = std::max(roundtrip, (log(exp(Tangent(s, xi))).coords() - xi).norm());
      }
    }
    report("exp/log round trip", roundtrip, 1e-10);

    double limit = 0.0;
    double annihilation = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Eigen::Index n = 2 + i % 8;
      const Eigen::Index rank = 1 + i % n;
      const Eigen::Index m = 1 + i % 4;
      const Eigen::MatrixXd l = random_matrix(n, rank);
      const Eigen::MatrixXd p = l * l.transpose();
      const Eigen::MatrixXd h = random_matrix(m, n);
      const Eigen::MatrixXd k = limit_gain(p, h);
      // P H^T (H P H^T + delta I)^-1 in extended precision; in double the round-off of the solve,
      // eps |S| |K| / delta, can exceed the gap being measured. With B = H L the same gain is
      // L (B^T B + delta I)^-1 B^T, so solve whichever system is smaller: when P has low rank
      // the m x m one is nearly singular while the rank x rank one is not.
      using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
      const MatrixL ll = l.cast<long double>();
      const MatrixL b = h.cast<long double>() * ll;
      const MatrixL s = b * b.transpose() + 1e-10L * MatrixL::Identity(m, m);
      const MatrixL noisy_l = rank < m ? MatrixL(ll * (b.transpose() * b + 1e-10L * MatrixL::Identity(rank, rank))
                                                          .ldlt()
                                                          .solve(b.transpose()))
                                       : MatrixL(s.ldlt().solve(b * ll.transpose()).transpose());
      const Eigen::MatrixXd noisy = noisy_l.cast<double>();
      // Exactly, |K(delta) - K| <= delta |K| / sigma_min(H L)^2, so an ill-conditioned draw may
      // legitimately sit far from its limit. The second term is the round-off of the solve.
      const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(h * l).singularValues();
      double sigma_min = sv(0);
      for (Eigen::Index j = 0; j < sv.size(); ++j) {
        if (sv(j) > kDefaultRelTol * sv(0)) sigma_min = sv(j);
      }
      const double solve_error =
          static_cast<double>(std::numeric_limits<long double>::epsilon() * s.norm()) * k.norm() / 1e-10;
      const double bound = 1e-10 * k.norm() / (sigma_min * sigma_min) + solve_error;
      limit = std::max(limit, (noisy - k).norm() / bound);
      annihilation = std::max(annihilation, (h * noise_free_update_cov(p, h, k)).norm() / p.norm());
    }
    report("small-noise gain gap / first-order bound", limit, 1.0);
    report("H P+ after noise-free update", annihilation, 1e-9);

    const SimConfig cfg;
    const std::vector<TruthSample> truth = simulate_truth(cfg, CableProfile::default_profile());
    double residual = 0.0;
    for (const TruthSample& s : truth) {
      const Constraint c = crane_constraint(Space::Planar, s.length);
      residual = std::max(residual, (s.state.rotation() * c.r + s.state.position()).norm());
    }
    report("truth on the cable constraint", residual, 1e-10);

    return static_cast<int>(all ? kOk : kRuntimeFailure);
  });
}

}  // namespace nfiekf::cli
