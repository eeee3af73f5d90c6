#include "nfiekf/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace nfiekf {
namespace {

using nlohmann::json;

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find('"' + key + '"');
  return pos == std::string::npos ? 0 : line_of_offset(text, pos);
}

double as_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument(key + " must be a number");
  return v.get<double>();
}

long long as_integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw std::invalid_argument(key + " must be an integer");
  return v.get<long long>();
}

Eigen::MatrixXd parse_p0(const json& v) {
  if (!v.is_array() || v.size() != 5) throw std::invalid_argument("p0 must have 5 rows or 5 diagonal entries");
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(5, 5);
  if (v.front().is_number()) {
    for (int i = 0; i < 5; ++i) p(i, i) = as_number(v[i], "p0 entry");
    return p;
  }
  for (int i = 0; i < 5; ++i) {
    if (!v[i].is_array() || v[i].size() != 5) throw std::invalid_argument("p0 rows must have 5 entries");
    for (int j = 0; j < 5; ++j) p(i, j) = as_number(v[i][j], "p0 entry");
  }
  return p;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

}  // namespace

ConfigError::ConfigError(int line, const std::string& message)
    : std::invalid_argument(line > 0 ? fmt::format("line {}: {}", line, message) : message), line_(line) {}

std::vector<FilterKind> parse_filter_list(const std::string& text) {
  std::vector<FilterKind> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto kind = parse_filter_kind(item);
    if (!kind) throw std::invalid_argument("unknown filter '" + item + "' (expected ekf, iekf or nf-iekf)");
    if (std::find(out.begin(), out.end(), *kind) != out.end()) {
      throw std::invalid_argument("filter '" + item + "' listed twice");
    }
    out.push_back(*kind);
  }
  if (out.empty()) throw std::invalid_argument("filter list is empty");
  return out;
}

BenchmarkSetup parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0), e.what());
  }
  if (!doc.is_object()) throw ConfigError(1, "configuration must be a JSON object");

  BenchmarkSetup setup;
  SimConfig& cfg = setup.config;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "theta0_deg") {
        cfg.theta0 = as_number(value, key) * std::numbers::pi / 180.0;
      } else if (key == "duration_s") {
        cfg.duration = as_number(value, key);
      } else if (key == "rate_hz") {
        cfg.rate = as_number(value, key);
      } else if (key == "substeps") {
        cfg.substeps = static_cast<int>(as_integer(value, key));
      } else if (key == "gravity") {
        cfg.gravity = as_number(value, key);
      } else if (key == "gyro_noise_std") {
        cfg.gyro_noise_std = as_number(value, key);
      } else if (key == "accel_noise_std") {
        cfg.accel_noise_std = as_number(value, key);
      } else if (key == "p0") {
        cfg.p0 = parse_p0(value);
      } else if (key == "baseline_meas_var") {
        cfg.baseline_meas_var = as_number(value, key);
      } else if (key == "tol") {
        cfg.tol = as_number(value, key);
      } else if (key == "max_iter") {
        cfg.max_iter = static_cast<int>(as_integer(value, key));
      } else if (key == "runs") {
        cfg.runs = static_cast<int>(as_integer(value, key));
      } else if (key == "seed") {
        if (!value.is_number_unsigned()) throw std::invalid_argument("seed must be a non-negative integer");
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "profile") {
        if (!value.is_string()) throw std::invalid_argument("profile must be a string of t:l knots");
        setup.profile = CableProfile::parse(value.get<std::string>());
      } else if (key == "filters") {
        if (!value.is_array()) throw std::invalid_argument("filters must be an array of names");
        std::string joined;
        for (const auto& f : value) {
          if (!f.is_string()) throw std::invalid_argument("filter names must be strings");
          joined += (joined.empty() ? "" : ",") + f.get<std::string>();
        }
        setup.filters = parse_filter_list(joined);
      } else if (key == "initial_error") {
        if (!value.is_array() || value.size() != 5) {
          throw std::invalid_argument("initial_error must have 5 entries");
        }
        Eigen::VectorXd xi(5);
        for (int i = 0; i < 5; ++i) xi(i) = as_number(value[i], "initial_error entry");
        cfg.initial_error = xi;
      } else {
        throw std::invalid_argument("unknown key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(line_of_key(text, key), e.what());
    }
  }

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    // validate() names the field; map it back to the key when present.
    const std::string msg = e.what();
    int line = 0;
    for (const auto& [key, value] : doc.items()) {
      std::string stem = key.substr(0, key.find('_'));
      if (msg.rfind(stem, 0) == 0) line = line_of_key(text, key);
    }
    throw ConfigError(line, msg);
  }
  return setup;
}

BenchmarkSetup load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

json config_to_json(const BenchmarkSetup& setup) {
  const SimConfig& cfg = setup.config;
  json j;
  j["theta0_deg"] = cfg.theta0 * 180.0 / std::numbers::pi;
  j["duration_s"] = cfg.duration;
  j["rate_hz"] = cfg.rate;
  j["substeps"] = cfg.substeps;
  j["gravity"] = cfg.gravity;
  j["gyro_noise_std"] = cfg.gyro_noise_std;
  j["accel_noise_std"] = cfg.accel_noise_std;
  json p0 = json::array();
  for (Eigen::Index i = 0; i < cfg.p0.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < cfg.p0.cols(); ++k) row.push_back(cfg.p0(i, k));
    p0.push_back(row);
  }
  j["p0"] = p0;
  j["baseline_meas_var"] = cfg.baseline_meas_var;
  j["tol"] = cfg.tol;
  j["max_iter"] = cfg.max_iter;
  j["runs"] = cfg.runs;
  j["seed"] = cfg.seed;
  j["profile"] = setup.profile.to_string();
  json filters = json::array();
  for (FilterKind f : setup.filters) filters.push_back(to_string(f));
  j["filters"] = filters;
  if (cfg.initial_error) {
    j["initial_error"] = std::vector<double>(cfg.initial_error->data(),
                                             cfg.initial_error->data() + cfg.initial_error->size());
  }
  return j;
}

void write_summary_csv(std::ostream& os, const BenchmarkResult& result) {
  os << "step,time_s,filter_name,err_norm_mean,err_norm_std\n";
  for (const FilterSummary& s : result.summaries) {
    const std::string name = to_string(s.kind);
    for (std::size_t k = 0; k < result.times.size(); ++k) {
      os << k << ',' << fmt_double(result.times[k]) << ',' << name << ',' << fmt_double(s.err_mean[k]) << ','
         << fmt_double(s.err_std[k]) << '\n';
    }
  }
}

void write_runs_csv(std::ostream& os, const BenchmarkResult& result) {
  os << "run,step,time_s,filter_name,err_norm,cycles,run_diverged\n";
  for (const TrajectoryRecord& run : result.runs) {
    for (const FilterTrace& t : run.traces) {
      const std::string name = to_string(t.kind);
      for (std::size_t k = 0; k < t.err_norm.size(); ++k) {
        os << run.run << ',' << k << ',' << fmt_double(result.times[k]) << ',' << name << ','
           << fmt_double(t.err_norm[k]) << ',' << t.cycles[k] << ',' << (t.diverged ? 1 : 0) << '\n';
      }
    }
  }
}

json RunManifest::to_json() const {
  json j;
  j["version"] = version;
  j["seed"] = seed;
  j["config"] = config;
  json stats = json::array();
  for (const FilterStats& f : filters) {
    json s;
    s["filter"] = f.filter;
    s["steps_to_1pct_mean"] = f.steps_to_1pct_mean;
    s["steps_to_1pct_std"] = f.steps_to_1pct_std;
    s["final_err_mean"] = f.final_err_mean;
    s["runs_used"] = f.runs_used;
    s["diverged_runs"] = f.diverged_runs;
    s["diverged_updates"] = f.diverged_updates;
    s["unreached_runs"] = f.unreached_runs;
    s["mean_cycles"] = f.mean_cycles;
    stats.push_back(s);
  }
  j["filters"] = stats;
  return j;
}

RunManifest make_manifest(const BenchmarkSetup& setup, const BenchmarkResult& result) {
  RunManifest m;
  m.config = config_to_json(setup);
  m.seed = setup.config.seed;
  for (const FilterSummary& s : result.summaries) {
    RunManifest::FilterStats f;
    f.filter = to_string(s.kind);
    f.steps_to_1pct_mean = s.steps_mean;
    f.steps_to_1pct_std = s.steps_std;
    f.final_err_mean = s.final_err_mean;
    f.runs_used = s.runs_used;
    f.diverged_runs = s.diverged_runs;
    f.unreached_runs = s.unreached_runs;
    f.mean_cycles = s.mean_cycles;
    for (const TrajectoryRecord& run : result.runs) {
      for (const FilterTrace& t : run.traces) {
        if (t.kind == s.kind) f.diverged_updates += t.diverged_updates;
      }
    }
    m.filters.push_back(f);
  }
  return m;
}

std::string format_summary_table(const BenchmarkResult& result) {
  std::string out = fmt::format("{:<8} {:>14} {:>10} {:>14} {:>9} {:>9} {:>11}\n", "filter", "steps-to-1%",
                                "std", "final |xi|", "diverged", "unreached", "mean cycles");
  for (const FilterSummary& s : result.summaries) {
    out += fmt::format("{:<8} {:>14.2f} {:>10.2f} {:>14.3e} {:>9} {:>9} {:>11.3f}\n", to_string(s.kind),
                       s.steps_mean, s.steps_std, s.final_err_mean, s.diverged_runs, s.unreached_runs,
                       s.mean_cycles);
  }
  return out;
}

}  // namespace nfiekf
