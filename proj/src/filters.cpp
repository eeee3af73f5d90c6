#include "nfiekf/filters.hpp"

#include <cmath>
#include <limits>

#include "nfiekf/errors.hpp"

namespace nfiekf {

LinearBelief kf_propagate(const LinearBelief& b, const Eigen::MatrixXd& f, const Eigen::MatrixXd& b_in,
                          const Eigen::VectorXd& u, const Eigen::MatrixXd& q) {
  LinearBelief out;
  out.mean = f * b.mean;
  if (b_in.size() != 0) out.mean += b_in * u;
  out.cov = symmetrize(f * b.cov * f.transpose() + q);
  return out;
}

LinearBelief kf_update(const LinearBelief& b, const Eigen::MatrixXd& h, const Eigen::VectorXd& y,
                       const std::optional<Eigen::MatrixXd>& n, CovarianceForm form) {
  const Eigen::MatrixXd k = n ? noisy_gain(b.cov, h, *n) : limit_gain(b.cov, h);
  LinearBelief out;
  out.mean = b.mean + k * (y - h * b.mean);
  if (form == CovarianceForm::Plain) {
    out.cov = plain_update_cov(b.cov, h, k);
  } else if (n) {
    out.cov = joseph_update_cov(b.cov, h, k, *n);
  } else {
    out.cov = noise_free_update_cov(b.cov, h, k);
  }
  return out;
}

Belief iekf_propagate(const Belief& b, const ImuSample& u, const NoiseParams& noise,
                      const Eigen::VectorXd& g) {
  const Eigen::MatrixXd f = jacobian_F(u);
  const Eigen::MatrixXd q = process_noise(noise, u.space(), u.dt);
  return {propagate_mean(b.mean, u, g), symmetrize(f * b.cov * f.transpose() + q)};
}

namespace {

void split_innovation(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h, const Eigen::VectorXd& z,
                      UpdateReport& report) {
  const Eigen::VectorXd z_par = innovation_range_projector(p_prior, h) * z;
  report.parallel_norm = z_par.norm();
  report.perpendicular_norm = (z - z_par).norm();
}

GroupElement retract(const GroupElement& chi, const Eigen::VectorXd& correction) {
  return compose(chi, exp(Tangent(chi.space(), correction)));
}

}  // namespace

std::pair<Belief, UpdateReport> iekf_update(const Belief& b, const Constraint& c, const NoiseParams& noise) {
  const Eigen::MatrixXd h = jacobian_H(c);
  const Eigen::VectorXd z = innovation(b.mean, c);

  Eigen::MatrixXd k;
  Eigen::MatrixXd cov;
  if (noise.meas_cov) {
    k = noisy_gain(b.cov, h, *noise.meas_cov);
    cov = joseph_update_cov(b.cov, h, k, *noise.meas_cov);
  } else {
    k = limit_gain(b.cov, h);
    cov = noise_free_update_cov(b.cov, h, k);
  }

  UpdateReport report;
  split_innovation(b.cov, h, z, report);
  GroupElement mean = retract(b.mean, k * z);
  report.iterations = 1;
  report.residual_norms = {z.norm(), innovation(mean, c).norm()};
  return {Belief{std::move(mean), std::move(cov)}, report};
}

std::pair<Belief, UpdateReport> nf_iekf_update(const Belief& b, const Constraint& c, double tol,
                                               int max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("cycle tolerance must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");

  const Eigen::MatrixXd h = jacobian_H(c);
  const Eigen::MatrixXd k = limit_gain(b.cov, h);
  Eigen::MatrixXd cov = noise_free_update_cov(b.cov, h, k);

  UpdateReport report;
  Eigen::VectorXd z = innovation(b.mean, c);
  split_innovation(b.cov, h, z, report);
  report.residual_norms.push_back(z.norm());

  // Already on the constraint: nothing to cycle on.
  if (z.norm() <= tol) return {Belief{b.mean, std::move(cov)}, report};

  GroupElement chi = b.mean;
  GroupElement best = chi;
  double best_norm = z.norm();
  Eigen::VectorXd z_prev = z;
  do {
    if (report.iterations == max_iter) {
      report.diverged = true;
      break;
    }
    chi = retract(chi, k * z);
    z_prev = z;
    z = innovation(chi, c);
    ++report.iterations;
    report.residual_norms.push_back(z.norm());

    if (!std::isfinite(z.norm()) || z.norm() > z_prev.norm() + tol) {
      report.diverged = true;
      break;
    }
    if (z.norm() < best_norm) {
      best = chi;
      best_norm = z.norm();
    }
  } while ((z - z_prev).norm() > tol);

  return {Belief{report.diverged ? best : chi, std::move(cov)}, report};
}

// ---------------------------------------------------------------------------

namespace {

void require_planar_chart(const Eigen::VectorXd& x) {
  if (x.size() != tangent_dim(Space::Planar)) {
    throw DimensionError("EKF chart is (theta, v, p) in the plane");
  }
}

}  // namespace

GroupElement ekf_to_group(const Eigen::VectorXd& x) {
  require_planar_chart(x);
  return {so2::exp(x(0)), x.segment<2>(1), x.segment<2>(3)};
}

Eigen::VectorXd ekf_from_group(const GroupElement& chi) {
  if (chi.space() != Space::Planar) throw DimensionError("EKF chart is planar only");
  const Eigen::MatrixXd r = chi.rotation();
  Eigen::VectorXd x(5);
  x << std::atan2(r(1, 0), r(0, 0)), chi.velocity(), chi.position();
  return x;
}

Eigen::VectorXd ekf_propagate_state(const Eigen::VectorXd& x, const ImuSample& u,
                                    const Eigen::VectorXd& g) {
  require_planar_chart(x);
  if (u.space() != Space::Planar) throw DimensionError("EKF chart is planar only");
  Eigen::VectorXd out(5);
  out(0) = x(0) + u.omega(0) * u.dt;
  out.segment<2>(1) = x.segment<2>(1) + (so2::exp(x(0)) * u.accel + g) * u.dt;
  out.segment<2>(3) = x.segment<2>(3) + x.segment<2>(1) * u.dt;
  return out;
}

Eigen::MatrixXd ekf_jacobian_F(const Eigen::VectorXd& x, const ImuSample& u) {
  require_planar_chart(x);
  Eigen::MatrixXd f = Eigen::MatrixXd::Identity(5, 5);
  f.block<2, 1>(1, 0) = u.dt * so2::generator() * so2::exp(x(0)) * u.accel;
  f.block<2, 2>(3, 1) = u.dt * Eigen::Matrix2d::Identity();
  return f;
}

Eigen::VectorXd ekf_output(const Eigen::VectorXd& x, const Constraint& c) {
  require_planar_chart(x);
  return so2::exp(x(0)) * c.r + c.alpha * x.segment<2>(1) + c.beta * x.segment<2>(3);
}

Eigen::MatrixXd ekf_jacobian_H(const Eigen::VectorXd& x, const Constraint& c) {
  require_planar_chart(x);
  Eigen::MatrixXd h(2, 5);
  h.col(0) = so2::generator() * so2::exp(x(0)) * c.r;
  h.block<2, 2>(0, 1) = c.alpha * Eigen::Matrix2d::Identity();
  h.block<2, 2>(0, 3) = c.beta * Eigen::Matrix2d::Identity();
  return h;
}

EkfBelief ekf_propagate(const EkfBelief& b, const ImuSample& u, const NoiseParams& noise,
                        const Eigen::VectorXd& g) {
  const Eigen::MatrixXd f = ekf_jacobian_F(b.mean, u);
  // Accelerometer noise is expressed in the body frame; the chart velocity lives in the world frame.
  const Eigen::Matrix2d r = so2::exp(b.mean(0));
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(5, 5);
  q(0, 0) = noise.gyro_cov(0, 0);
  q.block<2, 2>(1, 1) = r * noise.accel_cov * r.transpose();
  return {ekf_propagate_state(b.mean, u, g), symmetrize(f * b.cov * f.transpose() + q * u.dt)};
}

std::pair<EkfBelief, UpdateReport> ekf_update(const EkfBelief& b, const Constraint& c,
                                              const NoiseParams& noise) {
  const Eigen::MatrixXd h = ekf_jacobian_H(b.mean, c);
  const Eigen::VectorXd z = c.y - ekf_output(b.mean, c);

  Eigen::MatrixXd k;
  Eigen::MatrixXd cov;
  if (noise.meas_cov) {
    k = noisy_gain(b.cov, h, *noise.meas_cov);
    cov = joseph_update_cov(b.cov, h, k, *noise.meas_cov);
  } else {
    k = limit_gain(b.cov, h);
    cov = noise_free_update_cov(b.cov, h, k);
  }

  UpdateReport report;
  split_innovation(b.cov, h, z, report);
  EkfBelief out{b.mean + k * z, std::move(cov)};
  report.iterations = 1;
  report.residual_norms = {z.norm(), (c.y - ekf_output(out.mean, c)).norm()};
  return {std::move(out), report};
}

// ---------------------------------------------------------------------------

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::Ekf:
      return "ekf";
    case FilterKind::Iekf:
      return "iekf";
    case FilterKind::NoiseFreeIekf:
      return "nf-iekf";
  }
  return "unknown";
}

std::optional<FilterKind> parse_filter_kind(const std::string& name) {
  if (name == "ekf") return FilterKind::Ekf;
  if (name == "iekf") return FilterKind::Iekf;
  if (name == "nf-iekf") return FilterKind::NoiseFreeIekf;
  return std::nullopt;
}

namespace {

class EkfFilter final : public Filter {
public:
  EkfFilter(const GroupElement& mean, const Eigen::MatrixXd& cov, FilterSettings settings)
      : belief_{ekf_from_group(mean), cov}, settings_(std::move(settings)) {}

  FilterKind kind() const override { return FilterKind::Ekf; }
  void propagate(const ImuSample& u) override {
    belief_ = ekf_propagate(belief_, u, settings_.noise, settings_.gravity);
  }
  UpdateReport update(const Constraint& c) override {
    auto [next, report] = ekf_update(belief_, c, settings_.noise);
    belief_ = std::move(next);
    return report;
  }
  GroupElement estimate() const override { return ekf_to_group(belief_.mean); }
  const Eigen::MatrixXd& covariance() const override { return belief_.cov; }

private:
  EkfBelief belief_;
  FilterSettings settings_;
};

class IekfFilter final : public Filter {
public:
  IekfFilter(const GroupElement& mean, const Eigen::MatrixXd& cov, FilterSettings settings)
      : belief_{mean, cov}, settings_(std::move(settings)) {}

  FilterKind kind() const override { return FilterKind::Iekf; }
  void propagate(const ImuSample& u) override {
    belief_ = iekf_propagate(belief_, u, settings_.noise, settings_.gravity);
  }
  UpdateReport update(const Constraint& c) override {
    auto [next, report] = iekf_update(belief_, c, settings_.noise);
    belief_ = std::move(next);
    return report;
  }
  GroupElement estimate() const override { return belief_.mean; }
  const Eigen::MatrixXd& covariance() const override { return belief_.cov; }

private:
  Belief belief_;
  FilterSettings settings_;
};

class NoiseFreeIekfFilter final : public Filter {
public:
  NoiseFreeIekfFilter(const GroupElement& mean, const Eigen::MatrixXd& cov, FilterSettings settings)
      : belief_{mean, cov}, settings_(std::move(settings)) {}

  FilterKind kind() const override { return FilterKind::NoiseFreeIekf; }
  void propagate(const ImuSample& u) override {
    belief_ = iekf_propagate(belief_, u, settings_.noise, settings_.gravity);
  }
  UpdateReport update(const Constraint& c) override {
    auto [next, report] = nf_iekf_update(belief_, c, settings_.tol, settings_.max_iter);
    belief_ = std::move(next);
    return report;
  }
  GroupElement estimate() const override { return belief_.mean; }
  const Eigen::MatrixXd& covariance() const override { return belief_.cov; }

private:
  Belief belief_;
  FilterSettings settings_;
};

}  // namespace

std::unique_ptr<Filter> make_filter(FilterKind kind, const GroupElement& initial_mean,
                                    const Eigen::MatrixXd& initial_cov, const FilterSettings& settings) {
  switch (kind) {
    case FilterKind::Ekf:
      return std::make_unique<EkfFilter>(initial_mean, initial_cov, settings);
    case FilterKind::Iekf:
      return std::make_unique<IekfFilter>(initial_mean, initial_cov, settings);
    case FilterKind::NoiseFreeIekf:
      return std::make_unique<NoiseFreeIekfFilter>(initial_mean, initial_cov, settings);
  }
  throw std::invalid_argument("unknown filter kind");
}

}  // namespace nfiekf
