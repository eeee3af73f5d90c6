#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nfiekf/errors.hpp"
#include "nfiekf/filters.hpp"
#include "nfiekf/sim.hpp"
#include "support.hpp"

using namespace nfiekf;
using testsupport::gaussian;
using testsupport::max_abs;

namespace {

constexpr double kCable = 10.0;

/// Hook on a straight cable of the given angle from the downward vertical.
GroupElement crane_state(double angle, double length, const Eigen::Vector2d& v = Eigen::Vector2d::Zero()) {
  const Eigen::Matrix2d r = so2::exp(angle + std::numbers::pi);
  return {r, v, -r * Eigen::Vector2d(0.0, -length)};
}

/// Sample of N(0, p) through its eigen-decomposition.
Eigen::VectorXd draw(const Eigen::MatrixXd& p) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * gaussian(p.rows());
}

Eigen::VectorXd left_error(const GroupElement& estimate, const GroupElement& truth) {
  return log(inverse(estimate) * truth).coords();
}

NoiseParams baseline_noise(std::optional<Eigen::MatrixXd> meas = Eigen::MatrixXd(1e-4 * Eigen::Matrix2d::Identity())) {
  NoiseParams n;
  n.gyro_cov = Eigen::MatrixXd::Constant(1, 1, 2.5e-7);
  n.accel_cov = 2.5e-7 * Eigen::Matrix2d::Identity();
  n.meas_cov = std::move(meas);
  return n;
}

/// Prior around a crane truth with error xi ~ N(0, P0) and the estimate chi_hat = chi exp(-xi).
struct Scenario {
  GroupElement truth;
  Belief prior;
  Constraint constraint;
};

Scenario crane_scenario(const Eigen::MatrixXd& p0 = SimConfig::default_p0()) {
  const double angle = testsupport::uniform(-0.4, 0.4);
  const GroupElement truth = crane_state(angle, kCable, gaussian(2));
  const Eigen::VectorXd xi = draw(p0);
  return {truth, Belief{truth * exp(Tangent(Space::Planar, -xi)), p0}, crane_constraint(Space::Planar, kCable)};
}

double constraint_residual(const GroupElement& chi, const Constraint& c) {
  return (act(chi, c.descriptor()) - c.lifted_observation()).norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear Kalman filter

TEST_CASE("kf_propagate arithmetic") {
  const LinearBelief b{gaussian(3), testsupport::random_psd(3, 3)};
  const LinearBelief same = kf_propagate(b, Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd(),
                                         Eigen::VectorXd(), Eigen::MatrixXd::Zero(3, 3));
  CHECK(max_abs(same.mean - b.mean) == 0.0);
  CHECK(max_abs(same.cov - b.cov) == 0.0);

  const LinearBelief scalar{Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 1.0)};
  const LinearBelief next = kf_propagate(scalar, Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::MatrixXd::Ones(1, 1),
                                         Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Constant(1, 1, 1.0));
  CHECK(next.cov(0, 0) == 5.0);
  CHECK(next.mean(0) == 5.0);
}

TEST_CASE("kf_update arithmetic") {
  const LinearBelief scalar{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0)};
  const LinearBelief post = kf_update(scalar, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, 2.0),
                                      Eigen::MatrixXd::Constant(1, 1, 1.0));
  CHECK(post.mean(0) == doctest::Approx(1.0));
  CHECK(post.cov(0, 0) == doctest::Approx(0.5));

  // Full noise-free observation pins the state.
  const LinearBelief b{gaussian(4), testsupport::random_psd(4, 4)};
  const Eigen::VectorXd y = gaussian(4);
  const LinearBelief pinned = kf_update(b, Eigen::MatrixXd::Identity(4, 4), y, std::nullopt);
  CHECK(max_abs(pinned.mean - y) < 1e-12);
  CHECK(max_abs(pinned.cov) < 1e-12);
}

TEST_CASE("kf matches an information-filter recursion") {
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 4;
    const Eigen::Index m = 1 + trial % n;
    LinearBelief kf{gaussian(n), testsupport::random_psd(n, n) + Eigen::MatrixXd::Identity(n, n)};
    Eigen::MatrixXd info = kf.cov.inverse();
    Eigen::VectorXd info_vec = info * kf.mean;
    for (int step = 0; step < 3; ++step) {
      const Eigen::MatrixXd f = Eigen::MatrixXd::Identity(n, n) + 0.3 * gaussian(n, n);
      const Eigen::MatrixXd bin = gaussian(n, 1);
      const Eigen::VectorXd u = gaussian(1);
      const Eigen::MatrixXd q = testsupport::random_psd(n, n) * 0.1 + 0.01 * Eigen::MatrixXd::Identity(n, n);
      const Eigen::MatrixXd h = gaussian(m, n);
      const Eigen::MatrixXd noise = testsupport::random_psd(m, m) * 0.2 + 0.1 * Eigen::MatrixXd::Identity(m, m);
      const Eigen::VectorXd y = gaussian(m);
      kf = kf_update(kf_propagate(kf, f, bin, u, q), h, y, noise);

      // Information form: prediction in moment form, then additive information update.
      const Eigen::MatrixXd p_pred = f * info.inverse() * f.transpose() + q;
      const Eigen::VectorXd x_pred = f * info.ldlt().solve(info_vec) + bin * u;
      info = p_pred.inverse() + h.transpose() * noise.inverse() * h;
      info_vec = p_pred.inverse() * x_pred + h.transpose() * noise.inverse() * y;
    }
    const Eigen::MatrixXd p_oracle = info.inverse();
    CHECK(max_abs(kf.cov - p_oracle) < 1e-9 * max_abs(p_oracle));
    CHECK(max_abs(kf.mean - p_oracle * info_vec) < 1e-9 * std::max(1.0, kf.mean.norm()));
  }
}

TEST_CASE("property: noise-free linear updates satisfy the measurement exactly") {
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 2 + trial % 8;
    const Eigen::Index m = 1 + trial % n;
    const LinearBelief b{gaussian(n), testsupport::random_psd(n, n)};
    const Eigen::MatrixXd h = gaussian(m, n);
    const Eigen::VectorXd y = gaussian(m);
    for (CovarianceForm form : {CovarianceForm::Joseph, CovarianceForm::Plain}) {
      const LinearBelief post = kf_update(b, h, y, std::nullopt, form);
      CHECK(max_abs(h * post.mean - y) < 1e-9 * std::max(1.0, y.norm()));
      CHECK(max_abs(h * post.cov * h.transpose()) < 1e-9 * std::max(1.0, b.cov.norm()));
      CHECK(max_abs(h * limit_gain(b.cov, h) - Eigen::MatrixXd::Identity(m, m)) < 1e-9);
    }
    // The same measurement again changes nothing and never inverts a singular matrix.
    const LinearBelief once = kf_update(b, h, y, std::nullopt);
    const LinearBelief twice = kf_update(once, h, y, std::nullopt);
    CHECK(max_abs(twice.mean - once.mean) < 1e-9 * std::max(1.0, once.mean.norm()));
    CHECK(max_abs(twice.cov - once.cov) < 1e-9 * std::max(1.0, b.cov.norm()));
  }
}

// ---------------------------------------------------------------------------
// Invariant filters

TEST_CASE("iekf_propagate covariance") {
  const ImuSample u{Eigen::VectorXd::Constant(1, 0.3), Eigen::Vector2d(0.5, 9.0), 0.01};
  NoiseParams quiet = baseline_noise();
  quiet.gyro_cov.setZero();
  quiet.accel_cov.setZero();
  const Belief zero{crane_state(0.2, kCable), Eigen::MatrixXd::Zero(5, 5)};
  CHECK(iekf_propagate(zero, u, quiet, gravity_vector(Space::Planar)).cov.isZero());

  const double sigma = 0.005;
  NoiseParams gyro_only = quiet;
  gyro_only.gyro_cov(0, 0) = sigma * sigma;
  const Eigen::MatrixXd p1 = iekf_propagate(zero, u, gyro_only, gravity_vector(Space::Planar)).cov;
  CHECK(p1(0, 0) == doctest::Approx(sigma * sigma * u.dt).epsilon(1e-14));
  CHECK(p1.bottomRightCorner(4, 4).isZero());
}

TEST_CASE("iekf_update: zero innovation changes nothing in the mean") {
  const GroupElement truth = crane_state(0.3, kCable, Eigen::Vector2d(0.4, -0.1));
  const Belief prior{truth, SimConfig::default_p0()};
  const auto [post, report] = iekf_update(prior, crane_constraint(Space::Planar, kCable), baseline_noise());
  CHECK(max_abs(post.mean.matrix() - truth.matrix()) < 1e-14);
  CHECK(report.iterations == 1);
  CHECK(report.residual_norms.size() == 2);
}

TEST_CASE("iekf_update linearizes to (I - K H) xi") {
  for (int i = 0; i < 50; ++i) {
    const GroupElement truth = crane_state(testsupport::uniform(-0.4, 0.4), kCable, gaussian(2));
    const Eigen::VectorXd xi = 1e-4 * gaussian(5).normalized();
    const Belief prior{truth * exp(Tangent(Space::Planar, -xi)), SimConfig::default_p0()};
    const Constraint c = crane_constraint(Space::Planar, kCable);
    const NoiseParams noise = baseline_noise();
    const auto [post, report] = iekf_update(prior, c, noise);
    const Eigen::MatrixXd h = jacobian_H(c);
    const Eigen::MatrixXd k = noisy_gain(prior.cov, h, *noise.meas_cov);
    const Eigen::VectorXd predicted = (Eigen::MatrixXd::Identity(5, 5) - k * h) * xi;
    CHECK(max_abs(left_error(post.mean, truth) - predicted) < 10.0 * xi.squaredNorm() * std::max(1.0, k.norm()));
  }
}

namespace {

// Single update from the benchmark's initial state with xi ~ N(0, P0).
struct DrawOutcome {
  int euclidean = 0;  ///< ||xi+|| < ||xi||
  int weighted = 0;   ///< xi+^T P0^-1 xi+ < xi^T P0^-1 xi
};

DrawOutcome iekf_single_update_draws(int draws) {
  const SimConfig cfg;
  const TruthSample start = simulate_truth(cfg, CableProfile::default_profile()).front();
  const Constraint c = crane_constraint(Space::Planar, start.length);
  const Eigen::MatrixXd info = cfg.p0.inverse();
  DrawOutcome out;
  for (int i = 0; i < draws; ++i) {
    const Eigen::VectorXd xi = draw(cfg.p0);
    const Belief prior{start.state * exp(Tangent(Space::Planar, -xi)), cfg.p0};
    const Eigen::VectorXd after = left_error(iekf_update(prior, c, cfg.filter_settings().noise).first.mean, start.state);
    if (after.norm() < xi.norm()) ++out.euclidean;
    if (after.dot(info * after) < xi.dot(info * xi)) ++out.weighted;
  }
  return out;
}

}  // namespace

TEST_CASE("iekf_update reduces the P0-weighted error on every draw") {
  const DrawOutcome o = iekf_single_update_draws(1000);
  CHECK(o.weighted == 1000);
}

// Known to fail with the default P0: the update moves error out of the rotation coordinate
// (cheap in the Euclidean norm, 5 cm/rad of lever at 10 m) into position, and about 13 % of
// draws end with a larger plain norm. A linearized (I - K H) xi model gives the same fraction.
// Registered as its own ctest so the rest of the suite stays meaningful.
TEST_CASE("iekf_update reduces the Euclidean error in at least 95% of P0 draws") {
  const DrawOutcome o = iekf_single_update_draws(1000);
  MESSAGE("plain norm decreased in " << o.euclidean << " of 1000 draws");
  CHECK(o.euclidean >= 950);
}

TEST_CASE("nf_iekf_update on the constraint: no cycles, covariance still conditioned") {
  const GroupElement truth = crane_state(-0.25, kCable, Eigen::Vector2d(0.3, 0.2));
  const Belief prior{truth, SimConfig::default_p0()};
  const Constraint c = crane_constraint(Space::Planar, kCable);
  const auto [post, report] = nf_iekf_update(prior, c);
  CHECK(report.iterations == 0);
  CHECK(report.residual_norms.size() == 1);
  CHECK(!report.diverged);
  CHECK(max_abs(post.mean.matrix() - truth.matrix()) == 0.0);
  CHECK((jacobian_H(c) * post.cov).norm() <= 1e-9 * prior.cov.norm());
  CHECK(max_abs(post.cov - prior.cov) > 1e-3);

  CHECK_THROWS_AS(nf_iekf_update(prior, c, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(nf_iekf_update(prior, c, 1e-7, 0), std::invalid_argument);
}

TEST_CASE("property: nf_iekf_update annihilates HP and keeps residuals monotone") {
  for (int i = 0; i < 300; ++i) {
    const Scenario s = crane_scenario();
    const double tol = 1e-7;
    const auto [post, report] = nf_iekf_update(s.prior, s.constraint, tol);
    const Eigen::MatrixXd h = jacobian_H(s.constraint);
    CHECK((h * post.cov).norm() <= 1e-9 * s.prior.cov.norm());
    CHECK(max_abs(post.cov - post.cov.transpose()) <= 1e-9);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(post.cov).eigenvalues().minCoeff() >=
          -1e-9 * max_eigenvalue(post.cov));
    REQUIRE(report.residual_norms.size() == static_cast<std::size_t>(report.iterations) + 1);
    bool monotone = true;
    for (std::size_t j = 1; j < report.residual_norms.size(); ++j) {
      monotone = monotone && report.residual_norms[j] <= report.residual_norms[j - 1] + tol;
    }
    CHECK((monotone || report.diverged));
    if (!report.diverged) CHECK(innovation(post.mean, s.constraint).norm() <= report.residual_norms.front());
  }
}

TEST_CASE("nf_iekf_update: dispersion stays on the constraint surface") {
  for (int i = 0; i < 20; ++i) {
    const Scenario s = crane_scenario();
    const auto [post, report] = nf_iekf_update(s.prior, s.constraint, 1e-13, 50);
    REQUIRE(!report.diverged);
    REQUIRE(constraint_residual(post.mean, s.constraint) <= 1e-10);
    double worst = 0.0;
    for (int j = 0; j < 100; ++j) {
      worst = std::max(worst, constraint_residual(post.mean * exp(Tangent(Space::Planar, draw(post.cov))), s.constraint));
    }
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("nf_iekf_update: kernel property with a rank-deficient prior") {
  // Rank-one prior: only one innovation direction can be corrected.
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd dir = gaussian(5);
    const Eigen::MatrixXd p = 0.1 * dir * dir.transpose();
    const Scenario s = crane_scenario(p);
    const Eigen::MatrixXd h = jacobian_H(s.constraint);
    const Eigen::MatrixXd k = limit_gain(p, h);
    const Eigen::VectorXd z = innovation(s.prior.mean, s.constraint);
    const Eigen::VectorXd z_perp = (Eigen::Matrix2d::Identity() - innovation_range_projector(p, h)) * z;
    CHECK((k * z_perp).norm() <= 1e-9 * std::max(1.0, z.norm()));
    const auto [post, report] = nf_iekf_update(s.prior, s.constraint);
    CHECK(report.perpendicular_norm == doctest::Approx(z_perp.norm()).epsilon(1e-9));
    CHECK(report.parallel_norm == doctest::Approx((z - z_perp).norm()).epsilon(1e-9));
  }
}

TEST_CASE("nf_iekf_update is idempotent at its fixed point") {
  for (int i = 0; i < 50; ++i) {
    const Scenario s = crane_scenario();
    const auto [once, first] = nf_iekf_update(s.prior, s.constraint);
    if (first.diverged) continue;
    const auto [twice, second] = nf_iekf_update(once, s.constraint);
    CHECK(second.iterations == 0);
    CHECK(max_abs(twice.mean.matrix() - once.mean.matrix()) <= 1e-10);
    CHECK(max_abs(twice.cov - once.cov) <= 1e-10);
  }
}

TEST_CASE("nf_iekf_update flags divergence and keeps the best iterate") {
  // A wild prior (cable angle off by ~3 rad) makes the frozen gain overshoot.
  int flagged = 0;
  for (int i = 0; i < 50; ++i) {
    const Scenario s = crane_scenario(400.0 * SimConfig::default_p0());
    const auto [post, report] = nf_iekf_update(s.prior, s.constraint, 1e-7, 5);
    CHECK(report.iterations <= 5);
    REQUIRE(report.residual_norms.size() == static_cast<std::size_t>(report.iterations) + 1);
    if (!report.diverged) continue;
    ++flagged;
    double best = report.residual_norms.front();
    for (double r : report.residual_norms) best = std::min(best, r);
    CHECK(innovation(post.mean, s.constraint).norm() == doctest::Approx(best).epsilon(1e-9));
  }
  MESSAGE(flagged << " of 50 wild priors flagged divergence");
  CHECK(flagged > 0);
}

TEST_CASE("iekf with N = 0 equals the small-noise limit of the baseline iekf") {
  for (int i = 0; i < 50; ++i) {
    const Scenario s = crane_scenario();
    const auto [limit, r0] = iekf_update(s.prior, s.constraint, baseline_noise(std::nullopt));
    const auto [small, r1] =
        iekf_update(s.prior, s.constraint, baseline_noise(Eigen::MatrixXd(1e-10 * Eigen::Matrix2d::Identity())));
    const Eigen::MatrixXd h = jacobian_H(s.constraint);
    CHECK((limit_gain(s.prior.cov, h) - noisy_gain(s.prior.cov, h, 1e-10 * Eigen::Matrix2d::Identity())).norm() <=
          1e-4);
    CHECK(max_abs(log(inverse(limit.mean) * small.mean).coords()) <= 1e-4);
    CHECK(max_abs(limit.cov - small.cov) <= 1e-4);
  }
}

// ---------------------------------------------------------------------------
// EKF baseline

TEST_CASE("ekf chart round trip") {
  for (int i = 0; i < 50; ++i) {
    const GroupElement chi = testsupport::random_element(Space::Planar);
    CHECK(max_abs(ekf_to_group(ekf_from_group(chi)).matrix() - chi.matrix()) < 1e-12);
  }
  CHECK_THROWS_AS(ekf_to_group(Eigen::VectorXd::Zero(9)), DimensionError);
  CHECK_THROWS_AS(ekf_from_group(GroupElement::identity(Space::Spatial)), DimensionError);
}

TEST_CASE("ekf Jacobians match finite differences") {
  const Eigen::VectorXd g = gravity_vector(Space::Planar);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd x = gaussian(5);
    const ImuSample u{gaussian(1), 5.0 * gaussian(2), testsupport::uniform(0.005, 0.05)};
    const Eigen::MatrixXd f_num = testsupport::numeric_jacobian(
        [&](const Eigen::VectorXd& s) { return ekf_propagate_state(s, u, g); }, x);
    CHECK(max_abs(ekf_jacobian_F(x, u) - f_num) < 1e-6);

    Constraint c;
    c.r = gaussian(2);
    c.alpha = testsupport::uniform(-1.0, 1.0);
    c.beta = testsupport::uniform(-1.0, 1.0);
    c.y = gaussian(2);
    const Eigen::MatrixXd h_num =
        testsupport::numeric_jacobian([&](const Eigen::VectorXd& s) { return ekf_output(s, c); }, x);
    CHECK(max_abs(ekf_jacobian_H(x, c) - h_num) < 1e-6);
  }
}

TEST_CASE("ekf propagation agrees with the group propagation") {
  for (int i = 0; i < 50; ++i) {
    const GroupElement chi = testsupport::random_element(Space::Planar);
    const ImuSample u{gaussian(1), 5.0 * gaussian(2), 0.01};
    const Eigen::VectorXd g = gravity_vector(Space::Planar);
    const GroupElement via_chart = ekf_to_group(ekf_propagate_state(ekf_from_group(chi), u, g));
    CHECK(max_abs(via_chart.matrix() - propagate_mean(chi, u, g).matrix()) < 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Common interface

TEST_CASE("filter kinds and the common interface") {
  for (FilterKind kind : {FilterKind::Ekf, FilterKind::Iekf, FilterKind::NoiseFreeIekf}) {
    CHECK(parse_filter_kind(to_string(kind)) == kind);
  }
  CHECK(!parse_filter_kind("ukf").has_value());

  const Scenario s = crane_scenario();
  FilterSettings settings;
  settings.noise = baseline_noise();
  settings.gravity = gravity_vector(Space::Planar);
  const ImuSample u{Eigen::VectorXd::Constant(1, 0.2), Eigen::Vector2d(0.3, 9.7), 0.01};

  const auto nf = make_filter(FilterKind::NoiseFreeIekf, s.prior.mean, s.prior.cov, settings);
  nf->propagate(u);
  const UpdateReport r = nf->update(s.constraint);
  const Belief expected_prior = iekf_propagate(s.prior, u, settings.noise, settings.gravity);
  const auto [expected, expected_report] = nf_iekf_update(expected_prior, s.constraint);
  CHECK(nf->kind() == FilterKind::NoiseFreeIekf);
  CHECK(r.iterations == expected_report.iterations);
  CHECK(max_abs(nf->estimate().matrix() - expected.mean.matrix()) == 0.0);
  CHECK(max_abs(nf->covariance() - expected.cov) == 0.0);

  const auto iekf = make_filter(FilterKind::Iekf, s.prior.mean, s.prior.cov, settings);
  iekf->propagate(u);
  iekf->update(s.constraint);
  const Belief i_expected = iekf_update(expected_prior, s.constraint, settings.noise).first;
  CHECK(max_abs(iekf->estimate().matrix() - i_expected.mean.matrix()) == 0.0);

  const auto ekf = make_filter(FilterKind::Ekf, s.prior.mean, s.prior.cov, settings);
  CHECK(ekf->kind() == FilterKind::Ekf);
  CHECK(max_abs(ekf->estimate().matrix() - s.prior.mean.matrix()) < 1e-12);
  ekf->propagate(u);
  ekf->update(s.constraint);
  const EkfBelief e_prior = ekf_propagate({ekf_from_group(s.prior.mean), s.prior.cov}, u, settings.noise, settings.gravity);
  const EkfBelief e_expected = ekf_update(e_prior, s.constraint, settings.noise).first;
  CHECK(max_abs(ekf->estimate().matrix() - ekf_to_group(e_expected.mean).matrix()) < 1e-12);
}
