#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "esp/errors.hpp"
#include "esp/inference.hpp"
#include "test_support.hpp"

using namespace esp;
using namespace esp_test;

namespace {

double chi2_pdf(double x, int dof) {
  const double a = 0.5 * dof;
  return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a));
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + i * (hi - lo) / (n - 1);
  return g;
}

}  // namespace

TEST_CASE("chi-square survival basics") {
  for (int q : {1, 2, 5}) CHECK(chi2_sf(0.0, q) == 1.0);
  CHECK(chi2_sf(std::numeric_limits<double>::infinity(), 3) == 0.0);
  CHECK_THROWS_AS(chi2_sf(-1.0, 1), Error);
  CHECK_THROWS_AS(chi2_sf(1.0, 0), Error);
  CHECK_THROWS_AS(chi2_quantile(0.0, 1), Error);
  CHECK_THROWS_AS(chi2_quantile(1.0, 1), Error);
}

TEST_CASE("chi-square quantile against the quadrature oracle") {
  // Integrate the chi2(1) density over [q, L] to confirm the upper tail.
  const double q95 = chi2_quantile(0.95, 1);
  CHECK(q95 == doctest::Approx(3.84146).epsilon(1e-5));
  const double tail =
      adaptive_simpson([&](double x) { return chi2_pdf(x, 1); }, q95, 400.0, 1e-13);
  CHECK(tail == doctest::Approx(0.05).epsilon(1e-9));

  const double q90_2 = chi2_quantile(0.90, 2);
  const double tail2 =
      adaptive_simpson([&](double x) { return chi2_pdf(x, 2); }, q90_2, 400.0, 1e-13);
  CHECK(tail2 == doctest::Approx(0.10).epsilon(1e-9));
}

TEST_CASE("chi-square quantile round trip") {
  for (double p : {0.5, 0.9, 0.95, 0.99}) {
    for (int q : {1, 2, 5}) {
      CHECK(std::abs(chi2_sf(chi2_quantile(p, q), q) - (1.0 - p)) <= 1e-10);
    }
  }
}

TEST_CASE("wald test at a satisfied restriction is zero") {
  MomentModel hh = builtin_hall_horowitz();
  Dataset data = gaussian_pairs(201, 80);
  const EstimationResult esp_fit = estimate_esp(hh, data);
  const RestrictionSpec pin = RestrictionSpec::fix_components(
      {{0, esp_fit.theta_hat[0]}, {1, esp_fit.theta_hat[1]}});
  const TestResult w = wald_test(hh, data, esp_fit, pin);
  CHECK(w.statistic == doctest::Approx(0.0));
  CHECK(w.p_value == doctest::Approx(1.0));
  CHECK(w.dof == 2);
}

TEST_CASE("scalar wald equals the squared t-ratio") {
  MomentModel hh = builtin_hall_horowitz();
  Dataset data = gaussian_pairs(203, 90);
  const EstimationResult esp_fit = estimate_esp(hh, data);
  const double beta0 = 2.8;
  const RestrictionSpec pin = RestrictionSpec::fix_components({{0, beta0}});
  const TestResult w = wald_test(hh, data, esp_fit, pin);

  const double T = static_cast<double>(data.size());
  const double sigma_bb = T * esp_fit.covariance(0, 0);
  const double expected = T * std::pow(esp_fit.theta_hat[0] - beta0, 2) / sigma_bb;
  CHECK(w.statistic == doctest::Approx(expected).epsilon(1e-12));
  CHECK(w.dof == 1);
}

TEST_CASE("lm statistic vanishes with the multiplier") {
  MomentModel hh = builtin_hall_horowitz();
  Dataset data = gaussian_pairs(207, 70);
  const EstimationResult esp_fit = estimate_esp(hh, data);

  // Pinning at the unconstrained maximizer makes the multiplier vanish.
  const RestrictionSpec pin = RestrictionSpec::fix_components(
      {{0, esp_fit.theta_hat[0]}, {1, esp_fit.theta_hat[1]}});
  const EstimationResult constrained = estimate_constrained(hh, data, pin);
  const TestResult lm = lm_test(hh, data, constrained, pin);
  CHECK(lm.statistic <= 1e-8);
  CHECK(lm.lm_second_form.has_value());
  CHECK(*lm.lm_second_form <= 1e-6);

  // A synthetic constrained result with a zero multiplier scores zero.
  EstimationResult zero = constrained;
  zero.lagrange_multiplier = Eigen::VectorXd::Zero(2);
  CHECK(lm_test(hh, data, zero, pin).statistic == 0.0);
}

TEST_CASE("alr statistic") {
  MomentModel hh = builtin_hall_horowitz();
  Dataset data = gaussian_pairs(211, 60);
  const EstimationResult esp_fit = estimate_esp(hh, data);
  const EspEvaluation at_hat = evaluate(hh, data, esp_fit.theta_hat);
  REQUIRE(at_hat.in_support);

  SUBCASE("identical points give zero") {
    const TestResult t = alr_test(at_hat, at_hat, 2);
    CHECK(t.statistic == 0.0);
    CHECK(t.p_value == 1.0);
  }

  SUBCASE("statistic equals twice the density gap and 2T times the objective gap") {
    Eigen::Vector2d off = esp_fit.theta_hat + Eigen::Vector2d(0.4, 0.2);
    const EspEvaluation at_off = evaluate(hh, data, off);
    REQUIRE(at_off.in_support);
    const TestResult t = alr_test(at_hat, at_off, 2);
    const double T = static_cast<double>(data.size());
    CHECK(t.statistic >= -1e-9);
    CHECK(t.statistic ==
          doctest::Approx(2.0 * T * (at_hat.log_esp_objective - at_off.log_esp_objective))
              .epsilon(1e-9));
  }

  SUBCASE("out-of-support constrained point maps to an infinite statistic") {
    MomentModel lin = linear_model();
    Dataset sdata = scalar_dataset({1.0, 2.0, 3.0});
    Eigen::VectorXd root(1), outside(1);
    root << 2.0;
    outside << -20.0;
    const EspEvaluation ok = evaluate(lin, sdata, root);
    const EspEvaluation bad = evaluate(lin, sdata, outside);
    REQUIRE(ok.in_support);
    REQUIRE_FALSE(bad.in_support);
    const TestResult t = alr_test(ok, bad, 1);
    CHECK(std::isinf(t.statistic));
    CHECK(t.p_value == 0.0);
  }
}

TEST_CASE("et statistic") {
  MomentModel hh = builtin_hall_horowitz();
  Dataset data = gaussian_pairs(213, 70);

  SUBCASE("zero at an exact root") {
    const EstimationResult root = estimate_mm_et(hh, data);
    const RestrictionSpec pin = RestrictionSpec::fix_components(
        {{0, root.theta_hat[0]}, {1, root.theta_hat[1]}});
    EstimationResult constrained = estimate_constrained(hh, data, pin);
    const TestResult t = et_test(hh, data, constrained, pin);
    CHECK(t.statistic <= 1e-12);
  }

  SUBCASE("scalar recomputation") {
    MomentModel lin = linear_model();
    Dataset sdata = scalar_dataset({0.9, -0.4, 1.7, 0.1, -1.2});
    const double pinned = 0.55;
    const RestrictionSpec pin = RestrictionSpec::fix_components({{0, pinned}});
    const EstimationResult constrained = estimate_constrained(lin, sdata, pin);
    const TestResult t = et_test(lin, sdata, constrained, pin);

    Eigen::VectorXd theta(1);
    theta << pinned;
    const TiltingSolution tilt = solve_tilt(lin, sdata, theta);
    REQUIRE(tilt.converged());
    const double T = 5.0;
    const double second_moment = (theta[0] - sdata.rows().col(0).array()).square().mean();
    CHECK(t.statistic ==
          doctest::Approx(T * tilt.tau[0] * tilt.tau[0] * second_moment).epsilon(1e-10));
  }
}

TEST_CASE("confidence region by alr inversion") {
  MomentModel crra = builtin_crra();
  Dataset data = crra_dataset(88, 120);
  const std::vector<double> grid = linspace(-60.0, 140.0, 301);

  const ConfidenceRegion region =
      invert_confidence_region(crra, data, RegionKind::alr, 0.95, grid);
  REQUIRE(!region.accepted_intervals.empty());

  SUBCASE("the unconstrained maximizer is accepted") {
    const EstimationResult esp_fit = estimate_esp(crra, data);
    bool covered = false;
    for (const auto& [lo, hi] : region.accepted_intervals) {
      if (esp_fit.theta_hat[0] >= lo - 1e-9 && esp_fit.theta_hat[0] <= hi + 1e-9) covered = true;
    }
    CHECK(covered);
  }

  SUBCASE("intervals sit on the grid, sorted and disjoint") {
    for (std::size_t k = 0; k < region.accepted_intervals.size(); ++k) {
      const auto& [lo, hi] = region.accepted_intervals[k];
      CHECK(lo <= hi);
      CHECK(std::find(grid.begin(), grid.end(), lo) != grid.end());
      CHECK(std::find(grid.begin(), grid.end(), hi) != grid.end());
      if (k > 0) CHECK(region.accepted_intervals[k - 1].second < lo);
    }
  }

  SUBCASE("accepted points have finite statistics inside the support") {
    for (std::size_t i = 0; i < region.grid.size(); ++i) {
      if (region.accepted[i]) CHECK(std::isfinite(region.statistic[i]));
    }
  }

  SUBCASE("raising the level never shrinks the region") {
    const ConfidenceRegion wider =
        invert_confidence_region(crra, data, RegionKind::alr, 0.99, grid);
    for (std::size_t i = 0; i < region.grid.size(); ++i) {
      if (region.accepted[i]) CHECK(wider.accepted[i]);
    }
    CHECK(wider.total_length() >= region.total_length());
  }

  SUBCASE("esp region is no longer than the et region") {
    const ConfidenceRegion et_region =
        invert_confidence_region(crra, data, RegionKind::alr_et, 0.95, grid);
    CHECK(region.total_length() <= et_region.total_length());
  }
}

TEST_CASE("region csv layout") {
  MomentModel lin = linear_model();
  Dataset data = scalar_dataset({0.4, -0.2, 1.0, 0.3});
  const std::vector<double> grid = linspace(-1.0, 1.5, 11);
  const ConfidenceRegion region =
      invert_confidence_region(lin, data, RegionKind::alr, 0.95, grid);
  std::ostringstream out;
  write_region_csv(out, region);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "theta,statistic,accepted");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 11);
}

TEST_CASE("region inversion validates inputs") {
  MomentModel hh = builtin_hall_horowitz();
  Dataset data = gaussian_pairs(1, 30);
  CHECK_THROWS_AS(
      (void)invert_confidence_region(hh, data, RegionKind::alr, 0.95, {0.0, 1.0}), Error);

  MomentModel lin = linear_model();
  Dataset sdata = scalar_dataset({0.1, 0.2, 0.4});
  CHECK_THROWS_AS(
      (void)invert_confidence_region(lin, sdata, RegionKind::alr, 1.5, {0.0, 1.0}), Error);
  CHECK_THROWS_AS((void)invert_confidence_region(lin, sdata, RegionKind::alr, 0.95, {0.0}),
                  Error);
  CHECK_THROWS_AS(
      (void)invert_confidence_region(lin, sdata, RegionKind::alr, 0.95, {1.0, 0.0}), Error);
}
