#include "esp/inference.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "esp/errors.hpp"
#include "esp/num_format.hpp"
#include "parallel.hpp"

namespace esp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Quadratic form v' M^{-1} v with a singularity check.
double quad_form_inv(const Eigen::MatrixXd& M, const Eigen::VectorXd& v,
                     const char* what) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  const Eigen::VectorXd solved = lu.solve(v);
  if (!solved.allFinite()) throw Error(Errc::singular_matrix, what);
  return v.dot(solved);
}

double finalize_p(TestResult& r) {
  r.p_value = std::isinf(r.statistic) ? 0.0 : chi2_sf(std::max(r.statistic, 0.0), r.dof);
  return r.p_value;
}

}  // namespace

const char* test_kind_name(TestKind k) {
  switch (k) {
    case TestKind::wald: return "wald";
    case TestKind::lm: return "lm";
    case TestKind::alr: return "alr";
    case TestKind::et: return "et";
  }
  return "unknown";
}

TestResult wald_test(const MomentModel& model, const Dataset& data,
                     const EstimationResult& esp_result, const RestrictionSpec& restriction) {
  const int m = model.param_dim;
  restriction.validate(m);
  const double T = static_cast<double>(data.size());
  const Eigen::MatrixXd R = restriction.jacobian(m);
  const Eigen::VectorXd r = restriction.residual(esp_result.theta_hat);
  const Eigen::MatrixXd sigma_hat = T * esp_result.covariance;

  TestResult out;
  out.kind = TestKind::wald;
  out.dof = restriction.q();
  out.theta_unconstrained = esp_result.theta_hat;
  out.statistic =
      T * quad_form_inv(R * sigma_hat * R.transpose(), r, "R Sigma R' is singular");
  finalize_p(out);
  return out;
}

TestResult lm_test(const MomentModel& model, const Dataset& data,
                   const EstimationResult& constrained_result,
                   const RestrictionSpec& restriction) {
  const int m = model.param_dim;
  restriction.validate(m);
  if (!constrained_result.lagrange_multiplier) {
    throw Error(Errc::invalid_input, "lm_test needs a constrained result with a multiplier");
  }
  const double T = static_cast<double>(data.size());
  const Eigen::VectorXd& gamma = *constrained_result.lagrange_multiplier;
  const Eigen::MatrixXd R = restriction.jacobian(m);
  const Eigen::MatrixXd sigma_hat = T * constrained_result.covariance;
  const Eigen::MatrixXd RSR = R * sigma_hat * R.transpose();

  TestResult out;
  out.kind = TestKind::lm;
  out.dof = restriction.q();
  out.theta_constrained = constrained_result.theta_hat;
  out.statistic = T * gamma.dot(RSR * gamma);

  // Second displayed form: gradient quadratic form through Sigma^{-1},
  // with d ln f/dtheta = T * objective gradient and R'gamma = -gradient.
  const Eigen::VectorXd dlnf = -T * (R.transpose() * gamma);
  try {
    out.lm_second_form = quad_form_inv(sigma_hat, dlnf, "Sigma is singular");
  } catch (const Error&) {
    out.lm_second_form.reset();
  }
  finalize_p(out);
  return out;
}

TestResult alr_test(const EspEvaluation& unconstrained, const EspEvaluation& constrained,
                    int dof) {
  if (dof < 1) throw Error(Errc::invalid_input, "alr_test needs dof >= 1");
  if (!unconstrained.in_support) {
    throw Error(Errc::invalid_input, "alr_test needs an in-support unconstrained point");
  }
  TestResult out;
  out.kind = TestKind::alr;
  out.dof = dof;
  out.theta_unconstrained = unconstrained.theta;
  out.theta_constrained = constrained.theta;
  out.statistic = constrained.in_support
                      ? 2.0 * (unconstrained.log_esp_density - constrained.log_esp_density)
                      : kInf;
  finalize_p(out);
  return out;
}

TestResult et_test(const MomentModel& model, const Dataset& data,
                   const EstimationResult& constrained_result,
                   const RestrictionSpec& restriction) {
  restriction.validate(model.param_dim);
  const Eigen::VectorXd& theta_check = constrained_result.theta_hat;
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const Eigen::MatrixXd psi = psi_matrix(model, bound, theta_check);
  const double T = static_cast<double>(psi.rows());

  TestResult out;
  out.kind = TestKind::et;
  out.dof = restriction.q();
  out.theta_constrained = theta_check;

  const TiltingSolution tilt = solve_tilt_psi(psi);
  if (!tilt.converged()) {
    out.statistic = kInf;
    finalize_p(out);
    return out;
  }
  const Eigen::MatrixXd v_hat = psi.transpose() * psi / T;
  out.statistic = T * tilt.tau.dot(v_hat * tilt.tau);
  finalize_p(out);
  return out;
}

double ConfidenceRegion::total_length() const {
  double len = 0.0;
  for (const auto& [lo, hi] : accepted_intervals) len += hi - lo;
  return len;
}

ConfidenceRegion invert_confidence_region(const MomentModel& model, const Dataset& data,
                                          RegionKind kind, double level,
                                          const std::vector<double>& grid,
                                          const TiltOptions& tilt_options) {
  if (model.param_dim != 1) {
    throw Error(Errc::invalid_input, "region inversion is defined for scalar parameters");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(Errc::invalid_input, "level must be in (0, 1)");
  }
  if (grid.size() < 2) throw Error(Errc::invalid_input, "grid needs at least 2 points");
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw Error(Errc::invalid_input, "grid must be sorted ascending");
  }
  for (double g : grid) {
    if (g < model.param_lower[0] - 1e-12 || g > model.param_upper[0] + 1e-12) {
      throw Error(Errc::invalid_input, "grid point outside param_box");
    }
  }

  const double T = static_cast<double>(data.size());
  const double critical = chi2_quantile(level, 1);

  // Unconstrained reference value of the inverted statistic.
  double reference = 0.0;  // log-ESP objective at theta_hat, or ln K at the root
  if (kind == RegionKind::alr) {
    EspOptimOptions opts;
    opts.tilt = tilt_options;
    const EstimationResult esp_hat = estimate_esp(model, data, {}, opts);
    reference = esp_hat.objective_value;
  } else {
    try {
      const EstimationResult root = estimate_mm_et(model, data);
      const TiltingSolution tilt = solve_tilt(model, data, root.theta_hat, tilt_options);
      reference = tilt.converged() ? tilt.log_k : 0.0;
    } catch (const Error&) {
      // No root in the box: the supremum of ln K over the grid serves as
      // the reference; it is filled in after the scan below.
      reference = -kInf;
    }
  }

  ConfidenceRegion region;
  region.level = level;
  region.grid = grid;
  region.statistic.assign(grid.size(), kInf);
  region.accepted.assign(grid.size(), false);

  std::vector<double> point_value(grid.size(), -kInf);  // objective or ln K
  detail::parallel_for(static_cast<int>(grid.size()), 0, [&](int i) {
    Eigen::VectorXd theta(1);
    theta[0] = grid[i];
    if (kind == RegionKind::alr) {
      const EspEvaluation ev = evaluate(model, data, theta, tilt_options);
      if (ev.in_support) point_value[i] = ev.log_esp_objective;
    } else {
      try {
        const TiltingSolution tilt = solve_tilt(model, data, theta, tilt_options);
        if (tilt.converged()) point_value[i] = tilt.log_k;
      } catch (const Error&) {
      }
    }
  });

  if (kind == RegionKind::alr_et && !std::isfinite(reference)) {
    reference = *std::max_element(point_value.begin(), point_value.end());
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::isfinite(point_value[i])) {
      region.statistic[i] = 2.0 * T * (reference - point_value[i]);
      region.accepted[i] = region.statistic[i] <= critical;
    }
  }

  for (std::size_t i = 0; i < grid.size();) {
    if (!region.accepted[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < grid.size() && region.accepted[j + 1]) ++j;
    region.accepted_intervals.emplace_back(grid[i], grid[j]);
    i = j + 1;
  }
  return region;
}

void write_region_csv(std::ostream& out, const ConfidenceRegion& region) {
  out << "theta,statistic,accepted\n";
  for (std::size_t i = 0; i < region.grid.size(); ++i) {
    out << format_double(region.grid[i]) << ',' << format_double(region.statistic[i]) << ','
        << (region.accepted[i] ? '1' : '0') << '\n';
  }
}

}  // namespace esp
