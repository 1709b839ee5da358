#ifndef ESP_INFERENCE_HPP
#define ESP_INFERENCE_HPP

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <vector>

#include "esp/estimation.hpp"

namespace esp {

enum class TestKind { wald, lm, alr, et };

const char* test_kind_name(TestKind k);

struct TestResult {
  TestKind kind = TestKind::wald;
  double statistic = 0.0;  // +inf sentinel when the restricted point is out of support
  int dof = 0;
  double p_value = 0.0;
  Eigen::VectorXd theta_unconstrained;  // empty when not used by the statistic
  Eigen::VectorXd theta_constrained;
  /// Second displayed LM form (gradient quadratic form); computed for
  /// diagnostics alongside the multiplier form, never asserted against it.
  std::optional<double> lm_second_form;
};

/// Chi-square survival function via the regularized upper incomplete gamma
/// (series below x = dof + 1, continued fraction above).
double chi2_sf(double x, int dof);
/// Inverse survival: chi2_sf(chi2_quantile(p, dof), dof) = 1 - p, solved by
/// bracketing bisection refined with Newton steps to 1e-12.
double chi2_quantile(double p, int dof);

/// Wald_T = T r(th)' [R Sigma R']^{-1} r(th) at the unconstrained ESP estimate.
TestResult wald_test(const MomentModel& model, const Dataset& data,
                     const EstimationResult& esp_result, const RestrictionSpec& restriction);

/// LM_T = T gamma' [R Sigma R'] gamma at the constrained estimate.
TestResult lm_test(const MomentModel& model, const Dataset& data,
                   const EstimationResult& constrained_result,
                   const RestrictionSpec& restriction);

/// ALR_T = 2 { ln f(theta_hat) - ln f(theta_check) }; the Gaussian
/// constants cancel so this equals 2T times the objective difference.
TestResult alr_test(const EspEvaluation& unconstrained, const EspEvaluation& constrained,
                    int dof);

/// ET_T = T tau(theta_check)' V_hat tau(theta_check) with V_hat the
/// uniform-weight second moment of psi at theta_check.
TestResult et_test(const MomentModel& model, const Dataset& data,
                   const EstimationResult& constrained_result,
                   const RestrictionSpec& restriction);

enum class RegionKind { alr, alr_et };

struct ConfidenceRegion {
  double level = 0.0;
  std::vector<double> grid;
  std::vector<double> statistic;
  std::vector<bool> accepted;
  /// Maximal runs of accepted grid points as closed intervals, disjoint
  /// and sorted; endpoints lie on the grid.
  std::vector<std::pair<double, double>> accepted_intervals;

  double total_length() const;
};

/// Scalar-parameter confidence region by test inversion: for each grid
/// point theta_0, the chosen statistic with theta_check = theta_0 is
/// compared against the chi-square(1) quantile at `level`. Out-of-support
/// points get an infinite statistic and are rejected, so the scan crosses
/// support holes.
ConfidenceRegion invert_confidence_region(const MomentModel& model, const Dataset& data,
                                          RegionKind kind, double level,
                                          const std::vector<double>& grid,
                                          const TiltOptions& tilt_options = {});

/// CSV emission: header theta,statistic,accepted.
void write_region_csv(std::ostream& out, const ConfidenceRegion& region);

}  // namespace esp

#endif  // ESP_INFERENCE_HPP
