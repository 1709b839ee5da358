#ifndef ESP_ESTIMATION_HPP
#define ESP_ESTIMATION_HPP

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "esp/esp_objective.hpp"

namespace esp {

enum class Method { mm_et, esp, esp_constrained };

const char* method_name(Method m);

struct OptimTrace {
  int iterations = 0;
  int restarts = 0;
  std::string status;
};

struct EstimationResult {
  Method method = Method::mm_et;
  Eigen::VectorXd theta_hat;
  /// log-ESP objective for esp methods, ||psi_bar|| for mm_et.
  double objective_value = 0.0;
  /// Plug-in estimate of Sigma(theta_0)/T: uniform-weight sandwich at
  /// theta_hat divided by T.
  Eigen::MatrixXd covariance;
  std::optional<Eigen::VectorXd> lagrange_multiplier;  // constrained case
  OptimTrace trace;
};

/// Parameter restriction r(theta) = 0: either a set of components pinned
/// to values, or a full-row-rank linear system A theta = b.
class RestrictionSpec {
 public:
  static RestrictionSpec fix_components(std::vector<std::pair<int, double>> fixed);
  static RestrictionSpec linear(Eigen::MatrixXd A, Eigen::VectorXd b);

  int q() const;  // number of restrictions
  Eigen::MatrixXd jacobian(int m) const;
  Eigen::VectorXd residual(const Eigen::VectorXd& theta) const;
  /// Throws Errc::invalid_restriction on rank deficiency, duplicate or
  /// out-of-range indices, or q > m.
  void validate(int m) const;

  bool is_fix() const { return !fixed_.empty(); }
  const std::vector<std::pair<int, double>>& fixed() const { return fixed_; }
  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b() const { return b_; }

 private:
  RestrictionSpec() = default;
  std::vector<std::pair<int, double>> fixed_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
};

struct MmOptions {
  int max_iter = 60;
  /// Acceptance threshold scale: a start counts as a root when
  /// ||psi_bar|| <= success_tol * (1 + mean |psi|).
  double success_tol = 1e-8;
  int grid_per_dim = 8;
  bool add_grid_starts = true;
};

struct EspOptimOptions {
  TiltOptions tilt;
  /// Search box; empty vectors select the model's param_box. Evaluations
  /// outside the box are treated as out of support.
  Eigen::VectorXd search_lower, search_upper;
  int grid_per_dim = 8;
  bool add_grid_starts = true;
  bool include_mm_start = true;
  bool polish = true;
  int nm_max_evals = 0;  // 0 selects 600 * m
};

/// Method-of-moments / exponential-tilting point estimate: the root of the
/// empirical moment conditions, found by damped Newton from the given
/// starts plus a deterministic coarse grid. The returned root has the
/// smallest residual; ties break toward lexicographically smaller theta.
/// Throws Errc::no_root_found (carrying the best residual) when no start
/// converges.
EstimationResult estimate_mm_et(const MomentModel& model, const Dataset& data,
                                const std::vector<Eigen::VectorXd>& starts = {},
                                const MmOptions& options = {});

/// ESP point estimate: maximizer of the log-ESP objective over the search
/// box by multi-start Nelder-Mead (coefficients 1, 2, 0.5, shrink 0.5)
/// with a quasi-Newton ascent polish when analytic derivatives exist.
/// Out-of-support evaluations score -inf and the simplex contracts away.
/// Throws Errc::empty_support when every start is out of support.
EstimationResult estimate_esp(const MomentModel& model, const Dataset& data,
                              const std::vector<Eigen::VectorXd>& starts = {},
                              const EspOptimOptions& options = {});

/// Constrained ESP estimate over {theta : r(theta) = 0}, optimized in the
/// reduced coordinates of the affine subspace. The Lagrange multiplier is
/// recovered from the exact first-order condition
///   (1/T) d ln f(theta_check)/dtheta + R' gamma = 0
/// by least squares, using the analytic objective gradient when available
/// and finite differences otherwise.
EstimationResult estimate_constrained(const MomentModel& model, const Dataset& data,
                                      const RestrictionSpec& restriction,
                                      const std::vector<Eigen::VectorXd>& starts = {},
                                      const EspOptimOptions& options = {});

/// Uniform-weight plug-in covariance of sqrt(T)(theta_hat - theta_0),
/// divided by T: [J^-1 V J^-T]/T with J, V sample averages at theta.
Eigen::MatrixXd plugin_covariance(const MomentModel& model, const Dataset& data,
                                  const Eigen::VectorXd& theta);

/// Deterministic coarse multi-start grid: per dimension `per_dim` points
/// at the midpoints of equal subdivisions of [lower, upper].
std::vector<Eigen::VectorXd> coarse_grid(const Eigen::VectorXd& lower,
                                         const Eigen::VectorXd& upper, int per_dim);

}  // namespace esp

#endif  // ESP_ESTIMATION_HPP
