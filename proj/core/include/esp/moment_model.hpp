#ifndef ESP_MOMENT_MODEL_HPP
#define ESP_MOMENT_MODEL_HPP

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "esp/dataset.hpp"

namespace esp {

/// Just-identified moment-condition model: m parameters, m moment
/// conditions, observations of dimension p.
///
/// `psi` maps (observation row, theta) to the m moment contributions.
/// `psi_jacobian` and `psi_hessian` are optional analytic derivatives;
/// operations fall back to central finite differences when the jacobian is
/// absent, and refuse analytic-gradient work when the hessian is absent.
/// `psi_hessian(row, theta, j)` is the derivative of the m-by-m jacobian
/// with respect to theta_j.
///
/// All callables must be pure functions of their arguments: models are
/// evaluated concurrently from many threads.
struct MomentModel {
  using PsiFn = std::function<void(const Eigen::VectorXd& row, const Eigen::VectorXd& theta,
                                   Eigen::VectorXd& out)>;
  using JacFn = std::function<void(const Eigen::VectorXd& row, const Eigen::VectorXd& theta,
                                   Eigen::MatrixXd& out)>;
  using HessFn = std::function<void(const Eigen::VectorXd& row, const Eigen::VectorXd& theta,
                                    int j, Eigen::MatrixXd& out)>;

  std::string name;
  int param_dim = 0;
  int data_dim = 0;
  PsiFn psi;
  JacFn psi_jacobian;    // may be empty
  HessFn psi_hessian;    // may be empty
  Eigen::VectorXd param_lower;  // compact parameter box, lower < upper
  Eigen::VectorXd param_upper;

  /// Column names psi expects, in order. When non-empty and the dataset
  /// carries a header, columns are resolved by name at evaluation time;
  /// otherwise the first data_dim columns are used positionally.
  std::vector<std::string> required_columns;

  bool has_jacobian() const { return static_cast<bool>(psi_jacobian); }
  bool has_hessian() const { return static_cast<bool>(psi_hessian); }

  void validate() const;  // throws Errc::invalid_input on a malformed model
};

/// Reorders dataset columns into the layout psi expects (a T x data_dim
/// matrix). Throws Errc::invalid_input when a required column is missing
/// or the dimensions do not line up.
Eigen::MatrixXd bind_columns(const MomentModel& model, const Dataset& data);

/// T x m matrix of per-row moment evaluations at theta. Non-finite psi
/// values raise Errc::numeric_domain naming the offending row.
Eigen::MatrixXd psi_matrix(const MomentModel& model, const Eigen::MatrixXd& bound_rows,
                           const Eigen::VectorXd& theta);

/// Sample mean of the moment function, (1/T) sum_t psi(X_t, theta).
Eigen::VectorXd eval_psi_bar(const MomentModel& model, const Dataset& data,
                             const Eigen::VectorXd& theta);

/// Jacobian of one row, analytic when supplied, otherwise central finite
/// differences with per-coordinate step cbrt(eps) * max(1, |theta_j|).
void row_jacobian(const MomentModel& model, const Eigen::VectorXd& row,
                  const Eigen::VectorXd& theta, Eigen::MatrixXd& out);

/// Weighted average jacobian sum_t w_t dpsi(X_t, theta)/dtheta'. Weights
/// default to uniform 1/T; explicit weights must be nonnegative and sum to
/// one within 1e-10.
Eigen::MatrixXd jacobian_bar(const MomentModel& model, const Dataset& data,
                             const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& weights = Eigen::VectorXd());

/// Two-parameter exponential benchmark model with rows (X, Y) and
///   psi_1 = exp{mu - beta (X+Y) + 3 Y} - 1,   psi_2 = Y psi_1,
/// parameters ordered (beta, mu). Analytic jacobian and hessian supplied.
/// Default box: beta in [-5, 15], mu in [-5, 5].
MomentModel builtin_hall_horowitz();

/// Scalar CRRA pricing model psi = (C_t/C_{t-1})^{-theta} (R_m - R_f) with
/// analytic derivatives. Columns are resolved by the given names at
/// evaluation time. Default box: theta in [-300, 900].
MomentModel builtin_crra(const std::string& consumption_ratio_col = "c_ratio",
                         const std::string& market_return_col = "r_m",
                         const std::string& risk_free_col = "r_f");

}  // namespace esp

#endif  // ESP_MOMENT_MODEL_HPP
