#ifndef ESP_ESP_OBJECTIVE_HPP
#define ESP_ESP_OBJECTIVE_HPP

#include <Eigen/Core>
#include <iosfwd>
#include <vector>

#include "esp/tilting.hpp"

namespace esp {

/// One evaluation of the log empirical-saddlepoint objective at theta.
///
/// log_esp_objective = ln K_T(theta) - (1/2T) ln|Sigma_T(theta)| and its
/// three-term decomposition m1 + m2 + m3:
///   m1 = (1 - m/2T) ln[(1/T) sum e^{tau'psi}]
///   m2 = (1/2T) ln[ |(1/T) sum e^{tau'psi} dpsi/dtheta'|^2 ]
///   m3 = -(1/2T) ln[ |(1/T) sum e^{tau'psi} psi psi'| ]
/// log_esp_density = T ln K + (m/2) ln(T/2pi) - (1/2) ln|Sigma_T|.
///
/// Out-of-support theta (tilting has no interior solution, or the tilted
/// sandwich degenerates) yields in_support = false and -inf densities
/// rather than an error.
struct EspEvaluation {
  Eigen::VectorXd theta;
  TiltingSolution tilting;
  Eigen::MatrixXd sigma_t;      // tilted sandwich J^{-1} V J^{-T}
  double log_det_sigma = 0.0;
  double m1 = 0.0, m2 = 0.0, m3 = 0.0;
  double log_esp_objective = 0.0;
  double log_esp_density = 0.0;
  bool in_support = false;
};

/// Tilted sandwich Sigma_T(theta) = J^{-1} V J^{-T} with
/// J = sum_t w_t dpsi_t/dtheta' and V = sum_t w_t psi_t psi_t'.
/// Throws Errc::support_boundary when J is singular or V fails positivity.
Eigen::MatrixXd sigma_tilted(const MomentModel& model, const Dataset& data,
                             const Eigen::VectorXd& theta, const TiltingSolution& tilting);

EspEvaluation evaluate(const MomentModel& model, const Dataset& data,
                       const Eigen::VectorXd& theta, const TiltOptions& tilt_options = {});

/// Partial derivatives of the decomposition terms, exposed so the chain
/// rule assembly can be verified term by term.
struct GradientBreakdown {
  Eigen::VectorXd dm1_dtheta, dm2_dtheta, dm3_dtheta;  // partials at fixed tau
  Eigen::VectorXd dl_dtau;                             // sum of tau-partials
  Eigen::MatrixXd tau_jac;                             // dtau_T/dtheta'
  Eigen::VectorXd total;                               // d/dtheta of theta -> L_T(theta, tau_T(theta))
};

GradientBreakdown gradient_objective_parts(const MomentModel& model, const Dataset& data,
                                           const Eigen::VectorXd& theta,
                                           const TiltOptions& tilt_options = {});

/// Analytic gradient of the log-ESP objective; requires psi_jacobian and
/// psi_hessian (Errc::unsupported_operation otherwise).
Eigen::VectorXd gradient_objective(const MomentModel& model, const Dataset& data,
                                   const Eigen::VectorXd& theta,
                                   const TiltOptions& tilt_options = {});

/// Gradient of log_esp_objective by central finite differences; used where
/// analytic derivatives are unavailable.
Eigen::VectorXd gradient_objective_fd(const MomentModel& model, const Dataset& data,
                                      const Eigen::VectorXd& theta,
                                      const TiltOptions& tilt_options = {});

struct ProfileRow {
  Eigen::VectorXd theta;
  double m1 = 0.0, m2 = 0.0, m3 = 0.0;
  double log_esp_objective = 0.0;
  double log_esp_density = 0.0;
  double log_et_density = 0.0;  // T ln K + (m/2) ln(T/2pi)
  double norm_esp = 0.0;        // normalized density over the grid (m = 1 only)
  double norm_et = 0.0;
  bool in_support = false;
};

/// Evaluates every grid point and, for scalar models, appends normalized
/// ESP/ET density curves whose trapezoid integral over the grid is one.
/// Out-of-support points carry zeros in the normalized columns.
std::vector<ProfileRow> profile(const MomentModel& model, const Dataset& data,
                                const std::vector<Eigen::VectorXd>& grid,
                                const TiltOptions& tilt_options = {});

/// CSV emission: header
/// theta,m1,m2,m3,log_esp_objective,log_esp_density,log_et_density,norm_esp,norm_et,in_support
/// with 17 significant digits, locale independent.
void write_profile_csv(std::ostream& out, const std::vector<ProfileRow>& rows);

}  // namespace esp

#endif  // ESP_ESP_OBJECTIVE_HPP
