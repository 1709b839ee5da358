#ifndef ESP_TILTING_HPP
#define ESP_TILTING_HPP

#include <Eigen/Core>
#include <functional>

#include "esp/moment_model.hpp"

namespace esp {

enum class TiltStatus { converged, no_interior_solution, max_iterations };

const char* tilt_status_name(TiltStatus s);

struct TiltOptions {
  /// Residual tolerance; <= 0 selects 1e-10 * (1 + mean |psi|).
  double tol = -1.0;
  int max_iter = 100;
  /// Starting point for the inner Newton iteration (defaults to zero).
  Eigen::VectorXd tau_init;
  /// ||tau|| beyond which the problem is declared to have no interior
  /// solution; <= 0 selects 1e4 * (1 + 1/mean |psi|).
  double divergence_bound = -1.0;
  /// Observer invoked once per Newton iterate with the current ln K; used
  /// by tests that pin the monotone-descent property.
  std::function<void(int iter, double log_k)> on_iterate;
};

/// Solution of the inner tilting problem at a fixed theta:
/// tau minimizes K_T(tau) = (1/T) sum_t exp(tau' psi_t(theta)).
struct TiltingSolution {
  Eigen::VectorXd tau;
  Eigen::VectorXd weights;     // exp(tau'psi_t) / sum_i exp(tau'psi_i), sums to 1
  double k_value = 0.0;        // minimized dual objective K_T(tau)
  double log_k = 0.0;          // ln K_T(tau), <= 0 at interior solutions
  double residual_norm = 0.0;  // || (1/T) sum_t exp(tau'psi_t) psi_t ||
  int iterations = 0;
  TiltStatus status = TiltStatus::max_iterations;

  bool converged() const { return status == TiltStatus::converged; }
};

/// Damped-Newton solve of the tilting equation on a precomputed T x m psi
/// matrix. Gradient and Hessian of K_T are the tilted first and second
/// moments of psi; steps use a symmetric factorization with a one-shot
/// ridge retry, and Armijo backtracking on ln K.
TiltingSolution solve_tilt_psi(const Eigen::MatrixXd& psi, const TiltOptions& options = {});

TiltingSolution solve_tilt(const MomentModel& model, const Dataset& data,
                           const Eigen::VectorXd& theta, const TiltOptions& options = {});

/// Kullback-Leibler divergence sum_t w_t ln(T w_t) between a strictly
/// positive simplex vector and the uniform empirical weights.
double kl_divergence(const Eigen::VectorXd& weights);

/// Implicit-function derivative dtau_T/dtheta' at a converged solution:
///   -[sum e^{tau'psi} psi psi']^{-1} [sum e^{tau'psi} (dpsi/dtheta' + psi tau' dpsi/dtheta')].
Eigen::MatrixXd tau_jacobian(const MomentModel& model, const Dataset& data,
                             const Eigen::VectorXd& theta, const TiltingSolution& solution);

}  // namespace esp

#endif  // ESP_TILTING_HPP
