#include "esp/tilting.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <string>

#include "esp/errors.hpp"

namespace esp {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-16;

struct TiltState {
  double log_k = 0.0;
  double shift = 0.0;           // max_t tau'psi_t
  Eigen::VectorXd weights;      // normalized, sums to 1
  Eigen::VectorXd mean_tilted;  // sum_t w_t psi_t  (gradient of ln K)
};

// Everything is evaluated after subtracting the max exponent, so large
// tau'psi never overflows; only ratios of exponentials enter the weights.
void eval_state(const Eigen::MatrixXd& psi, const Eigen::VectorXd& tau, TiltState& st,
                bool with_gradient) {
  const Eigen::Index T = psi.rows();
  Eigen::VectorXd s = psi * tau;
  st.shift = s.maxCoeff();
  st.weights = (s.array() - st.shift).exp();
  const double mean_exp = st.weights.mean();
  st.log_k = st.shift + std::log(mean_exp);
  st.weights /= (static_cast<double>(T) * mean_exp);
  if (with_gradient) st.mean_tilted.noalias() = psi.transpose() * st.weights;
}

double log_k_at(const Eigen::MatrixXd& psi, const Eigen::VectorXd& tau) {
  Eigen::VectorXd s = psi * tau;
  const double shift = s.maxCoeff();
  return shift + std::log((s.array() - shift).exp().mean());
}

// residual = ||(1/T) sum exp(tau'psi) psi|| = K * ||sum w psi||
double residual_norm_of(const TiltState& st) {
  if (st.log_k > 700.0) return std::numeric_limits<double>::infinity();
  return std::exp(st.log_k) * st.mean_tilted.norm();
}

}  // namespace

const char* tilt_status_name(TiltStatus s) {
  switch (s) {
    case TiltStatus::converged: return "converged";
    case TiltStatus::no_interior_solution: return "no-interior-solution";
    case TiltStatus::max_iterations: return "max-iterations";
  }
  return "unknown";
}

TiltingSolution solve_tilt_psi(const Eigen::MatrixXd& psi, const TiltOptions& options) {
  const Eigen::Index T = psi.rows();
  const int m = static_cast<int>(psi.cols());
  if (T < 1 || m < 1) throw Error(Errc::invalid_input, "empty psi matrix");
  if (!psi.allFinite()) throw Error(Errc::numeric_domain, "non-finite psi matrix");

  const double psi_scale = psi.cwiseAbs().mean();
  const double tol = options.tol > 0 ? options.tol : 1e-10 * (1.0 + psi_scale);
  const double tau_bound =
      options.divergence_bound > 0
          ? options.divergence_bound
          : 1e4 * (1.0 + 1.0 / std::max(psi_scale, std::numeric_limits<double>::min()));

  TiltingSolution sol;
  sol.tau = Eigen::VectorXd::Zero(m);
  if (options.tau_init.size() == m) sol.tau = options.tau_init;
  else if (options.tau_init.size() != 0)
    throw Error(Errc::invalid_input, "tau_init has wrong length");

  TiltState st;
  eval_state(psi, sol.tau, st, true);

  // At any interior solution, ln K(tau*) = -KL(weights) >= -ln T, since the
  // KL divergence against uniform weights is at most ln T. Falling below
  // that (with slack) proves the dual is unbounded: no interior solution.
  const double log_k_floor = -(std::log(static_cast<double>(T)) + 40.0);

  Eigen::MatrixXd hess(m, m);
  Eigen::VectorXd direction(m);

  auto finish = [&](TiltStatus status) {
    sol.status = status;
    sol.log_k = st.log_k;
    sol.k_value = std::exp(st.log_k);
    sol.weights = st.weights;
    sol.residual_norm = residual_norm_of(st);
    return sol;
  };

  for (int iter = 0; iter <= options.max_iter; ++iter) {
    sol.iterations = iter;
    if (options.on_iterate) options.on_iterate(iter, st.log_k);

    // Convergence is decided on the tilted mean of psi, which is scale
    // free; the raw gradient K * ||sum w psi|| also vanishes along
    // K -> 0 escape directions where no solution exists.
    if (st.mean_tilted.norm() <= tol) return finish(TiltStatus::converged);
    if (sol.tau.norm() > tau_bound || st.log_k < log_k_floor) {
      return finish(TiltStatus::no_interior_solution);
    }
    if (iter == options.max_iter) break;

    // Tilted second moment, positive semidefinite by construction.
    hess.noalias() = psi.transpose() * st.weights.asDiagonal() * psi;
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) {
      const double ridge = 1e-12 * hess.trace() / m;
      hess.diagonal().array() += ridge;
      llt.compute(hess);
      if (llt.info() != Eigen::Success) {
        return finish(TiltStatus::no_interior_solution);
      }
    }
    direction = llt.solve(-st.mean_tilted);
    const double slope = st.mean_tilted.dot(direction);
    if (!(slope < 0.0)) {
      // Descent direction lost to rounding: the gradient is at the
      // numerical floor, so report what the residual supports.
      return finish(TiltStatus::max_iterations);
    }

    // Near the minimum the Newton decrement drops below the resolution of
    // ln K; the rounding slack keeps one-ulp noise from rejecting the full
    // step and stalling the iteration.
    const double rounding_slack =
        4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(st.log_k));
    double step = 1.0;
    bool accepted = false;
    while (step >= kMinStep) {
      const double trial = log_k_at(psi, sol.tau + step * direction);
      if (trial <= st.log_k + kArmijo * step * slope + rounding_slack) {
        const Eigen::VectorXd tau_new = sol.tau + step * direction;
        if (tau_new == sol.tau) return finish(TiltStatus::max_iterations);
        sol.tau = tau_new;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return finish(TiltStatus::max_iterations);
    eval_state(psi, sol.tau, st, true);
  }
  return finish(TiltStatus::max_iterations);
}

TiltingSolution solve_tilt(const MomentModel& model, const Dataset& data,
                           const Eigen::VectorXd& theta, const TiltOptions& options) {
  const Eigen::MatrixXd bound = bind_columns(model, data);
  return solve_tilt_psi(psi_matrix(model, bound, theta), options);
}

double kl_divergence(const Eigen::VectorXd& weights) {
  const Eigen::Index T = weights.size();
  if (T < 1) throw Error(Errc::invalid_input, "empty weight vector");
  if ((weights.array() <= 0).any()) {
    throw Error(Errc::invalid_input, "weights must be strictly positive");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-8) {
    throw Error(Errc::invalid_input, "weights must sum to 1");
  }
  double kl = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    kl += weights[t] * std::log(static_cast<double>(T) * weights[t]);
  }
  return kl;
}

Eigen::MatrixXd tau_jacobian(const MomentModel& model, const Dataset& data,
                             const Eigen::VectorXd& theta, const TiltingSolution& solution) {
  if (!solution.converged()) {
    throw Error(Errc::invalid_input, "tau_jacobian needs a converged tilting solution");
  }
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const Eigen::MatrixXd psi = psi_matrix(model, bound, theta);
  const Eigen::Index T = psi.rows();
  const int m = model.param_dim;
  const Eigen::VectorXd& w = solution.weights;

  // Common exponential scale cancels between the two tilted sums, so both
  // are accumulated with the normalized weights.
  Eigen::MatrixXd second = psi.transpose() * w.asDiagonal() * psi;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd jac(m, m);
  Eigen::VectorXd row(model.data_dim), psi_t(m);
  for (Eigen::Index t = 0; t < T; ++t) {
    row = bound.row(t);
    row_jacobian(model, row, theta, jac);
    psi_t = psi.row(t);
    rhs.noalias() += w[t] * jac;
    rhs.noalias() += w[t] * psi_t * (solution.tau.transpose() * jac);
  }

  Eigen::LLT<Eigen::MatrixXd> llt(second);
  if (llt.info() != Eigen::Success) {
    throw Error(Errc::singular_matrix, "tilted second-moment matrix is singular");
  }
  return -llt.solve(rhs);
}

}  // namespace esp
