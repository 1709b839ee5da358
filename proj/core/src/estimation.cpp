#include "esp/estimation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "esp/errors.hpp"
#include "nelder_mead.hpp"

namespace esp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

bool inside_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

// Quasi-Newton (BFGS) ascent with Armijo backtracking, iterates clamped to
// the box. Only ever moves uphill, so it can refine but never degrade the
// multi-start winner.
struct PolishOut {
  Eigen::VectorXd x;
  double f;
  int iters = 0;
};

PolishOut bfgs_ascent(const std::function<double(const Eigen::VectorXd&)>& f,
                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                      Eigen::VectorXd x, double fx, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi, int max_iter = 60) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g;
  try {
    g = grad(x);
  } catch (const Error&) {
    return {x, fx, 0};
  }
  PolishOut out{x, fx, 0};
  for (int iter = 0; iter < max_iter; ++iter) {
    const double gtol = 1e-9 * (1.0 + std::abs(out.f));
    if (g.norm() <= gtol) break;
    Eigen::VectorXd p = H * g;
    if (p.dot(g) <= 0.0) {  // curvature bad, restart from steepest ascent
      H.setIdentity();
      p = g;
    }
    double step = 1.0;
    Eigen::VectorXd x_new;
    double f_new = -kInf;
    bool accepted = false;
    while (step >= 1e-14) {
      x_new = clamp_to_box(out.x + step * p, lo, hi);
      const Eigen::VectorXd s = x_new - out.x;
      if (s.cwiseAbs().maxCoeff() <= 0.0) break;
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new >= out.f + 1e-4 * g.dot(s)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    Eigen::VectorXd g_new;
    try {
      g_new = grad(x_new);
    } catch (const Error&) {
      out.x = x_new;
      out.f = f_new;
      ++out.iters;
      break;
    }
    const Eigen::VectorXd s = x_new - out.x;
    const Eigen::VectorXd y = g - g_new;  // gradient change of -f
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
          rho * s * s.transpose();
    }
    out.x = x_new;
    out.f = f_new;
    g = g_new;
    ++out.iters;
  }
  return out;
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::mm_et: return "mm-et";
    case Method::esp: return "esp";
    case Method::esp_constrained: return "esp-constrained";
  }
  return "unknown";
}

std::vector<Eigen::VectorXd> coarse_grid(const Eigen::VectorXd& lower,
                                         const Eigen::VectorXd& upper, int per_dim) {
  const int m = static_cast<int>(lower.size());
  std::vector<Eigen::VectorXd> grid;
  if (per_dim < 1) return grid;
  std::vector<int> idx(m, 0);
  Eigen::VectorXd point(m);
  for (;;) {
    for (int j = 0; j < m; ++j) {
      point[j] = lower[j] + (idx[j] + 0.5) * (upper[j] - lower[j]) / per_dim;
    }
    grid.push_back(point);
    int j = m - 1;
    while (j >= 0 && ++idx[j] == per_dim) idx[j--] = 0;
    if (j < 0) break;
  }
  return grid;
}

Eigen::MatrixXd plugin_covariance(const MomentModel& model, const Dataset& data,
                                  const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const Eigen::MatrixXd psi = psi_matrix(model, bound, theta);
  const double T = static_cast<double>(psi.rows());
  const Eigen::MatrixXd V = psi.transpose() * psi / T;
  const Eigen::MatrixXd J = jacobian_bar(model, data, theta);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
  const Eigen::MatrixXd Jinv = lu.inverse();
  if (!Jinv.allFinite()) {
    throw Error(Errc::singular_matrix, "mean jacobian is singular at theta_hat");
  }
  Eigen::MatrixXd sigma = Jinv * V * Jinv.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  return sigma / T;
}

EstimationResult estimate_mm_et(const MomentModel& model, const Dataset& data,
                                const std::vector<Eigen::VectorXd>& starts,
                                const MmOptions& options) {
  model.validate();
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const int m = model.param_dim;
  const Eigen::VectorXd& lo = model.param_lower;
  const Eigen::VectorXd& hi = model.param_upper;

  std::vector<Eigen::VectorXd> all_starts = starts;
  if (options.add_grid_starts) {
    auto grid = coarse_grid(lo, hi, options.grid_per_dim);
    all_starts.insert(all_starts.end(), grid.begin(), grid.end());
  }
  if (all_starts.empty()) {
    throw Error(Errc::invalid_input, "estimate_mm_et needs at least one start point");
  }

  struct Candidate {
    Eigen::VectorXd theta;
    double norm = kInf;
    double scale = 0.0;
  };
  Candidate best;
  double best_resid_seen = kInf;
  int total_iters = 0;

  auto psibar_at = [&](const Eigen::VectorXd& theta, double& scale) -> Eigen::VectorXd {
    const Eigen::MatrixXd psi = psi_matrix(model, bound, theta);
    scale = psi.cwiseAbs().mean();
    return psi.colwise().mean();
  };

  for (const auto& start : all_starts) {
    if (static_cast<int>(start.size()) != m) {
      throw Error(Errc::invalid_input, "start point has wrong dimension");
    }
    Eigen::VectorXd theta = clamp_to_box(start, lo, hi);
    double scale = 0.0;
    Eigen::VectorXd psibar;
    try {
      psibar = psibar_at(theta, scale);
    } catch (const Error&) {
      continue;  // start where psi is not evaluable
    }
    double norm = psibar.norm();
    const double stop_tol = 1e-13 * (1.0 + scale);

    for (int iter = 0; iter < options.max_iter && norm > stop_tol; ++iter) {
      ++total_iters;
      Eigen::MatrixXd J;
      try {
        J = jacobian_bar(model, data, theta);
      } catch (const Error&) {
        break;
      }
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
      Eigen::VectorXd direction = lu.solve(-psibar);
      if (!direction.allFinite()) break;

      double step = 1.0;
      bool moved = false;
      while (step >= 1e-14) {
        const Eigen::VectorXd trial = clamp_to_box(theta + step * direction, lo, hi);
        double trial_scale = 0.0;
        Eigen::VectorXd trial_bar;
        try {
          trial_bar = psibar_at(trial, trial_scale);
        } catch (const Error&) {
          step *= 0.5;
          continue;
        }
        const double trial_norm = trial_bar.norm();
        if (trial_norm < (1.0 - 1e-4 * step) * norm) {
          theta = trial;
          psibar = trial_bar;
          norm = trial_norm;
          scale = trial_scale;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }

    best_resid_seen = std::min(best_resid_seen, norm);
    if (norm <= options.success_tol * (1.0 + scale)) {
      if (norm < best.norm ||
          (norm == best.norm && best.theta.size() == m && lex_less(theta, best.theta))) {
        best = {theta, norm, scale};
      }
    }
  }

  if (!(best.norm < kInf)) {
    throw Error(Errc::no_root_found,
                "no start converged to a moment root; best residual " +
                    std::to_string(best_resid_seen),
                best_resid_seen);
  }

  EstimationResult result;
  result.method = Method::mm_et;
  result.theta_hat = best.theta;
  result.objective_value = best.norm;
  result.covariance = plugin_covariance(model, data, best.theta);
  result.trace.iterations = total_iters;
  result.trace.restarts = static_cast<int>(all_starts.size());
  result.trace.status = "converged";
  return result;
}

namespace {

struct EspSearchSetup {
  Eigen::VectorXd lo, hi;
  std::function<double(const Eigen::VectorXd&)> objective;
};

EspSearchSetup make_esp_search(const MomentModel& model, const Dataset& data,
                               const EspOptimOptions& options) {
  EspSearchSetup s;
  s.lo = options.search_lower.size() ? options.search_lower : model.param_lower;
  s.hi = options.search_upper.size() ? options.search_upper : model.param_upper;
  if (s.lo.size() != model.param_dim || s.hi.size() != model.param_dim) {
    throw Error(Errc::invalid_input, "search box has wrong dimension");
  }
  const TiltOptions tilt = options.tilt;
  const MomentModel* mp = &model;
  const Dataset* dp = &data;
  const Eigen::VectorXd lo = s.lo, hi = s.hi;
  s.objective = [mp, dp, tilt, lo, hi](const Eigen::VectorXd& theta) -> double {
    if (!inside_box(theta, lo, hi)) return -kInf;
    try {
      const EspEvaluation ev = evaluate(*mp, *dp, theta, tilt);
      return ev.in_support ? ev.log_esp_objective : -kInf;
    } catch (const Error&) {
      return -kInf;
    }
  };
  return s;
}

// Multi-start driver shared by the unconstrained and reduced-coordinate
// searches. Every start is scored; full Nelder-Mead runs from the
// most promising ones (the winner therefore dominates every start value).
detail::NmResult multistart_nm(const std::function<double(const Eigen::VectorXd&)>& f,
                               std::vector<Eigen::VectorXd> starts,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                               int nm_max_evals, int max_full_starts, int* restarts,
                               int* total_evals) {
  const int n = static_cast<int>(lo.size());
  struct Scored {
    Eigen::VectorXd x;
    double f;
  };
  std::vector<Scored> scored;
  scored.reserve(starts.size());
  for (auto& x : starts) {
    Eigen::VectorXd c = clamp_to_box(x, lo, hi);
    scored.push_back({c, f(c)});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.f != b.f) return a.f > b.f;
    return lex_less(a.x, b.x);
  });

  detail::NmResult best;
  int launched = 0;
  for (const auto& sc : scored) {
    if (!std::isfinite(sc.f)) break;  // rest are -inf too
    if (launched >= max_full_starts) break;
    ++launched;
    Eigen::VectorXd steps(n);
    for (int j = 0; j < n; ++j) {
      double h = 0.02 * (hi[j] - lo[j]);
      if (sc.x[j] + h > hi[j]) h = -h;
      steps[j] = h;
    }
    detail::NmResult r = detail::nelder_mead_max(f, sc.x, steps, nm_max_evals);
    *total_evals += r.evals;
    if (r.f > best.f || (r.f == best.f && best.x.size() && lex_less(r.x, best.x))) {
      best = r;
    }
  }
  *restarts = static_cast<int>(scored.size());
  // The scored-but-not-launched starts are still dominated: the winner is
  // at least as good as the best start value.
  if (!scored.empty() && std::isfinite(scored.front().f) && scored.front().f > best.f) {
    best.x = scored.front().x;
    best.f = scored.front().f;
  }
  return best;
}

}  // namespace

EstimationResult estimate_esp(const MomentModel& model, const Dataset& data,
                              const std::vector<Eigen::VectorXd>& starts,
                              const EspOptimOptions& options) {
  model.validate();
  const int m = model.param_dim;
  EspSearchSetup search = make_esp_search(model, data, options);

  std::vector<Eigen::VectorXd> all_starts = starts;
  if (options.include_mm_start) {
    try {
      all_starts.push_back(estimate_mm_et(model, data).theta_hat);
    } catch (const Error&) {
      // no root: the grid starts carry the search
    }
  }
  if (options.add_grid_starts) {
    auto grid = coarse_grid(model.param_lower, model.param_upper, options.grid_per_dim);
    all_starts.insert(all_starts.end(), grid.begin(), grid.end());
  }
  if (all_starts.empty()) {
    throw Error(Errc::invalid_input, "estimate_esp needs at least one start point");
  }

  const int nm_max_evals = options.nm_max_evals > 0 ? options.nm_max_evals : 600 * m;
  int restarts = 0, evals = 0;
  detail::NmResult best = multistart_nm(search.objective, all_starts, search.lo, search.hi,
                                        nm_max_evals, 12, &restarts, &evals);
  if (!std::isfinite(best.f)) {
    throw Error(Errc::empty_support, "every start point is outside the ESP support");
  }

  int polish_iters = 0;
  if (options.polish && model.has_jacobian() && model.has_hessian()) {
    auto grad = [&](const Eigen::VectorXd& x) {
      return gradient_objective(model, data, x, options.tilt);
    };
    PolishOut polished =
        bfgs_ascent(search.objective, grad, best.x, best.f, search.lo, search.hi);
    polish_iters = polished.iters;
    if (polished.f >= best.f) {
      best.x = polished.x;
      best.f = polished.f;
    }
  }

  EstimationResult result;
  result.method = Method::esp;
  result.theta_hat = best.x;
  result.objective_value = best.f;
  result.covariance = plugin_covariance(model, data, best.x);
  result.trace.iterations = evals + polish_iters;
  result.trace.restarts = restarts;
  result.trace.status = "converged";
  return result;
}

RestrictionSpec RestrictionSpec::fix_components(std::vector<std::pair<int, double>> fixed) {
  if (fixed.empty()) {
    throw Error(Errc::invalid_restriction, "fix_components needs at least one component");
  }
  RestrictionSpec r;
  r.fixed_ = std::move(fixed);
  std::sort(r.fixed_.begin(), r.fixed_.end());
  return r;
}

RestrictionSpec RestrictionSpec::linear(Eigen::MatrixXd A, Eigen::VectorXd b) {
  if (A.rows() < 1 || A.rows() != b.size()) {
    throw Error(Errc::invalid_restriction, "linear restriction needs A rows matching b");
  }
  RestrictionSpec r;
  r.A_ = std::move(A);
  r.b_ = std::move(b);
  return r;
}

int RestrictionSpec::q() const {
  return is_fix() ? static_cast<int>(fixed_.size()) : static_cast<int>(A_.rows());
}

Eigen::MatrixXd RestrictionSpec::jacobian(int m) const {
  if (is_fix()) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(q(), m);
    for (int i = 0; i < q(); ++i) R(i, fixed_[i].first) = 1.0;
    return R;
  }
  return A_;
}

Eigen::VectorXd RestrictionSpec::residual(const Eigen::VectorXd& theta) const {
  if (is_fix()) {
    Eigen::VectorXd r(q());
    for (int i = 0; i < q(); ++i) r[i] = theta[fixed_[i].first] - fixed_[i].second;
    return r;
  }
  return A_ * theta - b_;
}

void RestrictionSpec::validate(int m) const {
  if (q() < 1 || q() > m) {
    throw Error(Errc::invalid_restriction,
                "restriction count q must satisfy 1 <= q <= " + std::to_string(m));
  }
  if (is_fix()) {
    for (std::size_t i = 0; i < fixed_.size(); ++i) {
      if (fixed_[i].first < 0 || fixed_[i].first >= m) {
        throw Error(Errc::invalid_restriction, "fixed component index out of range");
      }
      if (i > 0 && fixed_[i].first == fixed_[i - 1].first) {
        throw Error(Errc::invalid_restriction, "duplicate fixed component index");
      }
    }
    return;
  }
  if (A_.cols() != m) {
    throw Error(Errc::invalid_restriction, "restriction matrix has wrong column count");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A_);
  if (qr.rank() < A_.rows()) {
    throw Error(Errc::invalid_restriction, "restriction matrix is rank deficient");
  }
}

EstimationResult estimate_constrained(const MomentModel& model, const Dataset& data,
                                      const RestrictionSpec& restriction,
                                      const std::vector<Eigen::VectorXd>& starts,
                                      const EspOptimOptions& options) {
  model.validate();
  const int m = model.param_dim;
  restriction.validate(m);
  const int q = restriction.q();
  EspSearchSetup search = make_esp_search(model, data, options);
  const Eigen::MatrixXd R = restriction.jacobian(m);

  // Affine parameterization of {theta : r(theta) = 0}: theta = base + N z
  // with N an orthonormal kernel basis of R.
  Eigen::VectorXd base;
  Eigen::MatrixXd N;
  if (restriction.is_fix()) {
    base = Eigen::VectorXd::Zero(m);
    for (const auto& [idx, val] : restriction.fixed()) base[idx] = val;
    N = Eigen::MatrixXd::Zero(m, m - q);
    int col = 0;
    for (int j = 0; j < m; ++j) {
      const bool is_fixed = std::any_of(restriction.fixed().begin(), restriction.fixed().end(),
                                        [j](const auto& p) { return p.first == j; });
      if (!is_fixed) N(j, col++) = 1.0;
    }
  } else {
    const Eigen::MatrixXd& A = restriction.A();
    base = A.transpose() * (A * A.transpose()).ldlt().solve(restriction.b());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    Eigen::MatrixXd kernel = lu.kernel();
    if (q < m) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(kernel);
      N = qr.householderQ() * Eigen::MatrixXd::Identity(m, m - q);
    } else {
      N = Eigen::MatrixXd::Zero(m, 0);
    }
  }

  Eigen::VectorXd theta_check;
  double objective = 0.0;
  int restarts = 0, evals = 0;
  if (q == m) {
    theta_check = restriction.is_fix()
                      ? base
                      : Eigen::VectorXd(restriction.A().partialPivLu().solve(restriction.b()));
    objective = search.objective(theta_check);
  } else {
    auto reduced = [&](const Eigen::VectorXd& z) -> double {
      return search.objective(base + N * z);
    };
    std::vector<Eigen::VectorXd> zstarts;
    std::vector<Eigen::VectorXd> theta_starts = starts;
    if (options.include_mm_start) {
      try {
        theta_starts.push_back(estimate_mm_et(model, data).theta_hat);
      } catch (const Error&) {
      }
    }
    if (options.add_grid_starts) {
      auto grid = coarse_grid(model.param_lower, model.param_upper, options.grid_per_dim);
      theta_starts.insert(theta_starts.end(), grid.begin(), grid.end());
    }
    zstarts.reserve(theta_starts.size());
    for (const auto& th : theta_starts) zstarts.push_back(N.transpose() * (th - base));

    // Search box in z-space wide enough to cover the theta box image.
    Eigen::VectorXd zlo = Eigen::VectorXd::Constant(m - q, 0.0);
    Eigen::VectorXd zhi = Eigen::VectorXd::Constant(m - q, 0.0);
    const double radius = (search.hi - search.lo).norm();
    const Eigen::VectorXd zcenter =
        N.transpose() * (0.5 * (search.hi + search.lo) - base);
    zlo = zcenter.array() - radius;
    zhi = zcenter.array() + radius;

    const int nm_max_evals = options.nm_max_evals > 0 ? options.nm_max_evals : 600 * (m - q);
    detail::NmResult best =
        multistart_nm(reduced, zstarts, zlo, zhi, nm_max_evals, 12, &restarts, &evals);
    if (!std::isfinite(best.f)) {
      throw Error(Errc::empty_support, "constrained subspace is outside the ESP support");
    }
    if (options.polish && model.has_jacobian() && model.has_hessian()) {
      auto grad = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        return N.transpose() * gradient_objective(model, data, base + N * z, options.tilt);
      };
      PolishOut polished = bfgs_ascent(reduced, grad, best.x, best.f, zlo, zhi);
      if (polished.f >= best.f) {
        best.x = polished.x;
        best.f = polished.f;
      }
    }
    theta_check = base + N * best.x;
    objective = best.f;
  }

  // Lagrange multiplier from the exact first-order condition
  // grad_objective(theta_check) + R' gamma = 0, in least squares.
  Eigen::VectorXd grad_at_check;
  if (model.has_jacobian() && model.has_hessian()) {
    grad_at_check = gradient_objective(model, data, theta_check, options.tilt);
  } else {
    grad_at_check = gradient_objective_fd(model, data, theta_check, options.tilt);
  }
  Eigen::VectorXd gamma =
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(R.transpose()).solve(-grad_at_check);

  EstimationResult result;
  result.method = Method::esp_constrained;
  result.theta_hat = theta_check;
  result.objective_value = objective;
  result.covariance = plugin_covariance(model, data, theta_check);
  result.lagrange_multiplier = gamma;
  result.trace.iterations = evals;
  result.trace.restarts = restarts;
  result.trace.status = std::isfinite(objective) ? "converged" : "out-of-support";
  return result;
}

}  // namespace esp
