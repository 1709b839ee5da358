#ifndef ESP_SRC_NELDER_MEAD_HPP
#define ESP_SRC_NELDER_MEAD_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace esp::detail {

struct NmResult {
  Eigen::VectorXd x;
  double f = -std::numeric_limits<double>::infinity();
  int evals = 0;
  bool converged = false;
};

// Nelder-Mead maximization with reflection 1, expansion 2, contraction 0.5
// and shrink 0.5. The objective may return -inf (infeasible); such vertices
// rank worst and the simplex contracts away from them. Fully deterministic:
// ties in the vertex ordering keep insertion order.
inline NmResult nelder_mead_max(const std::function<double(const Eigen::VectorXd&)>& f,
                                const Eigen::VectorXd& x0, const Eigen::VectorXd& steps,
                                int max_evals, double xtol = 1e-9, double ftol = 1e-11) {
  const int n = static_cast<int>(x0.size());
  NmResult result;
  result.x = x0;

  std::vector<Eigen::VectorXd> vx(n + 1, x0);
  std::vector<double> vf(n + 1);
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  };

  vf[0] = eval(x0);
  for (int i = 0; i < n; ++i) {
    vx[i + 1][i] += steps[i];
    vf[i + 1] = eval(vx[i + 1]);
  }

  std::vector<int> order(n + 1);
  std::iota(order.begin(), order.end(), 0);
  auto sort_order = [&]() {
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return vf[a] > vf[b]; });
  };

  while (evals < max_evals) {
    sort_order();
    const int best = order[0], worst = order[n];
    if (!std::isfinite(vf[best])) break;  // whole simplex infeasible

    // Convergence on simplex extent and objective spread (ignoring -inf
    // vertices, which keep the spread infinite while feasible ones agree).
    double extent = 0.0;
    double spread = 0.0;
    bool all_finite = true;
    for (int i = 1; i <= n; ++i) {
      extent = std::max(extent, (vx[order[i]] - vx[best]).cwiseAbs().maxCoeff());
      if (std::isfinite(vf[order[i]])) {
        spread = std::max(spread, vf[best] - vf[order[i]]);
      } else {
        all_finite = false;
      }
    }
    if (extent <= xtol * (1.0 + vx[best].cwiseAbs().maxCoeff()) &&
        (all_finite ? spread <= ftol * (1.0 + std::abs(vf[best])) : true)) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += vx[order[i]];
    centroid /= n;

    const Eigen::VectorXd xr = centroid + (centroid - vx[worst]);
    const double fr = eval(xr);
    if (fr > vf[order[0]]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - vx[worst]);
      const double fe = eval(xe);
      if (fe > fr) {
        vx[worst] = xe;
        vf[worst] = fe;
      } else {
        vx[worst] = xr;
        vf[worst] = fr;
      }
    } else if (fr > vf[order[n - 1]]) {
      vx[worst] = xr;
      vf[worst] = fr;
    } else {
      const bool outside = fr > vf[worst];
      Eigen::VectorXd xc;
      if (outside) xc = centroid + 0.5 * (xr - centroid);
      else xc = centroid - 0.5 * (centroid - vx[worst]);
      const double fc = eval(xc);
      if (fc > (outside ? fr : vf[worst])) {
        vx[worst] = xc;
        vf[worst] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          vx[order[i]] = vx[order[0]] + 0.5 * (vx[order[i]] - vx[order[0]]);
          vf[order[i]] = eval(vx[order[i]]);
        }
      }
    }
  }

  sort_order();
  result.x = vx[order[0]];
  result.f = vf[order[0]];
  result.evals = evals;
  return result;
}

}  // namespace esp::detail

#endif  // ESP_SRC_NELDER_MEAD_HPP
