#include <cmath>
#include <limits>
#include <string>

#include "esp/errors.hpp"
#include "esp/inference.hpp"

namespace esp {

namespace {

constexpr int kMaxIter = 500;
const double kEps = std::numeric_limits<double>::epsilon();
const double kFpMin = std::numeric_limits<double>::min() / kEps;

// Regularized lower incomplete gamma P(a, x) by its series expansion,
// valid and fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ++ap;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by modified Lentz continued
// fraction, for x >= a + 1.
double gamma_q_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kFpMin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = b + an / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) {
    throw Error(Errc::invalid_input, "gamma_q needs x >= 0 and a > 0");
  }
  if (x == 0.0) return 1.0;
  return (x < a + 1.0) ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double chi2_log_pdf(double x, int dof) {
  const double a = 0.5 * dof;
  return (a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a);
}

}  // namespace

double chi2_sf(double x, int dof) {
  if (dof < 1) throw Error(Errc::invalid_input, "chi2_sf needs dof >= 1");
  if (std::isnan(x)) throw Error(Errc::invalid_input, "chi2_sf needs a real statistic");
  if (x < 0.0) {
    throw Error(Errc::invalid_input, "chi2_sf needs x >= 0");
  }
  if (std::isinf(x)) return 0.0;
  return gamma_q(0.5 * dof, 0.5 * x);
}

double chi2_quantile(double p, int dof) {
  if (dof < 1) throw Error(Errc::invalid_input, "chi2_quantile needs dof >= 1");
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(Errc::invalid_input, "chi2_quantile needs p in (0, 1)");
  }
  const double target_sf = 1.0 - p;

  // Bracket the quantile, then bisect; polish with Newton on the survival
  // function (derivative is minus the density).
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(dof));
  while (chi2_sf(hi, dof) > target_sf) hi *= 2.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_sf(mid, dof) > target_sf) lo = mid;
    else hi = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 30; ++i) {
    const double f = chi2_sf(x, dof) - target_sf;
    const double pdf = std::exp(chi2_log_pdf(x, dof));
    if (!(pdf > 0.0)) break;
    const double step = f / pdf;
    const double x_new = std::min(std::max(x + step, lo), hi);
    if (std::abs(x_new - x) <= 1e-12 * (1.0 + std::abs(x))) {
      x = x_new;
      break;
    }
    x = x_new;
  }
  return x;
}

}  // namespace esp
