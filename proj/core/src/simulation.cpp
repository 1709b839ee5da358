#include "esp/simulation.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <vector>

#include "esp/errors.hpp"
#include "esp/num_format.hpp"
#include "nelder_mead.hpp"
#include "parallel.hpp"

namespace esp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform in [0, 1) from the top 53 bits; avoids the implementation-defined
// std::uniform_real_distribution so streams are bit-identical everywhere.
double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// One Box-Muller pair per call; u1 is reflected into (0, 1] so the log is
// always finite.
void normal_pair(std::mt19937_64& gen, double sd, double& z1, double& z2) {
  const double u1 = 1.0 - uniform01(gen);
  const double u2 = uniform01(gen);
  const double radius = sd * std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  z1 = radius * std::cos(angle);
  z2 = radius * std::sin(angle);
}

struct CellAccumulator {
  std::vector<double> errors;

  McCell summarize() const {
    McCell cell;
    const double n = static_cast<double>(errors.size());
    if (errors.empty()) {
      cell.mse = cell.bias = cell.variance = kNaN;
      return cell;
    }
    double sum = 0.0, sumsq = 0.0;
    for (double e : errors) {
      sum += e;
      sumsq += e * e;
    }
    cell.mse = sumsq / n;
    cell.bias = sum / n;
    double var = 0.0;
    const double mean = cell.bias;
    for (double e : errors) var += (e - mean) * (e - mean);
    cell.variance = var / n;
    return cell;
  }
};

}  // namespace

Dataset simulate_hh_sample(std::uint64_t stream_seed, int sample_size, double noise_sd) {
  if (sample_size < 2) throw Error(Errc::invalid_input, "sample_size must be >= 2");
  if (!(noise_sd > 0.0)) throw Error(Errc::invalid_input, "noise_sd must be positive");
  std::mt19937_64 gen(splitmix64(stream_seed));
  Eigen::MatrixXd rows(sample_size, 2);
  for (int t = 0; t < sample_size; ++t) {
    normal_pair(gen, noise_sd, rows(t, 0), rows(t, 1));
  }
  return Dataset(std::move(rows), {"X", "Y"});
}

McSummary run_mc(const McConfig& config) {
  if (config.replications < 1) {
    throw Error(Errc::invalid_input, "replications must be >= 1");
  }
  if (!(config.noise_sd > 0.0)) {
    throw Error(Errc::invalid_input, "noise_sd must be positive");
  }

  MomentModel et_model = builtin_hall_horowitz();
  et_model.param_upper[0] = config.et_beta_cap;

  // The ESP estimator runs without the beta cap: a wide box standing in
  // for an unrestricted compact parameter space.
  MomentModel esp_model = builtin_hall_horowitz();
  esp_model.param_lower = Eigen::Vector2d(-50.0, -650.0);
  esp_model.param_upper = Eigen::Vector2d(1050.0, 650.0);

  const Eigen::Vector2d theta0(config.beta0, config.mu0);
  const std::vector<Eigen::VectorXd> grid_starts =
      coarse_grid(et_model.param_lower, et_model.param_upper, 8);

  const int R = config.replications;
  std::vector<double> et_beta_err(R, kNaN), et_mu_err(R, kNaN);
  std::vector<double> esp_beta_err(R, kNaN), esp_mu_err(R, kNaN);

  detail::parallel_for(R, config.threads, [&](int r) {
    const Dataset sample = simulate_hh_sample(
        config.seed ^ static_cast<std::uint64_t>(r), config.sample_size, config.noise_sd);

    std::vector<Eigen::VectorXd> starts;
    starts.push_back(theta0);
    starts.insert(starts.end(), grid_starts.begin(), grid_starts.end());

    // ET: moment root inside the capped box. When no root exists there,
    // the estimate is the (possibly boundary) maximizer of ln K, matching
    // the capped-parameter-space reading of the estimator.
    Eigen::VectorXd et_hat;
    bool et_ok = false;
    try {
      MmOptions mm;
      mm.add_grid_starts = false;
      const EstimationResult root = estimate_mm_et(et_model, sample, starts, mm);
      et_hat = root.theta_hat;
      et_ok = true;
    } catch (const Error&) {
      auto log_k_objective = [&](const Eigen::VectorXd& th) -> double {
        if ((th.array() < et_model.param_lower.array()).any() ||
            (th.array() > et_model.param_upper.array()).any()) {
          return -std::numeric_limits<double>::infinity();
        }
        try {
          const TiltingSolution tilt = solve_tilt(et_model, sample, th);
          return tilt.converged() ? tilt.log_k : -std::numeric_limits<double>::infinity();
        } catch (const Error&) {
          return -std::numeric_limits<double>::infinity();
        }
      };
      const Eigen::VectorXd steps = 0.02 * (et_model.param_upper - et_model.param_lower);
      double best_f = -std::numeric_limits<double>::infinity();
      for (const auto& s : starts) {
        const double f0 = log_k_objective(s);
        if (!std::isfinite(f0) || f0 <= best_f) continue;
        const detail::NmResult nm =
            detail::nelder_mead_max(log_k_objective, s, steps, 800);
        if (nm.f > best_f) {
          best_f = nm.f;
          et_hat = nm.x.cwiseMax(et_model.param_lower).cwiseMin(et_model.param_upper);
          et_ok = true;
        }
      }
    }

    if (et_ok) {
      et_beta_err[r] = et_hat[0] - config.beta0;
      et_mu_err[r] = et_hat[1] - config.mu0;
    }

    try {
      EspOptimOptions opts;
      opts.add_grid_starts = false;
      opts.include_mm_start = false;
      std::vector<Eigen::VectorXd> esp_starts = starts;
      if (et_ok) esp_starts.push_back(et_hat);
      const EstimationResult esp = estimate_esp(esp_model, sample, esp_starts, opts);
      esp_beta_err[r] = esp.theta_hat[0] - config.beta0;
      esp_mu_err[r] = esp.theta_hat[1] - config.mu0;
    } catch (const Error&) {
    }
  });

  McSummary summary;
  summary.sample_size = config.sample_size;
  summary.replications = R;
  CellAccumulator et_b, et_m, esp_b, esp_m;
  for (int r = 0; r < R; ++r) {
    if (std::isfinite(et_beta_err[r])) {
      et_b.errors.push_back(et_beta_err[r]);
      et_m.errors.push_back(et_mu_err[r]);
    } else {
      ++summary.et_failures;
    }
    if (std::isfinite(esp_beta_err[r])) {
      esp_b.errors.push_back(esp_beta_err[r]);
      esp_m.errors.push_back(esp_mu_err[r]);
    } else {
      ++summary.esp_failures;
    }
  }
  summary.et_beta = et_b.summarize();
  summary.et_mu = et_m.summarize();
  summary.esp_beta = esp_b.summarize();
  summary.esp_mu = esp_m.summarize();
  return summary;
}

void write_mc_csv(std::ostream& out, const std::vector<McSummary>& summaries) {
  out << "T,estimator,param,mse,bias,variance,failures\n";
  for (const auto& s : summaries) {
    auto row = [&](const char* estimator, const char* param, const McCell& cell,
                   int failures) {
      out << s.sample_size << ',' << estimator << ',' << param << ','
          << format_double(cell.mse) << ',' << format_double(cell.bias) << ','
          << format_double(cell.variance) << ',' << failures << '\n';
    };
    row("et", "beta", s.et_beta, s.et_failures);
    row("et", "mu", s.et_mu, s.et_failures);
    row("esp", "beta", s.esp_beta, s.esp_failures);
    row("esp", "mu", s.esp_mu, s.esp_failures);
  }
}

}  // namespace esp
