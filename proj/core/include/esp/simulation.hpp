#ifndef ESP_SIMULATION_HPP
#define ESP_SIMULATION_HPP

#include <cstdint>
#include <iosfwd>

#include "esp/estimation.hpp"

namespace esp {

/// Configuration of one Monte-Carlo table row: `replications` samples of
/// size `sample_size` from the Hall-Horowitz design, each estimated by ET
/// (root search with beta capped at `et_beta_cap`) and by ESP (wide
/// unrestricted box).
struct McConfig {
  int sample_size = 100;
  int replications = 1000;
  std::uint64_t seed = 0;
  double beta0 = 3.0;
  double mu0 = -0.72;
  double noise_sd = 0.4;  // X, Y ~ N(0, noise_sd^2), independent
  double et_beta_cap = 15.0;
  int threads = 0;  // 0: ESP_THREADS env var, then hardware concurrency
};

struct McCell {
  double mse = 0.0;
  double bias = 0.0;
  double variance = 0.0;
};

struct McSummary {
  int sample_size = 0;
  int replications = 0;
  McCell et_beta, et_mu, esp_beta, esp_mu;
  int et_failures = 0;
  int esp_failures = 0;
};

/// Deterministic per-stream normal sampler: mt19937_64 driven Box-Muller
/// pairs, one pair per observation row (X_t, Y_t). The stream for
/// replication r is derived from seed ^ r, so results do not depend on
/// thread count or replication order.
Dataset simulate_hh_sample(std::uint64_t stream_seed, int sample_size, double noise_sd);

McSummary run_mc(const McConfig& config);

/// CSV emission: header T,estimator,param,mse,bias,variance,failures with
/// rows (et,beta), (et,mu), (esp,beta), (esp,mu) per summary.
void write_mc_csv(std::ostream& out, const std::vector<McSummary>& summaries);

}  // namespace esp

#endif  // ESP_SIMULATION_HPP
