#include <cmath>
#include <sstream>

#include "doctest.h"
#include "esp/errors.hpp"
#include "esp/simulation.hpp"

using namespace esp;

TEST_CASE("sampling is deterministic per stream seed") {
  const Dataset a = simulate_hh_sample(42, 25, 0.4);
  const Dataset b = simulate_hh_sample(42, 25, 0.4);
  CHECK(a.rows() == b.rows());
  const Dataset c = simulate_hh_sample(43, 25, 0.4);
  CHECK(a.rows() != c.rows());
  CHECK(a.column_names()[0] == "X");
  CHECK(a.column_names()[1] == "Y");
}

TEST_CASE("sample moments match the design") {
  const int T = 1000000;
  const Dataset big = simulate_hh_sample(7, T, 0.4);
  const double mean_x = big.rows().col(0).mean();
  CHECK(std::abs(mean_x) <= 3.0 * 0.4 / std::sqrt(static_cast<double>(T)));
  const double var_y = (big.rows().col(1).array() - big.rows().col(1).mean()).square().mean();
  CHECK(var_y == doctest::Approx(0.16).epsilon(0.01));
}

TEST_CASE("invalid configs are rejected") {
  CHECK_THROWS_AS(simulate_hh_sample(1, 1, 0.4), Error);
  CHECK_THROWS_AS(simulate_hh_sample(1, 10, 0.0), Error);
  McConfig cfg;
  cfg.replications = 0;
  CHECK_THROWS_AS(run_mc(cfg), Error);
}

TEST_CASE("single replication collapses the summary") {
  McConfig cfg;
  cfg.sample_size = 40;
  cfg.replications = 1;
  cfg.seed = 11;
  const McSummary s = run_mc(cfg);
  REQUIRE(s.et_failures + s.esp_failures == 0);
  CHECK(s.et_beta.mse == doctest::Approx(s.et_beta.bias * s.et_beta.bias).epsilon(1e-12));
  CHECK(s.et_beta.variance == 0.0);
  CHECK(s.esp_mu.variance == 0.0);
}

TEST_CASE("mse decomposes into variance plus squared bias") {
  McConfig cfg;
  cfg.sample_size = 25;
  cfg.replications = 60;
  cfg.seed = 3;
  const McSummary s = run_mc(cfg);
  for (const McCell* cell : {&s.et_beta, &s.et_mu, &s.esp_beta, &s.esp_mu}) {
    CHECK(std::abs(cell->mse - (cell->variance + cell->bias * cell->bias)) <= 1e-10);
  }
}

TEST_CASE("summaries do not depend on the thread count") {
  McConfig cfg;
  cfg.sample_size = 30;
  cfg.replications = 24;
  cfg.seed = 19;
  cfg.threads = 1;
  const McSummary a = run_mc(cfg);
  cfg.threads = 2;
  const McSummary b = run_mc(cfg);
  CHECK(a.et_beta.mse == b.et_beta.mse);
  CHECK(a.esp_beta.mse == b.esp_beta.mse);
  CHECK(a.et_mu.bias == b.et_mu.bias);
  CHECK(a.esp_mu.variance == b.esp_mu.variance);
  CHECK(a.et_failures == b.et_failures);

  std::ostringstream outa, outb;
  write_mc_csv(outa, {a});
  write_mc_csv(outb, {b});
  CHECK(outa.str() == outb.str());
}

TEST_CASE("mc csv layout") {
  McConfig cfg;
  cfg.sample_size = 25;
  cfg.replications = 4;
  cfg.seed = 5;
  const McSummary s = run_mc(cfg);
  std::ostringstream out;
  write_mc_csv(out, {s});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "T,estimator,param,mse,bias,variance,failures");
  std::getline(in, line);
  CHECK(line.rfind("25,et,beta,", 0) == 0);
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}
