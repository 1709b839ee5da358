// Command-line front end: estimation, testing, region inversion, profiling
// and Monte-Carlo table generation. Machine-first output: JSON for scalar
// results, CSV for curves and tables. Exit codes: 0 success, 2 bad input,
// 3 numeric failure.
#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "esp/errors.hpp"
#include "esp/esp_objective.hpp"
#include "esp/estimation.hpp"
#include "esp/inference.hpp"
#include "esp/num_format.hpp"
#include "esp/simulation.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(const esp::Error& e) {
  switch (e.code()) {
    case esp::Errc::invalid_input:
    case esp::Errc::invalid_restriction:
    case esp::Errc::io_error:
      return kExitInput;
    default:
      return kExitNumeric;
  }
}

struct GridSpec {
  double lo = 0.0, hi = 0.0;
  int count = 0;

  std::vector<double> points() const {
    std::vector<double> g(count);
    for (int i = 0; i < count; ++i) g[i] = lo + i * (hi - lo) / (count - 1);
    return g;
  }
};

GridSpec parse_grid(const std::string& text) {
  GridSpec g;
  const auto c1 = text.find(':');
  const auto c2 = text.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos) {
    throw esp::Error(esp::Errc::invalid_input, "grid must be lo:hi:count, got '" + text + "'");
  }
  auto parse_num = [&](const std::string& part, auto& out) {
    const char* first = part.data();
    const char* last = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) {
      throw esp::Error(esp::Errc::invalid_input, "cannot parse grid field '" + part + "'");
    }
  };
  parse_num(text.substr(0, c1), g.lo);
  parse_num(text.substr(c1 + 1, c2 - c1 - 1), g.hi);
  parse_num(text.substr(c2 + 1), g.count);
  if (g.count < 2) throw esp::Error(esp::Errc::invalid_input, "grid count must be >= 2");
  if (!(g.lo < g.hi)) throw esp::Error(esp::Errc::invalid_input, "grid needs lo < hi");
  return g;
}

esp::MomentModel make_model(const std::string& selector) {
  if (selector == "hall-horowitz") return esp::builtin_hall_horowitz();
  if (selector == "crra") return esp::builtin_crra();
  throw esp::Error(esp::Errc::invalid_input,
                   "unknown model '" + selector +
                       "' (built-ins: hall-horowitz, crra; custom models are a library-level "
                       "extension point)");
}

std::vector<Eigen::VectorXd> parse_starts(const std::vector<std::string>& specs, int m) {
  std::vector<Eigen::VectorXd> starts;
  for (const std::string& s : specs) {
    std::vector<double> vals;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || ptr != item.data() + item.size()) {
        throw esp::Error(esp::Errc::invalid_input, "cannot parse start '" + s + "'");
      }
      vals.push_back(v);
    }
    if (static_cast<int>(vals.size()) != m) {
      throw esp::Error(esp::Errc::invalid_input,
                       "start '" + s + "' has " + std::to_string(vals.size()) +
                           " components, model expects " + std::to_string(m));
    }
    starts.push_back(Eigen::Map<Eigen::VectorXd>(vals.data(), m));
  }
  return starts;
}

std::vector<std::pair<int, double>> parse_fixes(const std::vector<std::string>& specs) {
  std::vector<std::pair<int, double>> fixes;
  for (const std::string& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw esp::Error(esp::Errc::invalid_input, "--fix expects index=value, got '" + s + "'");
    }
    int idx = 0;
    double val = 0.0;
    auto p1 = std::from_chars(s.data(), s.data() + eq, idx);
    auto p2 = std::from_chars(s.data() + eq + 1, s.data() + s.size(), val);
    if (p1.ec != std::errc() || p1.ptr != s.data() + eq || p2.ec != std::errc() ||
        p2.ptr != s.data() + s.size()) {
      throw esp::Error(esp::Errc::invalid_input, "cannot parse --fix '" + s + "'");
    }
    fixes.emplace_back(idx, val);
  }
  return fixes;
}

// All commands buffer their output and write it in one shot, so failed
// runs never leave a partial file behind.
void emit(const std::string& payload, const std::string& output_path) {
  if (output_path.empty()) {
    std::cout << payload;
    return;
  }
  std::ofstream out(output_path, std::ios::binary | std::ios::trunc);
  if (!out) throw esp::Error(esp::Errc::io_error, "cannot open output '" + output_path + "'");
  out << payload;
  if (!out) throw esp::Error(esp::Errc::io_error, "failed writing '" + output_path + "'");
}

// The two JSON schemas are small and fixed, so they are emitted directly
// with 17-significant-digit locale-independent numbers.
std::string number_list(const std::vector<double>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += esp::format_double(values[i]);
  }
  return out + "]";
}

std::string result_to_json(const esp::EstimationResult& fit) {
  std::vector<double> theta(fit.theta_hat.begin(), fit.theta_hat.end());
  std::vector<double> se;
  for (Eigen::Index i = 0; i < fit.covariance.rows(); ++i) {
    se.push_back(std::sqrt(std::max(0.0, fit.covariance(i, i))));
  }
  std::ostringstream j;
  j << "{\n"
    << "  \"method\": \"" << esp::method_name(fit.method) << "\",\n"
    << "  \"theta_hat\": " << number_list(theta) << ",\n"
    << "  \"std_errors\": " << number_list(se) << ",\n"
    << "  \"objective\": " << esp::format_double(fit.objective_value) << ",\n"
    << "  \"trace\": {\n"
    << "    \"iterations\": " << fit.trace.iterations << ",\n"
    << "    \"restarts\": " << fit.trace.restarts << ",\n"
    << "    \"status\": \"" << fit.trace.status << "\"\n"
    << "  }\n"
    << "}\n";
  return j.str();
}

std::string test_to_json(const esp::TestResult& result) {
  std::ostringstream j;
  j << "{\n"
    << "  \"kind\": \"" << esp::test_kind_name(result.kind) << "\",\n"
    << "  \"statistic\": " << esp::format_double(result.statistic) << ",\n"
    << "  \"dof\": " << result.dof << ",\n"
    << "  \"p_value\": " << esp::format_double(result.p_value) << "\n"
    << "}\n";
  return j.str();
}

int cmd_estimate(const std::string& model_name, const std::string& data_path,
                 const std::string& method, const std::vector<std::string>& start_specs,
                 const std::string& output) {
  const esp::MomentModel model = make_model(model_name);
  const esp::Dataset data = esp::Dataset::from_csv(data_path);
  const auto starts = parse_starts(start_specs, model.param_dim);

  esp::EstimationResult fit;
  if (method == "et" || method == "mm") {
    fit = esp::estimate_mm_et(model, data, starts);
  } else if (method == "esp") {
    fit = esp::estimate_esp(model, data, starts);
  } else {
    throw esp::Error(esp::Errc::invalid_input, "method must be et, mm or esp");
  }
  emit(result_to_json(fit), output);
  return kExitOk;
}

int cmd_test(const std::string& model_name, const std::string& data_path,
             const std::string& kind, const std::vector<std::string>& fix_specs,
             const std::string& output) {
  const esp::MomentModel model = make_model(model_name);
  const esp::Dataset data = esp::Dataset::from_csv(data_path);
  const auto fixes = parse_fixes(fix_specs);
  if (fixes.empty()) {
    throw esp::Error(esp::Errc::invalid_input, "test needs at least one --fix restriction");
  }
  const esp::RestrictionSpec restriction = esp::RestrictionSpec::fix_components(fixes);
  restriction.validate(model.param_dim);

  esp::TestResult result;
  if (kind == "wald") {
    result = esp::wald_test(model, data, esp::estimate_esp(model, data), restriction);
  } else if (kind == "lm") {
    result = esp::lm_test(model, data, esp::estimate_constrained(model, data, restriction),
                          restriction);
  } else if (kind == "et") {
    result = esp::et_test(model, data, esp::estimate_constrained(model, data, restriction),
                          restriction);
  } else if (kind == "alr") {
    const esp::EstimationResult unconstrained = esp::estimate_esp(model, data);
    const esp::EstimationResult constrained =
        esp::estimate_constrained(model, data, restriction);
    result = esp::alr_test(esp::evaluate(model, data, unconstrained.theta_hat),
                           esp::evaluate(model, data, constrained.theta_hat),
                           restriction.q());
  } else {
    throw esp::Error(esp::Errc::invalid_input, "test kind must be wald, lm, alr or et");
  }

  emit(test_to_json(result), output);
  return kExitOk;
}

int cmd_region(const std::string& model_name, const std::string& data_path,
               const std::string& kind, double level, const std::string& grid_text,
               const std::string& output) {
  const esp::MomentModel model = make_model(model_name);
  const esp::Dataset data = esp::Dataset::from_csv(data_path);
  const GridSpec grid = parse_grid(grid_text);

  esp::RegionKind region_kind;
  if (kind == "alr") region_kind = esp::RegionKind::alr;
  else if (kind == "alr-et") region_kind = esp::RegionKind::alr_et;
  else throw esp::Error(esp::Errc::invalid_input, "region kind must be alr or alr-et");

  const esp::ConfidenceRegion region =
      esp::invert_confidence_region(model, data, region_kind, level, grid.points());

  std::ostringstream csv;
  esp::write_region_csv(csv, region);
  emit(csv.str(), output);

  std::ostringstream summary;
  summary << "accepted:";
  for (const auto& [lo, hi] : region.accepted_intervals) {
    summary << " [" << esp::format_double(lo, 6) << ", " << esp::format_double(hi, 6) << "]";
  }
  if (region.accepted_intervals.empty()) summary << " (empty)";
  std::cerr << summary.str() << "\n";
  return kExitOk;
}

int cmd_profile(const std::string& model_name, const std::string& data_path,
                const std::string& grid_text, const std::string& output) {
  const esp::MomentModel model = make_model(model_name);
  if (model.param_dim != 1) {
    throw esp::Error(esp::Errc::invalid_input, "profile grids are scalar; model has m > 1");
  }
  const esp::Dataset data = esp::Dataset::from_csv(data_path);
  const GridSpec grid = parse_grid(grid_text);
  std::vector<Eigen::VectorXd> points;
  for (double v : grid.points()) {
    Eigen::VectorXd p(1);
    p << v;
    points.push_back(p);
  }
  std::ostringstream csv;
  esp::write_profile_csv(csv, esp::profile(model, data, points));
  emit(csv.str(), output);
  return kExitOk;
}

int cmd_mc(int T, int reps, std::uint64_t seed, double beta_cap, double noise_sd,
           const std::string& output) {
  esp::McConfig cfg;
  cfg.sample_size = T;
  cfg.replications = reps;
  cfg.seed = seed;
  cfg.et_beta_cap = beta_cap;
  cfg.noise_sd = noise_sd;
  const esp::McSummary summary = esp::run_mc(cfg);
  std::ostringstream csv;
  esp::write_mc_csv(csv, {summary});
  emit(csv.str(), output);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical saddlepoint estimation for just-identified moment models"};
  app.require_subcommand(1);

  std::string model_name = "crra", data_path, output, method = "esp", kind, grid_text;
  std::vector<std::string> start_specs, fix_specs;
  double level = 0.95;
  int mc_T = 100, mc_reps = 1000;
  std::uint64_t mc_seed = 0;
  double mc_beta_cap = 15.0, mc_noise_sd = 0.4;

  auto* est = app.add_subcommand("estimate", "Point estimation (et/mm or esp)");
  est->add_option("--model", model_name, "hall-horowitz or crra");
  est->add_option("--data", data_path, "CSV dataset path")->required();
  est->add_option("--method", method, "et, mm or esp");
  est->add_option("--start", start_specs, "start point, comma separated; repeatable");
  est->add_option("--output", output, "output file (default stdout)");

  auto* tst = app.add_subcommand("test", "Wald / LM / ALR / ET test of a restriction");
  tst->add_option("--model", model_name, "hall-horowitz or crra");
  tst->add_option("--data", data_path, "CSV dataset path")->required();
  tst->add_option("--kind", kind, "wald, lm, alr or et")->required();
  tst->add_option("--fix", fix_specs, "restriction index=value; repeatable")->required();
  tst->add_option("--output", output, "output file (default stdout)");

  auto* reg = app.add_subcommand("region", "Confidence region by test inversion");
  reg->add_option("--model", model_name, "hall-horowitz or crra");
  reg->add_option("--data", data_path, "CSV dataset path")->required();
  reg->add_option("--kind", kind, "alr or alr-et")->default_val("alr");
  reg->add_option("--level", level, "confidence level in (0,1)");
  reg->add_option("--grid", grid_text, "lo:hi:count")->required();
  reg->add_option("--output", output, "output file (default stdout)");

  auto* prof = app.add_subcommand("profile", "Objective/density profile over a grid");
  prof->add_option("--model", model_name, "hall-horowitz or crra");
  prof->add_option("--data", data_path, "CSV dataset path")->required();
  prof->add_option("--grid", grid_text, "lo:hi:count")->required();
  prof->add_option("--output", output, "output file (default stdout)");

  auto* mc = app.add_subcommand("mc", "Monte-Carlo benchmark table");
  mc->add_option("--T", mc_T, "sample size");
  mc->add_option("--reps", mc_reps, "replications");
  mc->add_option("--seed", mc_seed, "RNG seed")->default_val(0);
  mc->add_option("--et-beta-cap", mc_beta_cap, "beta cap for the ET root search");
  mc->add_option("--noise-sd", mc_noise_sd, "standard deviation of X and Y");
  mc->add_option("--output", output, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (est->parsed()) return cmd_estimate(model_name, data_path, method, start_specs, output);
    if (tst->parsed()) return cmd_test(model_name, data_path, kind, fix_specs, output);
    if (reg->parsed()) return cmd_region(model_name, data_path, kind, level, grid_text, output);
    if (prof->parsed()) return cmd_profile(model_name, data_path, grid_text, output);
    if (mc->parsed()) return cmd_mc(mc_T, mc_reps, mc_seed, mc_beta_cap, mc_noise_sd, output);
  } catch (const esp::Error& e) {
    std::cerr << "error (" << esp::errc_name(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitInput;
}
