// Drives the installed CLI binary end to end: output formats, exit codes
// and byte-level determinism of seeded pipelines.
#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "esp/simulation.hpp"
#include "test_support.hpp"

namespace {

struct RunOutput {
  int exit_code = -1;
  std::string stdout_text;
};

RunOutput run_cli(const std::string& args) {
  const std::string cmd = std::string(ESP_CLI_PATH) + " " + args + " 2>/dev/null";
  RunOutput out;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) {
    out.stdout_text.append(buf.data(), n);
  }
  const int status = pclose(pipe);
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

std::string write_temp_csv(const std::string& name, const esp::Dataset& data) {
  const std::string path = std::string("/tmp/esp_cli_") + name + ".csv";
  std::ofstream out(path, std::ios::trunc);
  for (std::size_t j = 0; j < data.column_names().size(); ++j) {
    if (j) out << ',';
    out << data.column_names()[j];
  }
  out << '\n';
  out.precision(17);
  for (Eigen::Index t = 0; t < data.size(); ++t) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      if (j) out << ',';
      out << data.rows()(t, j);
    }
    out << '\n';
  }
  return path;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("estimate emits JSON with the expected fields") {
  const std::string csv = write_temp_csv("crra", esp_test::crra_dataset(88, 120));
  const RunOutput et = run_cli("estimate --model crra --data " + csv + " --method et");
  CHECK(et.exit_code == 0);
  CHECK(et.stdout_text.find("\"method\": \"mm-et\"") != std::string::npos);
  CHECK(et.stdout_text.find("\"theta_hat\"") != std::string::npos);
  CHECK(et.stdout_text.find("\"std_errors\"") != std::string::npos);

  const RunOutput esp_run = run_cli("estimate --model crra --data " + csv + " --method esp");
  CHECK(esp_run.exit_code == 0);
  CHECK(esp_run.stdout_text.find("\"method\": \"esp\"") != std::string::npos);
}

TEST_CASE("missing data file exits 2 without partial output") {
  const std::string out_path = "/tmp/esp_cli_should_not_exist.json";
  std::remove(out_path.c_str());
  const RunOutput r = run_cli("estimate --model crra --data /tmp/no_such_file.csv --output " +
                              out_path);
  CHECK(r.exit_code == 2);
  std::ifstream probe(out_path);
  CHECK_FALSE(probe.good());
}

TEST_CASE("grid validation exits 2") {
  const std::string csv = write_temp_csv("crra2", esp_test::crra_dataset(88, 60));
  CHECK(run_cli("profile --model crra --data " + csv + " --grid 0:1:1").exit_code == 2);
  CHECK(run_cli("profile --model crra --data " + csv + " --grid 1:0:5").exit_code == 2);
  CHECK(run_cli("profile --model crra --data " + csv + " --grid nonsense").exit_code == 2);
}

TEST_CASE("profile and region emit csv") {
  const std::string csv = write_temp_csv("crra3", esp_test::crra_dataset(88, 120));
  const RunOutput prof = run_cli("profile --model crra --data " + csv + " --grid -20:80:41");
  CHECK(prof.exit_code == 0);
  CHECK(prof.stdout_text.rfind("theta,m1,m2,m3,", 0) == 0);

  const RunOutput reg =
      run_cli("region --model crra --data " + csv + " --kind alr --level 0.95 --grid -20:80:41");
  CHECK(reg.exit_code == 0);
  CHECK(reg.stdout_text.rfind("theta,statistic,accepted", 0) == 0);
}

TEST_CASE("test subcommand emits the four-field JSON") {
  const std::string csv = write_temp_csv("crra4", esp_test::crra_dataset(88, 120));
  for (const std::string kind : {"wald", "lm", "alr", "et"}) {
    const RunOutput r =
        run_cli("test --model crra --data " + csv + " --kind " + kind + " --fix 0=30");
    CHECK(r.exit_code == 0);
    CHECK(r.stdout_text.find("\"kind\": \"" + kind + "\"") != std::string::npos);
    CHECK(r.stdout_text.find("\"statistic\"") != std::string::npos);
    CHECK(r.stdout_text.find("\"dof\": 1") != std::string::npos);
    CHECK(r.stdout_text.find("\"p_value\"") != std::string::npos);
  }
}

TEST_CASE("mc is byte-identical across runs and thread counts") {
  const std::string out1 = "/tmp/esp_cli_mc1.csv";
  const std::string out2 = "/tmp/esp_cli_mc2.csv";
  const std::string args = "mc --T 25 --reps 40 --seed 1 --output ";
  CHECK(run_cli(args + out1).exit_code == 0);
  CHECK(run_cli(args + out2).exit_code == 0);
  const std::string a = read_file(out1);
  CHECK(!a.empty());
  CHECK(a == read_file(out2));

  setenv("ESP_THREADS", "1", 1);
  CHECK(run_cli(args + out2).exit_code == 0);
  unsetenv("ESP_THREADS");
  CHECK(a == read_file(out2));
}

TEST_CASE("unknown subcommand or model exits 2") {
  CHECK(run_cli("frobnicate").exit_code == 2);
  const std::string csv = write_temp_csv("crra5", esp_test::crra_dataset(88, 60));
  CHECK(run_cli("estimate --model pet-rock --data " + csv).exit_code == 2);
}
