#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ams/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ams_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ams");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = ams::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kIdealized =
    R"({"model": "exp_line", "run": {"idealized": true, "n_particles": 200, "target_probability": 1e-3},
        "experiment": {"replications": 60, "seed": 5}})";

}  // namespace

TEST_CASE("oracle prints the default probability table") {
  const auto r = cli({"oracle", "--model", "exp_line"});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::vector<std::pair<double, double>> rows;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double p = 0, l = 0;
    ls >> p >> l;
    rows.emplace_back(p, l);
  }
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK_THAT(rows[i].first, Catch::Matchers::WithinRel(std::pow(10.0, -3.0 - i), 1e-12));
    CHECK_THAT(rows[i].second, Catch::Matchers::WithinRel((3.0 + i) * std::log(10.0), 1e-12));
  }
}

TEST_CASE("replicate writes provenance-stamped outputs") {
  const auto dir = scratch("replicate");
  const auto config = write_config(dir, kIdealized);
  const auto r = cli({"replicate", "--config", config.string(), "--out", (dir / "o").string(), "--assert"});
  REQUIRE(r.code == 0);
  const auto csv = slurp(dir / "o" / "replications.csv");
  CHECK(csv.rfind("# ams ", 0) == 0);
  CHECK(csv.find("# config: {") != std::string::npos);
  CHECK(csv.find("run_id,seed,n_hat,p_hat,e_hat,c_hat,extinct,wall_ms") != std::string::npos);
  const auto summary = json::parse(slurp(dir / "o" / "summary.json"));
  CHECK(summary.contains("version"));
  CHECK(summary["config"]["run"]["n_particles"] == 200);
  CHECK(summary["summary"]["replications"] == 60);
  CHECK(fs::exists(dir / "o" / "levels.dat"));
}

TEST_CASE("outputs are byte-identical across reruns and thread counts") {
  const auto dir = scratch("idempotent");
  const auto config = write_config(dir, kIdealized);
  std::vector<std::string> csvs, summaries;
  for (const char* threads : {"1", "4", "8", "1"}) {
    const auto out = dir / (std::string("t") + threads + std::to_string(csvs.size()));
    REQUIRE(cli({"replicate", "--config", config.string(), "--out", out.string(), "--threads", threads}).code == 0);
    csvs.push_back(slurp(out / "replications.csv"));
    summaries.push_back(slurp(out / "summary.json"));
  }
  for (std::size_t i = 1; i < csvs.size(); ++i) {
    CHECK(csvs[i] == csvs[0]);
    CHECK(summaries[i] == summaries[0]);
  }
}

TEST_CASE("AMS_THREADS is honoured and does not change results") {
  const auto dir = scratch("env");
  const auto config = write_config(dir, kIdealized);
  REQUIRE(cli({"replicate", "--config", config.string(), "--out", (dir / "a").string()}).code == 0);
  ::setenv("AMS_THREADS", "3", 1);
  const auto r = cli({"replicate", "--config", config.string(), "--out", (dir / "b").string()});
  ::setenv("AMS_THREADS", "zero", 1);
  const auto bad = cli({"replicate", "--config", config.string(), "--out", (dir / "c").string()});
  ::unsetenv("AMS_THREADS");
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "a" / "replications.csv") == slurp(dir / "b" / "replications.csv"));
  CHECK(bad.code == 2);
}

TEST_CASE("seed and replication overrides") {
  const auto dir = scratch("override");
  const auto config = write_config(dir, kIdealized);
  REQUIRE(cli({"replicate", "--config", config.string(), "--out", dir.string(), "--seed", "77", "--replications", "7"})
              .code == 0);
  const auto summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary["config"]["experiment"]["seed"] == 77);
  CHECK(summary["summary"]["replications"] == 7);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  SECTION("config errors exit 2") {
    const auto config = write_config(dir, R"({"model": "exp_line", "run": {"idealized": true, "alpha": 1.5, "target_level": 3}})");
    const auto r = cli({"run", "--config", config.string(), "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("alpha must lie in (0,1)") != std::string::npos);
    CHECK(cli({"run", "--config", (dir / "missing.json").string()}).code == 2);
    CHECK(cli({"nonsense"}).code == 2);
  }
  SECTION("non-termination exits 3 and keeps the level history") {
    const auto config = write_config(dir, R"({"model": "exp_line",
        "run": {"idealized": true, "n_particles": 100, "target_probability": 1e-5, "max_iterations": 3}})");
    const auto r = cli({"run", "--config", config.string(), "--out", dir.string()});
    CHECK(r.code == 3);
    CHECK(fs::exists(dir / "levels.dat"));
  }
  SECTION("failed assertions exit 4") {
    const auto config = write_config(dir, R"({"model": "exp_line", "run": {"idealized": true, "n_particles": 200,
        "target_probability": 1e-3}, "experiment": {"replications": 60, "seed": 5, "reference_sigma_sq": 1000}})");
    const auto r = cli({"replicate", "--config", config.string(), "--out", dir.string(), "--assert"});
    CHECK(r.code == 4);
    CHECK(r.out.find("FAIL relative_variance") != std::string::npos);
  }
}

TEST_CASE("compare reports the variance-ratio test") {
  const auto dir = scratch("compare");
  const auto config = write_config(dir, R"({"model": "exp_line", "run": {"idealized": true, "n_particles": 500,
      "target_probability": 1e-3}, "experiment": {"replications": 100, "seed": 2}})");
  REQUIRE(cli({"compare", "--config", config.string(), "--out", dir.string()}).code == 0);
  const auto doc = json::parse(slurp(dir / "compare.json"));
  for (const char* key : {"ratio", "f_statistic", "p_value", "decision"}) CHECK(doc.contains(key));
  const std::string decision = doc["decision"];
  CHECK((decision == "rejected" || decision == "not rejected"));
  CHECK(fs::exists(dir / "adaptive.csv"));
  CHECK(fs::exists(dir / "fixed.csv"));
}

TEST_CASE("variance on a finite chain") {
  const auto dir = scratch("variance");
  const auto config = write_config(dir, R"({"states": 6, "scores": [0, 1, 2, 3, 4, 5], "eta0": [1, 1, 1, 1, 1, 1],
      "kernel": {"type": "metropolis", "proposal": [[0.5,0.5,0,0,0,0],[0.5,0,0.5,0,0,0],[0,0.5,0,0.5,0,0],
                                                    [0,0,0.5,0,0.5,0],[0,0,0,0.5,0,0.5],[0,0,0,0,0.5,0.5]]},
      "levels": [2.5], "target_level": 4.5, "exact_alpha": {"alpha": 0.5},
      "n_particles": 200, "replications": 2000, "seed": 4})");
  const auto r = cli({"variance", "--config", config.string(), "--out", dir.string(), "--assert"});
  CHECK(r.code == 0);
  const auto doc = json::parse(slurp(dir / "variance.json"));
  CHECK(doc.contains("version"));
}

TEST_CASE("validate-kernel passes for the built-in kernels") {
  const auto dir = scratch("validate");
  const auto config = write_config(dir, R"({"model": {"name": "gauss_watermark", "dimension": 2},
      "kernel": {"type": "gauss_ar1", "sigma": 0.3}, "run": {"target_probability": 1e-3}})");
  const auto r = cli({"validate-kernel", "--config", config.string(), "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "kernel.json"));
}

TEST_CASE("the installed binary propagates exit codes") {
  const auto dir = scratch("binary");
  const auto config = write_config(dir, R"({"model": "exp_line"})");
  const std::string cmd = std::string(AMS_CLI_PATH) + " run --config " + config.string() + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 2);
  const std::string ok = std::string(AMS_CLI_PATH) + " oracle --model gauss_watermark --dimension 3 > /dev/null";
  CHECK(std::system(ok.c_str()) == 0);
}
