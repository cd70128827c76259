#include <catch_amalgamated.hpp>

#include <cmath>

#include "ams/config.hpp"
#include "ams/error.hpp"

using Catch::Matchers::ContainsSubstring;

TEST_CASE("minimal config takes the defaults") {
  const auto c = ams::parse_config(R"({"model": "exp_line", "run": {"idealized": true, "target_probability": 1e-5}})");
  const auto& e = c.experiment;
  CHECK(e.run.alpha == 0.75);
  CHECK(e.master_seed == 1);
  CHECK(e.run.idealized);
  CHECK(e.run.mode == ams::SplittingMode::Adaptive);
  CHECK(e.replications == 1);
  CHECK(e.model.name == "exp_line");
  CHECK(c.output_dir == ".");
  REQUIRE(e.target_probability);
  CHECK(*e.target_probability == 1e-5);
}

TEST_CASE("full config") {
  const auto c = ams::parse_config(R"({
    "model": {"name": "gauss_watermark", "dimension": 3},
    "kernel": {"type": "gauss_ar1", "sigma": 0.4, "inner_steps": 5},
    "run": {"mode": "fixed", "n_particles": 2000, "alpha": 0.5, "target_level": 0.9,
            "levels": [0.2, 0.5], "max_iterations": 77},
    "experiment": {"replications": 30, "seed": 9, "threads": 2, "reference_sigma_sq": 3.5,
                   "confidence": 0.9, "level_history": false},
    "output": {"dir": "out/x", "timing": true}})");
  const auto& e = c.experiment;
  CHECK(e.model.dimension == 3);
  CHECK(e.kernel.type == "gauss_ar1");
  CHECK(e.kernel.scale == 0.4);
  CHECK(e.run.inner_steps == 5);
  CHECK(e.run.mode == ams::SplittingMode::Fixed);
  CHECK(e.run.levels == std::vector<double>{0.2, 0.5});
  CHECK_FALSE(e.optimal_levels);
  CHECK(e.run.max_iterations == 77);
  CHECK(e.replications == 30);
  CHECK(e.master_seed == 9);
  CHECK(e.threads == 2);
  CHECK(*e.reference_sigma_sq == 3.5);
  CHECK(e.confidence == 0.9);
  CHECK_FALSE(e.level_history);
  CHECK(e.timing);
  CHECK(c.output_dir == "out/x");
}

TEST_CASE("fixed mode places oracle levels by default") {
  const auto c = ams::parse_config(R"({"model": "exp_line", "run": {"mode": "idealized_fixed", "target_probability": 1e-3}})");
  CHECK(c.experiment.optimal_levels);
  CHECK(c.experiment.run.idealized);
  const auto rw = ams::parse_config(R"({"model": "exp_line", "kernel": {"type": "rw_metropolis"},
                                         "run": {"target_level": 3}})");
  CHECK(rw.experiment.kernel.scale == 1.0);
}

TEST_CASE("config errors name the key") {
  const auto bad = [](const char* text) { return [text] { ams::parse_config(std::string(text)); }; };
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "run": {"idealized": true, "alpha": 1.5, "target_level": 3}})")(),
                    ContainsSubstring("alpha must lie in (0,1)"));
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "run": {"idealized": true, "n_particles": 3, "target_level": 3}})")(),
                    ContainsSubstring("quantile index underflow"));
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "run": {"idealized": true, "target_level": 3, "bogus": 1}})")(),
                    ContainsSubstring("run.bogus"));
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "run": {"idealized": true, "n_particles": "many", "target_level": 3}})")(),
                    ContainsSubstring("run.n_particles"));
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "run": {"idealized": true, "target_level": 3, "target_probability": 0.1}})")(),
                    ContainsSubstring("only one"));
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "run": {"idealized": true}})")(), ContainsSubstring("target_level"));
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "kernel": {"type": "gauss_ar1"}, "run": {"target_level": 3}})")(),
                    ContainsSubstring("kernel.sigma"));
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "kernel": {"type": "rw_metropolis", "inner_steps": 2},
                            "run": {"target_level": 3, "inner_steps": 2}})")(),
                    ContainsSubstring("not both"));
  CHECK_THROWS_WITH(bad(R"({"model": "exp_line", "run": {"target_level": 3}})")(), ContainsSubstring("kernel"));
  CHECK_THROWS_WITH(bad("{not json")(), ContainsSubstring("malformed JSON"));
  CHECK_THROWS_AS(bad(R"({"model": "exp_line", "run": {"mode": "fixed", "idealized": true, "target_level": 3,
                          "levels": [2, 1]}})")(), ams::ConfigError);
  CHECK_THROWS_AS(bad(R"({"model": {"name": "exp_line", "dimension": 2}, "run": {"idealized": true, "target_level": 3}})")(),
                  ams::ConfigError);
}

TEST_CASE("resolved config round trips through JSON") {
  const auto c = ams::parse_config(R"({"model": "exp_line", "kernel": {"type": "rw_metropolis", "step": 0.5},
                                        "run": {"target_probability": 1e-4, "n_particles": 500},
                                        "experiment": {"replications": 4, "seed": 3}})");
  const auto again = ams::parse_config(ams::to_json(c.experiment, c.output_dir));
  CHECK(again.experiment.run.n_particles == 500);
  CHECK(again.experiment.kernel.scale == 0.5);
  CHECK(again.experiment.replications == 4);
  CHECK(again.experiment.master_seed == 3);
  CHECK(ams::to_json(again.experiment, again.output_dir) == ams::to_json(c.experiment, c.output_dir));
}

TEST_CASE("chain config") {
  const auto c = ams::parse_chain_config(R"({
    "states": 4, "scores": [0, 1, 2, 3], "eta0": [0.25, 0.25, 0.25, 0.25],
    "kernel": {"type": "metropolis", "proposal": [[0.5,0.5,0,0],[0.5,0,0.5,0],[0,0.5,0,0.5],[0,0,0.5,0.5]]},
    "levels": [1.5], "target_level": 2.5, "n_particles": 100, "replications": 10})");
  CHECK(c.chain.states() == 4);
  CHECK(c.chain.n() == 1);
  CHECK(c.n_particles == 100);
  CHECK(c.seed == 1);
  CHECK(std::abs(c.chain.kernel.row(0).sum() - 1.0) < 1e-15);
  CHECK_THROWS_AS(ams::parse_chain_config(R"({"states": 2, "scores": [0, 1], "eta0": [0.5, 0.5],
                                              "kernel": [[0.9, 0.1], [0.5, 0.5]], "levels": [], "target_level": 0.5})"),
                  ams::ConfigError);
  CHECK_THROWS_WITH(ams::parse_chain_config(R"({"states": 3, "scores": [0, 1], "eta0": [0.5, 0.5],
                                               "kernel": [[1, 0], [0, 1]], "levels": [], "target_level": 0.5})"),
                    ContainsSubstring("states"));
}
