#pragma once

// JSON configuration for experiments and finite chains.
//
// Experiment document:
//   {
//     "model":      "exp_line" | {"name": "gauss_watermark", "dimension": 2},
//     "kernel":     {"type": "gauss_ar1" | "rw_metropolis", "sigma" | "step": x, "inner_steps"},
//     "run":        {"mode": "adaptive" | "fixed" | "idealized_adaptive" | "idealized_fixed",
//                    "idealized", "n_particles", "alpha", "alpha_schedule",
//                    "target_level" | "target_probability", "levels": [...] | "optimal",
//                    "max_iterations", "inner_steps"},
//     "experiment": {"replications", "seed", "threads", "reference_sigma_sq",
//                    "confidence", "level_history"},
//     "output":     {"dir", "timing"}
//   }
//
// Chain document:
//   {"states", "scores", "eta0", "kernel": [[...]] | {"type": "metropolis", "proposal": [[...]]},
//    "levels", "target_level", "exact_alpha": {"alpha", "r"}, "f",
//    "n_particles", "replications", "seed", "threads", "confidence"}
//
// Unknown keys are errors.

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ams/harness.hpp"
#include "ams/variance.hpp"

namespace ams {

struct ParsedConfig {
  ExperimentSpec experiment;
  std::string output_dir = ".";
};

/// Throws ConfigError naming the offending key.
ParsedConfig parse_config(const std::string& text);
ParsedConfig parse_config(const nlohmann::json& document);
inline ParsedConfig parse_config(const char* text) { return parse_config(std::string(text)); }

struct ChainConfig {
  FiniteChainSpec chain;
  std::optional<Eigen::VectorXd> f;
  std::size_t n_particles = 0;
  std::size_t replications = 0;
  std::uint64_t seed = 1;
  int threads = 0;
  double confidence = 0.95;
};

ChainConfig parse_chain_config(const std::string& text);

std::string mode_name(const SplittingConfig& run);

/// The fully resolved experiment in the input schema.
nlohmann::json to_json(const ExperimentSpec& spec, const std::string& output_dir);
nlohmann::json to_json(const ChainConfig& config);

}  // namespace ams
