#include "ams/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "ams/config.hpp"
#include "ams/error.hpp"
#include "ams/harness.hpp"
#include "ams/kernel.hpp"
#include "ams/splitting.hpp"
#include "ams/variance.hpp"

namespace ams {

namespace {

using nlohmann::ordered_json;
using json = nlohmann::json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool assert_checks = false;
  bool timing = false;
  // oracle
  std::string model = "exp_line";
  std::size_t dimension = 0;
  std::vector<double> probabilities;
  std::vector<double> levels;
  // validate-kernel
  std::size_t pairs = 1000;
  std::size_t steps = 10;
  std::size_t particles = 2000;
  double level_probability = 0.1;
};

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
}

std::string comment_header(const json& config) {
  return std::string("# ams ") + AMS_VERSION + "\n# config: " + config.dump() + "\n";
}

ordered_json provenance(const json& config) {
  ordered_json doc;
  doc["version"] = AMS_VERSION;
  doc["config"] = config;
  return doc;
}

std::optional<int> env_threads() {
  const char* v = std::getenv("AMS_THREADS");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("AMS_THREADS must be a positive integer");
  return static_cast<int>(n);
}

/// Flag, then AMS_THREADS, then the config value.
int resolve_threads(const Options& o, int from_config) {
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads must be >= 1");
    return *o.threads;
  }
  if (auto env = env_threads()) return *env;
  return from_config;
}

ParsedConfig load_experiment(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  ParsedConfig parsed = parse_config(read_file(o.config));
  ExperimentSpec& spec = parsed.experiment;
  if (o.seed) spec.master_seed = *o.seed;
  if (o.replications) spec.replications = *o.replications;
  spec.threads = resolve_threads(o, spec.threads);
  if (o.timing) spec.timing = true;
  if (o.out) parsed.output_dir = *o.out;
  return parsed;
}

json resolved_config(const Experiment& e, const std::string& dir) {
  json doc = to_json(e.spec, dir);
  // worker count and output location never change results
  doc["experiment"].erase("threads");
  doc["output"].erase("dir");
  return doc;
}

ordered_json summary_json(const ReplicationSummary& s) {
  ordered_json j;
  j["replications"] = s.replications;
  j["completed"] = s.completed;
  j["failures"] = s.failures;
  j["extinctions"] = s.extinctions;
  j["n_particles"] = s.n_particles;
  j["probability"] = s.probability;
  j["mean"] = s.mean;
  j["variance"] = s.variance;
  j["rel_bias"] = s.rel_bias;
  j["n_times_relvar"] = s.n_times_relvar;
  j["n_times_relvar_se"] = s.n_times_relvar_se;
  j["mean_n_hat"] = s.mean_n_hat;
  j["incompressible_bound"] = s.incompressible_bound ? json(*s.incompressible_bound) : json(nullptr);
  j["sigma_sq_used"] = s.sigma_sq_used;
  j["coverage"] = s.coverage ? json(*s.coverage) : json(nullptr);
  j["normality_stat"] = s.normality_stat ? json(*s.normality_stat) : json(nullptr);
  j["normality_p"] = s.normality_p ? json(*s.normality_p) : json(nullptr);
  return j;
}

std::string records_csv(const std::vector<ReplicationRecord>& records, const json& config) {
  std::string out = comment_header(config);
  out += "run_id,seed,n_hat,p_hat,e_hat,c_hat,extinct,wall_ms\n";
  for (const auto& r : records) {
    out += std::to_string(r.run_id) + "," + std::to_string(r.seed) + "," +
           (r.failed ? std::string("nan") : std::to_string(r.n_hat)) + "," + number(r.p_hat) + "," +
           number(r.e_hat) + "," + number(r.c_hat) + "," + (r.extinct ? "1" : "0") + "," + number(r.wall_ms) + "\n";
  }
  return out;
}

std::string levels_dat(const std::vector<ReplicationRecord>& records, const json& config) {
  std::string out = comment_header(config);
  out += "# run_id stage level\n";
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (k > 0) out += "\n";
    const auto& r = records[k];
    for (std::size_t p = 0; p < r.levels.size(); ++p) {
      out += std::to_string(r.run_id) + " " + std::to_string(p) + " " + number(r.levels[p]) + "\n";
    }
  }
  return out;
}

struct Check {
  std::string name;
  bool passed;
  std::string detail;
};

ordered_json checks_json(const std::vector<Check>& checks) {
  ordered_json arr = ordered_json::array();
  for (const auto& c : checks) arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return arr;
}

int finish_checks(const std::vector<Check>& checks, bool enforce, std::ostream& out) {
  bool all = true;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    all = all && c.passed;
  }
  return (enforce && !all) ? kExitAssertion : kExitOk;
}

std::vector<Check> replicate_checks(const Experiment& e, const ReplicationSummary& s) {
  std::vector<Check> checks;
  checks.push_back({"no_failures", s.failures == 0, std::to_string(s.failures) + " non-terminating replications"});
  if (e.spec.run.idealized) {
    checks.push_back({"no_extinctions", s.extinctions == 0, std::to_string(s.extinctions) + " extinct replications"});
  }
  const double n = static_cast<double>(s.n_particles);
  const double r = static_cast<double>(s.completed);
  if (e.spec.reference_sigma_sq && std::isfinite(s.probability) && s.completed >= 2) {
    const double sigma = *e.spec.reference_sigma_sq;
    const double tol = 5.0 * std::sqrt(sigma / (n * r));
    checks.push_back({"bias", std::abs(s.rel_bias) <= tol,
                      "|rel_bias| = " + number(std::abs(s.rel_bias)) + " <= " + number(tol)});
    const double band = 4.0 * std::sqrt(2.0 / r);
    const double lo = sigma * (1.0 - band), hi = sigma * (1.0 + band);
    checks.push_back({"relative_variance", s.n_times_relvar >= lo && s.n_times_relvar <= hi,
                      "N Var/P^2 = " + number(s.n_times_relvar) + " in [" + number(lo) + ", " + number(hi) + "]"});
  }
  if (s.normality_p) {
    checks.push_back({"normality", *s.normality_p > 0.01, "Anderson-Darling p = " + number(*s.normality_p)});
  }
  if (s.incompressible_bound && std::isfinite(s.n_times_relvar)) {
    const double floor = 0.8 * *s.incompressible_bound;
    checks.push_back({"incompressible_bound", s.n_times_relvar >= floor,
                      "N Var/P^2 = " + number(s.n_times_relvar) + " >= " + number(floor)});
  }
  return checks;
}

void set_parallelism(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

// ---------------------------------------------------------------------------

int cmd_run(const Options& o, std::ostream& out) {
  const ParsedConfig parsed = load_experiment(o);
  const Experiment e = resolve(parsed.experiment);
  const json config = resolved_config(e, parsed.output_dir);
  set_parallelism(e.spec.threads);
  const Execution exec = e.spec.threads == 1 ? Execution::Serial : Execution::Parallel;

  SplittingConfig run = e.spec.run;
  run.seed = e.spec.master_seed;
  run.keep_final_system = false;
  const ReversibleKernel* kernel = e.kernel ? &*e.kernel : nullptr;
  const std::filesystem::path dir(parsed.output_dir);

  ordered_json doc = provenance(config);
  RunResult result;
  try {
    result = run_splitting(run, *e.model, kernel, {}, exec);
  } catch (const NonTerminationError& err) {
    std::vector<ReplicationRecord> record(1);
    record[0].levels = err.level_history();
    write_file(dir / "levels.dat", levels_dat(record, config));
    throw;
  }
  ordered_json r;
  r["mode"] = mode_name(run);
  r["n_hat"] = result.n_hat;
  r["weight"] = result.weight;
  r["p_hat"] = result.estimates.p_hat;
  r["e_hat"] = result.estimates.e_hat;
  r["c_hat"] = result.estimates.c_defined ? json(result.estimates.c_hat) : json(nullptr);
  r["exceedances"] = result.estimates.exceedances;
  r["extinct"] = result.extinct;
  r["probability"] = e.probability;
  r["levels"] = result.level_history;
  if (!result.selection_proportions.empty()) r["selection_proportions"] = result.selection_proportions;
  ordered_json stages = ordered_json::array();
  for (const auto& st : result.stages) {
    stages.push_back({{"level", st.level},
                      {"survivors", st.survivors},
                      {"proposals", st.explore.proposals},
                      {"accepted", st.explore.accepted},
                      {"moved", st.explore.moved}});
  }
  r["stages"] = stages;
  doc["result"] = r;

  std::vector<ReplicationRecord> record(1);
  record[0].levels = result.level_history;
  write_file(dir / "run.json", doc.dump(2) + "\n");
  write_file(dir / "levels.dat", levels_dat(record, config));
  out << r.dump(2) << "\n";
  return kExitOk;
}

int cmd_replicate(const Options& o, std::ostream& out) {
  const ParsedConfig parsed = load_experiment(o);
  const Experiment e = resolve(parsed.experiment);
  const json config = resolved_config(e, parsed.output_dir);
  const ReplicationResult result = run_replications(e);
  const std::filesystem::path dir(parsed.output_dir);

  const auto checks = replicate_checks(e, result.summary);
  ordered_json doc = provenance(config);
  doc["summary"] = summary_json(result.summary);
  if (o.assert_checks) doc["assertions"] = checks_json(checks);
  write_file(dir / "replications.csv", records_csv(result.records, config));
  write_file(dir / "summary.json", doc.dump(2) + "\n");
  if (e.spec.level_history) write_file(dir / "levels.dat", levels_dat(result.records, config));
  out << doc["summary"].dump(2) << "\n";
  return o.assert_checks ? finish_checks(checks, true, out) : kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const ParsedConfig parsed = load_experiment(o);
  const ComparisonReport report = compare_adaptive_fixed(parsed.experiment);
  ExperimentSpec shown = parsed.experiment;
  shown.run.mode = SplittingMode::Adaptive;
  const Experiment e = resolve(shown);
  json config = resolved_config(e, parsed.output_dir);
  config["run"].erase("mode");
  config["run"]["idealized"] = e.spec.run.idealized;
  config["compare"] = {{"fixed_levels", report.fixed_levels}};
  const std::filesystem::path dir(parsed.output_dir);

  ordered_json doc = provenance(config);
  doc["ratio"] = report.ratio;
  doc["f_statistic"] = report.f_statistic;
  doc["p_value"] = report.p_value;
  doc["decision"] = report.rejected ? "rejected" : "not rejected";
  doc["significance"] = 0.01;
  doc["fixed_levels"] = report.fixed_levels;
  doc["adaptive"] = summary_json(report.adaptive.summary);
  doc["fixed"] = summary_json(report.fixed.summary);

  std::vector<Check> checks;
  checks.push_back({"variance_ratio_test", !report.rejected, "F = " + number(report.f_statistic) +
                                                                 ", p = " + number(report.p_value)});
  checks.push_back({"ratio_band", report.ratio >= 0.7 && report.ratio <= 1.4,
                    "ratio = " + number(report.ratio) + " in [0.7, 1.4]"});
  if (o.assert_checks) doc["assertions"] = checks_json(checks);
  write_file(dir / "compare.json", doc.dump(2) + "\n");
  write_file(dir / "adaptive.csv", records_csv(report.adaptive.records, config));
  write_file(dir / "fixed.csv", records_csv(report.fixed.records, config));
  ordered_json shown_doc;
  for (const char* key : {"ratio", "f_statistic", "p_value", "decision"}) shown_doc[key] = doc[key];
  out << shown_doc.dump(2) << "\n";
  return o.assert_checks ? finish_checks(checks, true, out) : kExitOk;
}

int cmd_variance(const Options& o, std::ostream& out) {
  if (o.config.empty()) throw ConfigError("--config is required");
  ChainConfig cc = parse_chain_config(read_file(o.config));
  if (o.seed) cc.seed = *o.seed;
  if (o.replications) cc.replications = *o.replications;
  cc.threads = resolve_threads(o, cc.threads);
  if (cc.replications > 0 && cc.n_particles == 0) throw ConfigError("'n_particles' is required for replications");
  const std::string dir = o.out.value_or(".");
  json config = to_json(cc);
  config.erase("threads");

  const VarianceReport v = variance_report(cc.chain, cc.f, cc.n_particles, cc.replications, cc.seed, cc.confidence,
                                           cc.threads);
  auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  ordered_json doc = provenance(config);
  ordered_json r;
  r["n"] = v.n;
  r["alpha"] = v.alpha;
  r["r"] = v.r;
  r["probability"] = v.probability;
  r["gamma_f"] = v.gamma_f;
  r["gamma_indicator"] = v.gamma_indicator;
  r["gamma_ratio_estimator"] = v.gamma_ratio;
  r["sigma_sq_rel"] = v.sigma_sq_rel;
  r["incompressible_bound"] = v.incompressible_bound;
  r["sigma_sq_decomposition"] = v.breakdown.decomposition;
  r["sigma_sq_literal_four_term"] = v.breakdown.literal_display;
  r["sigma_sq_idealized_shortcut"] = v.breakdown.idealized_shortcut;
  r["kernel_terms"] = v.breakdown.kernel_terms;
  r["middle_terms"] = v.breakdown.middle_terms;
  r["last_term"] = v.breakdown.last_term;
  r["identity_residuals"] = {{"semigroup", v.identity_semigroup},
                             {"centered", v.identity_centered},
                             {"unnormalized", v.identity_unnormalized}};
  r["n_particles"] = v.n_particles;
  r["replications"] = v.replications;
  r["empirical_nvar"] = opt(v.empirical_nvar);
  r["empirical_nvar_se"] = opt(v.empirical_nvar_se);
  r["ci"] = {v.ci.first, v.ci.second};
  r["ci_coverage"] = opt(v.ci_coverage);
  r["normality_stat"] = opt(v.normality_stat);
  r["normality_p"] = opt(v.normality_p);
  doc["report"] = r;

  std::vector<Check> checks;
  const double worst = std::max({v.identity_semigroup, v.identity_centered, v.identity_unnormalized});
  checks.push_back({"identities", worst <= 1e-12, "max residual " + number(worst)});
  checks.push_back({"incompressible_bound", v.sigma_sq_rel >= v.incompressible_bound - 1e-12,
                    number(v.sigma_sq_rel) + " >= " + number(v.incompressible_bound)});
  if (v.empirical_nvar && v.empirical_nvar_se) {
    const double gap = std::abs(*v.empirical_nvar - v.sigma_sq_rel);
    checks.push_back({"empirical_variance", gap <= 3.0 * *v.empirical_nvar_se,
                      "|" + number(*v.empirical_nvar) + " - " + number(v.sigma_sq_rel) + "| <= 3 x " +
                          number(*v.empirical_nvar_se)});
  }
  if (o.assert_checks) doc["assertions"] = checks_json(checks);
  write_file(std::filesystem::path(dir) / "variance.json", doc.dump(2) + "\n");
  out << r.dump(2) << "\n";
  return o.assert_checks ? finish_checks(checks, true, out) : kExitOk;
}

int cmd_validate_kernel(const Options& o, std::ostream& out) {
  const ParsedConfig parsed = load_experiment(o);
  ExperimentSpec spec = parsed.experiment;
  if (spec.kernel.type.empty()) throw ConfigError("validate-kernel needs a 'kernel' section");
  spec.run.idealized = false;
  const Experiment e = resolve(spec);
  const AnalyticOracle* oracle = e.model->oracle();
  if (oracle == nullptr || !oracle->has_conditional_sampler()) {
    throw UnsupportedError("validate-kernel needs a model with an exact conditional sampler");
  }
  if (!(o.level_probability > 0.0 && o.level_probability <= 1.0)) {
    throw ConfigError("--level-probability must lie in (0,1]");
  }
  const double level = oracle->level_for_probability(o.level_probability);
  const ReversibleKernel& kernel = *e.kernel;
  const StreamFactory streams(e.spec.master_seed);
  const std::size_t d = e.model->dimension();

  // detailed balance on pairs (x ~ eta(.|S >= level), y ~ k(x,.))
  auto rng = streams.stream(0, StreamRole::Misc, 0);
  std::vector<double> x(d), y(d);
  double worst = 0.0;
  for (std::size_t i = 0; i < o.pairs; ++i) {
    oracle->conditional_sample(level, rng, x);
    kernel.proposal().sample(x, rng, y);
    worst = std::max(worst, relative_detailed_balance_residual(kernel, x, y));
  }

  // truncation safety and invariance of eta(.|S >= level)
  const TruncatedKernel truncated(kernel, level);
  auto safety_rng = streams.stream(0, StreamRole::Misc, 1);
  std::size_t violations = 0;
  std::vector<double> next(d);
  for (std::size_t i = 0; i < o.particles; ++i) {
    oracle->conditional_sample(level, safety_rng, x);
    double score = checked_score(*e.model, x);
    for (std::size_t s = 0; s < o.steps; ++s) {
      double next_score;
      const auto outcome = truncated.step(x, score, safety_rng, next, next_score);
      if (outcome == TruncatedOutcome::Moved) {
        x.swap(next);
        score = next_score;
      }
      if (score < level) ++violations;
    }
  }
  auto inv_rng = streams.stream(0, StreamRole::Misc, 2);
  const double ks = invariance_check(truncated, *oracle, o.steps, o.particles, inv_rng);
  const double critical = 1.628 * std::sqrt(2.0 / static_cast<double>(o.particles));  // 1% two-sample KS

  std::vector<Check> checks;
  checks.push_back({"detailed_balance", worst <= 1e-10,
                    "max relative residual " + number(worst) + " over " + std::to_string(o.pairs) + " pairs"});
  checks.push_back({"truncation_safety", violations == 0,
                    std::to_string(violations) + " states below the level after " +
                        std::to_string(o.particles * o.steps) + " steps"});
  checks.push_back({"invariance", ks <= critical, "KS distance " + number(ks) + " <= " + number(critical)});

  json config = resolved_config(e, parsed.output_dir);
  config["validate_kernel"] = {{"pairs", o.pairs},
                               {"steps", o.steps},
                               {"particles", o.particles},
                               {"level_probability", o.level_probability},
                               {"level", level}};
  ordered_json doc = provenance(config);
  doc["checks"] = checks_json(checks);
  write_file(std::filesystem::path(parsed.output_dir) / "kernel.json", doc.dump(2) + "\n");
  return finish_checks(checks, true, out);
}

int cmd_oracle(const Options& o, std::ostream& out) {
  const std::size_t dim = o.dimension > 0 ? o.dimension : (o.model == "gauss_watermark" ? 2 : 1);
  const auto model = make_builtin_model(o.model, dim);
  const AnalyticOracle* oracle = model->oracle();
  if (oracle == nullptr) throw UnsupportedError(o.model + " has no analytic oracle");
  std::vector<double> probabilities = o.probabilities;
  if (probabilities.empty() && o.levels.empty()) probabilities = {1e-3, 1e-4, 1e-5, 1e-6};

  json config = {{"model", {{"name", o.model}, {"dimension", dim}}},
                 {"probabilities", probabilities},
                 {"levels", o.levels}};
  std::string table;
  if (!probabilities.empty()) {
    table += "# probability level\n";
    for (double p : probabilities) table += number(p) + " " + number(oracle->level_for_probability(p)) + "\n";
  }
  if (!o.levels.empty()) {
    if (!probabilities.empty()) table += "\n";
    table += "# level tail_probability density\n";
    for (double l : o.levels) {
      table += number(l) + " " + number(oracle->tail_probability(l)) + " " + number(oracle->score_density(l)) + "\n";
    }
  }
  out << table;
  if (o.out) write_file(std::filesystem::path(*o.out) / "oracle.dat", comment_header(config) + table);
  return kExitOk;
}

void add_common(CLI::App* sub, Options& o, bool with_replications) {
  sub->add_option("--config", o.config, "JSON config file")->required();
  sub->add_option("--seed", o.seed, "master seed override");
  if (with_replications) sub->add_option("--replications", o.replications, "replication count override");
  sub->add_option("--threads", o.threads, "worker threads (falls back to AMS_THREADS)");
  sub->add_option("--out", o.out, "output directory");
  sub->add_flag("--assert", o.assert_checks, "exit 4 when a check fails");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive multilevel splitting toolkit", "ams"};
  app.set_version_flag("--version", AMS_VERSION);
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "one splitting run");
  add_common(run, o, false);
  auto* replicate = app.add_subcommand("replicate", "independent replications with summary statistics");
  add_common(replicate, o, true);
  replicate->add_flag("--timing", o.timing, "record wall-clock times");
  auto* compare = app.add_subcommand("compare", "adaptive versus oracle-placed fixed levels");
  add_common(compare, o, true);
  compare->add_flag("--timing", o.timing, "record wall-clock times");
  auto* variance = app.add_subcommand("variance", "exact asymptotic variance on a finite chain");
  add_common(variance, o, true);
  auto* validate = app.add_subcommand("validate-kernel", "detailed balance, truncation and invariance checks");
  validate->add_option("--config", o.config, "JSON config file")->required();
  validate->add_option("--seed", o.seed, "seed override");
  validate->add_option("--out", o.out, "output directory");
  validate->add_option("--pairs", o.pairs, "state pairs for detailed balance");
  validate->add_option("--steps", o.steps, "truncated steps per particle");
  validate->add_option("--particles", o.particles, "particles for the invariance check");
  validate->add_option("--level-probability", o.level_probability, "truncation level as a tail probability");
  auto* oracle = app.add_subcommand("oracle", "closed-form tail and quantile tables");
  oracle->add_option("--model", o.model, "exp_line or gauss_watermark");
  oracle->add_option("--dimension", o.dimension, "state dimension");
  oracle->add_option("--probabilities", o.probabilities, "tail probabilities")->delimiter(',');
  oracle->add_option("--levels", o.levels, "levels")->delimiter(',');
  oracle->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(o, out);
    if (*replicate) return cmd_replicate(o, out);
    if (*compare) return cmd_compare(o, out);
    if (*variance) return cmd_variance(o, out);
    if (*validate) return cmd_validate_kernel(o, out);
    if (*oracle) return cmd_oracle(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NonTerminationError& e) {
    err << "non-termination: " << e.what() << "\n";
    return kExitNonTermination;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace ams
