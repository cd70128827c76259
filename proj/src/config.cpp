#include "ams/config.hpp"

#include <algorithm>
#include <initializer_list>
#include <limits>
#include <string_view>
#include <vector>

#include "ams/error.hpp"

namespace ams {

using nlohmann::json;

namespace {

// Typed access to one JSON object with unknown-key detection.
class Section {
 public:
  Section(const json& value, std::string path) : value_(value), path_(std::move(path)) {
    if (!value_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (const auto& item : value_.items()) {
      if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
        throw ConfigError("config: unknown key '" + key_path(item.key()) + "'");
      }
    }
  }

  bool has(const char* key) const { return value_.contains(key) && !value_.at(key).is_null(); }
  const json& at(const char* key) const { return value_.at(key); }
  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  double number(const char* key) const {
    const json& v = value_.at(key);
    if (!v.is_number()) type_error(key, "a number");
    return v.get<double>();
  }
  std::uint64_t unsigned_integer(const char* key) const {
    const json& v = value_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      type_error(key, "a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::string string(const char* key) const {
    const json& v = value_.at(key);
    if (!v.is_string()) type_error(key, "a string");
    return v.get<std::string>();
  }
  bool boolean(const char* key) const {
    const json& v = value_.at(key);
    if (!v.is_boolean()) type_error(key, "a boolean");
    return v.get<bool>();
  }
  std::vector<double> numbers(const char* key) const { return number_array(value_.at(key), key_path(key)); }

  [[noreturn]] void type_error(std::string_view key, std::string_view expected) const {
    throw ConfigError("config: key '" + key_path(key) + "' must be " + std::string(expected));
  }

  static std::vector<double> number_array(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError("config: key '" + path + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError("config: key '" + path + "' must be an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

 private:
  const json& value_;
  std::string path_;
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_matrix(const json& v, const std::string& path, std::size_t m) {
  if (!v.is_array() || v.size() != m) {
    throw ConfigError("config: key '" + path + "' must be an " + std::to_string(m) + "x" + std::to_string(m) +
                      " array of arrays");
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = Section::number_array(v[i], path);
    if (row.size() != m) throw ConfigError("config: key '" + path + "' row " + std::to_string(i) + " has wrong length");
    for (std::size_t j = 0; j < m; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return out;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
}

void parse_run(const Section& run, ExperimentSpec& spec, bool root_has_kernel_steps) {
  run.allow({"mode", "idealized", "n_particles", "alpha", "alpha_schedule", "target_level", "target_probability",
             "levels", "max_iterations", "inner_steps"});
  SplittingConfig& c = spec.run;
  if (run.has("mode")) {
    const std::string mode = run.string("mode");
    if (mode == "adaptive") {
      c.mode = SplittingMode::Adaptive;
    } else if (mode == "fixed") {
      c.mode = SplittingMode::Fixed;
    } else if (mode == "idealized_adaptive") {
      c.mode = SplittingMode::Adaptive;
      c.idealized = true;
    } else if (mode == "idealized_fixed") {
      c.mode = SplittingMode::Fixed;
      c.idealized = true;
    } else {
      throw ConfigError("config: key 'run.mode' must be one of adaptive, fixed, idealized_adaptive, idealized_fixed");
    }
  }
  if (run.has("idealized")) c.idealized = run.boolean("idealized") || c.idealized;
  if (run.has("n_particles")) c.n_particles = run.unsigned_integer("n_particles");
  if (run.has("alpha")) c.alpha = run.number("alpha");
  if (run.has("alpha_schedule")) c.alpha_schedule = run.numbers("alpha_schedule");
  if (run.has("target_level") && run.has("target_probability")) {
    throw ConfigError("config: give only one of 'run.target_level' and 'run.target_probability'");
  }
  if (run.has("target_level")) {
    c.target_level = run.number("target_level");
  } else if (run.has("target_probability")) {
    spec.target_probability = run.number("target_probability");
  } else {
    throw ConfigError("config: 'run.target_level' or 'run.target_probability' is required");
  }
  if (run.has("levels")) {
    const json& levels = run.at("levels");
    if (levels.is_string()) {
      if (levels.get<std::string>() != "optimal") run.type_error("levels", "an array of numbers or \"optimal\"");
      spec.optimal_levels = true;
    } else {
      c.levels = run.numbers("levels");
    }
  } else if (c.mode == SplittingMode::Fixed) {
    spec.optimal_levels = true;
  }
  if (run.has("max_iterations")) c.max_iterations = run.unsigned_integer("max_iterations");
  if (run.has("inner_steps")) {
    if (root_has_kernel_steps) throw ConfigError("config: give inner_steps in 'kernel' or 'run', not both");
    c.inner_steps = run.unsigned_integer("inner_steps");
    if (c.inner_steps < 1) throw ConfigError("config: key 'run.inner_steps' must be >= 1");
  }
}

}  // namespace

std::string mode_name(const SplittingConfig& run) {
  const char* base = run.mode == SplittingMode::Adaptive ? "adaptive" : "fixed";
  return run.idealized ? std::string("idealized_") + base : std::string(base);
}

ParsedConfig parse_config(const std::string& text) { return parse_config(parse_text(text)); }

ParsedConfig parse_config(const json& document) {
  const Section root(document, "");
  root.allow({"model", "kernel", "run", "experiment", "output"});
  ParsedConfig out;
  ExperimentSpec& spec = out.experiment;
  spec.master_seed = 1;

  if (!root.has("model")) throw ConfigError("config: 'model' is required");
  if (root.at("model").is_string()) {
    spec.model.name = root.string("model");
  } else {
    const Section model(root.at("model"), "model");
    model.allow({"name", "dimension"});
    if (!model.has("name")) throw ConfigError("config: 'model.name' is required");
    spec.model.name = model.string("name");
    if (model.has("dimension")) spec.model.dimension = model.unsigned_integer("dimension");
  }
  if (spec.model.name == "gauss_watermark" && !(root.at("model").is_object() && root.at("model").contains("dimension"))) {
    spec.model.dimension = 2;
  }

  if (root.has("kernel")) {
    const Section kernel(root.at("kernel"), "kernel");
    kernel.allow({"type", "sigma", "step", "inner_steps"});
    if (!kernel.has("type")) throw ConfigError("config: 'kernel.type' is required");
    spec.kernel.type = kernel.string("type");
    if (spec.kernel.type == "gauss_ar1") {
      if (kernel.has("step")) throw ConfigError("config: key 'kernel.step' does not apply to gauss_ar1");
      if (!kernel.has("sigma")) throw ConfigError("config: 'kernel.sigma' is required for gauss_ar1");
      spec.kernel.scale = kernel.number("sigma");
    } else if (spec.kernel.type == "rw_metropolis") {
      if (kernel.has("sigma")) throw ConfigError("config: key 'kernel.sigma' does not apply to rw_metropolis");
      spec.kernel.scale = kernel.has("step") ? kernel.number("step") : 1.0;
    } else {
      throw ConfigError("config: key 'kernel.type' must be gauss_ar1 or rw_metropolis");
    }
    if (kernel.has("inner_steps")) {
      spec.run.inner_steps = kernel.unsigned_integer("inner_steps");
      if (spec.run.inner_steps < 1) throw ConfigError("config: key 'kernel.inner_steps' must be >= 1");
    }
  }

  if (!root.has("run")) throw ConfigError("config: 'run' is required");
  const bool kernel_steps = root.has("kernel") && root.at("kernel").contains("inner_steps");
  parse_run(Section(root.at("run"), "run"), spec, kernel_steps);

  if (root.has("experiment")) {
    const Section e(root.at("experiment"), "experiment");
    e.allow({"replications", "seed", "threads", "reference_sigma_sq", "confidence", "level_history"});
    if (e.has("replications")) spec.replications = e.unsigned_integer("replications");
    if (e.has("seed")) spec.master_seed = e.unsigned_integer("seed");
    if (e.has("threads")) spec.threads = static_cast<int>(e.unsigned_integer("threads"));
    if (e.has("reference_sigma_sq")) spec.reference_sigma_sq = e.number("reference_sigma_sq");
    if (e.has("confidence")) spec.confidence = e.number("confidence");
    if (e.has("level_history")) spec.level_history = e.boolean("level_history");
  }
  if (root.has("output")) {
    const Section o(root.at("output"), "output");
    o.allow({"dir", "timing"});
    if (o.has("dir")) out.output_dir = o.string("dir");
    if (o.has("timing")) spec.timing = o.boolean("timing");
  }

  resolve(spec);  // semantic checks
  return out;
}

ChainConfig parse_chain_config(const std::string& text) {
  const json document = parse_text(text);
  const Section root(document, "");
  root.allow({"states", "scores", "eta0", "kernel", "levels", "target_level", "exact_alpha", "f", "n_particles",
              "replications", "seed", "threads", "confidence"});
  for (const char* key : {"scores", "eta0", "kernel", "levels", "target_level"}) {
    if (!root.has(key)) throw ConfigError(std::string("config: '") + key + "' is required");
  }
  ChainConfig out;
  const auto scores = root.numbers("scores");
  const std::size_t m = scores.size();
  if (root.has("states") && root.unsigned_integer("states") != m) {
    throw ConfigError("config: 'states' differs from the length of 'scores'");
  }
  const auto eta0 = root.numbers("eta0");
  if (eta0.size() != m) throw ConfigError("config: 'eta0' must have one entry per state");
  const auto levels = root.numbers("levels");
  const double target = root.number("target_level");

  std::optional<Eigen::MatrixXd> kernel;
  std::optional<Eigen::MatrixXd> proposal;
  if (root.at("kernel").is_array()) {
    kernel = to_matrix(root.at("kernel"), "kernel", m);
  } else {
    const Section k(root.at("kernel"), "kernel");
    k.allow({"type", "proposal"});
    if (!k.has("type") || k.string("type") != "metropolis") {
      throw ConfigError("config: key 'kernel.type' must be \"metropolis\"");
    }
    if (!k.has("proposal")) throw ConfigError("config: 'kernel.proposal' is required");
    proposal = to_matrix(k.at("proposal"), "kernel.proposal", m);
  }

  if (root.has("exact_alpha")) {
    const Section ea(root.at("exact_alpha"), "exact_alpha");
    ea.allow({"alpha", "r"});
    if (!ea.has("alpha")) throw ConfigError("config: 'exact_alpha.alpha' is required");
    if (!proposal) throw ConfigError("config: 'exact_alpha' needs a metropolis kernel with a proposal");
    std::optional<double> r;
    if (ea.has("r")) r = ea.number("r");
    out.chain = make_exact_alpha_chain(scores, to_vector(eta0), *proposal, levels, target, ea.number("alpha"), r);
  } else {
    out.chain.scores = scores;
    out.chain.eta0 = to_vector(eta0);
    out.chain.kernel = kernel ? *kernel : metropolis_kernel(out.chain.eta0, *proposal);
    out.chain.levels = levels;
    out.chain.target_level = target;
    validate(out.chain);
  }
  if (root.has("f")) {
    const auto f = root.numbers("f");
    if (f.size() != m) throw ConfigError("config: 'f' must have one entry per state");
    out.f = to_vector(f);
  }
  if (root.has("n_particles")) out.n_particles = root.unsigned_integer("n_particles");
  if (root.has("replications")) out.replications = root.unsigned_integer("replications");
  if (root.has("seed")) out.seed = root.unsigned_integer("seed");
  if (root.has("threads")) out.threads = static_cast<int>(root.unsigned_integer("threads"));
  if (root.has("confidence")) out.confidence = root.number("confidence");
  if (out.replications > 0 && out.n_particles == 0) {
    throw ConfigError("config: 'n_particles' is required when 'replications' is set");
  }
  return out;
}

json to_json(const ExperimentSpec& spec, const std::string& output_dir) {
  const SplittingConfig& c = spec.run;
  json run = {{"mode", mode_name(c)},
              {"n_particles", c.n_particles},
              {"alpha", c.alpha},
              {"target_level", c.target_level},
              {"inner_steps", c.inner_steps},
              {"max_iterations", c.max_iterations}};
  if (!c.alpha_schedule.empty()) run["alpha_schedule"] = c.alpha_schedule;
  if (c.mode == SplittingMode::Fixed) run["levels"] = c.levels;
  json doc = {{"model", {{"name", spec.model.name}, {"dimension", spec.model.dimension}}}, {"run", run}};
  if (!spec.kernel.type.empty()) {
    doc["kernel"] = {{"type", spec.kernel.type}, {spec.kernel.type == "gauss_ar1" ? "sigma" : "step", spec.kernel.scale}};
  }
  json experiment = {{"replications", spec.replications},
                     {"seed", spec.master_seed},
                     {"confidence", spec.confidence},
                     {"level_history", spec.level_history}};
  if (spec.reference_sigma_sq) experiment["reference_sigma_sq"] = *spec.reference_sigma_sq;
  doc["experiment"] = experiment;
  doc["output"] = {{"dir", output_dir}, {"timing", spec.timing}};
  return doc;
}

json to_json(const ChainConfig& config) {
  const FiniteChainSpec& c = config.chain;
  json kernel = json::array();
  for (Eigen::Index i = 0; i < c.kernel.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < c.kernel.cols(); ++j) row.push_back(c.kernel(i, j));
    kernel.push_back(row);
  }
  json doc = {{"states", c.states()},
              {"scores", c.scores},
              {"eta0", std::vector<double>(c.eta0.data(), c.eta0.data() + c.eta0.size())},
              {"kernel", kernel},
              {"levels", c.levels},
              {"target_level", c.target_level},
              {"n_particles", config.n_particles},
              {"replications", config.replications},
              {"seed", config.seed},
              {"confidence", config.confidence}};
  if (config.f) doc["f"] = std::vector<double>(config.f->data(), config.f->data() + config.f->size());
  return doc;
}

}  // namespace ams
