#include "summit/config.hpp"

#include <fstream>
#include <set>

#include "summit/error.hpp"
#include "summit/rng.hpp"

namespace summit {

using nlohmann::json;

namespace {

/// Reads known keys from one object and complains about the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) throw ConfigError(where(key) + " must be a non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where(key) + " must be a boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
      }
      dst = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + where(it.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
std::vector<T> read_list(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + " must be a non-empty array");
  try {
    return v.get<std::vector<T>>();
  } catch (const json::exception&) {
    throw ConfigError(where + " has elements of the wrong type");
  }
}

}  // namespace

void RunConfig::finalize() {
  synth.seed = derive_seed(seed, "synth");
  train.seed = derive_seed(seed, "train");
  synth.validate();
  pipeline.model.validate();
  pipeline.loss.validate();
  train.validate();
  if (!(pipeline.summarization.window > 0.0)) throw ConfigError("summarization.window must be positive");
  // A dataset file carries its own horizon, checked when it is summarised.
  if (dataset.empty() && pipeline.summarization.window > synth.observation_window) {
    throw ConfigError("summarization.window exceeds synth.observation_window");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (!(bootstrap.level > 0.0 && bootstrap.level < 1.0)) throw ConfigError("bootstrap.level must lie in (0, 1)");
  if (!(bootstrap.threshold >= 0.0 && bootstrap.threshold <= 1.0)) {
    throw ConfigError("bootstrap.threshold must lie in [0, 1]");
  }
  if (sweep) sweep->validate();
}

std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, "test-split"); }
std::uint64_t RunConfig::bootstrap_seed() const { return derive_seed(seed, "bootstrap"); }

BootstrapOptions RunConfig::bootstrap_options() const {
  BootstrapOptions o;
  o.n_boot = bootstrap.replicates;
  o.level = bootstrap.level;
  o.threshold = bootstrap.threshold;
  o.seed = bootstrap_seed();
  return o;
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  root.read("test_fraction", c.test_fraction);
  root.read("dataset", c.dataset);
  root.read("run_dir", c.run_dir);
  root.read("impute", c.pipeline.impute);
  std::string variant = to_string(c.pipeline.variant);
  root.read("variant", variant);
  c.pipeline.variant = parse_variant(variant);

  if (const json* s = root.child("synth")) {
    Section sec(*s, "synth");
    sec.read("n_samples", c.synth.n_samples);
    sec.read("n_numerical", c.synth.n_numerical);
    sec.read("n_categorical", c.synth.n_categorical);
    sec.read("categories_per_feature", c.synth.categories_per_feature);
    sec.read("missing_rate", c.synth.missing_rate);
    sec.read("observation_window", c.synth.observation_window);
    sec.read("mean_events", c.synth.mean_events);
    sec.read("prevalence", c.synth.prevalence);
    sec.read("label_noise", c.synth.label_noise);
    sec.finish();
  }
  if (const json* s = root.child("summarization")) {
    Section sec(*s, "summarization");
    sec.read("window", c.pipeline.summarization.window);
    std::string agg = "mode";
    sec.read("categorical", agg);
    if (agg == "mode") {
      c.pipeline.summarization.categorical = CategoricalAggregator::Mode;
    } else if (agg == "last") {
      c.pipeline.summarization.categorical = CategoricalAggregator::Last;
    } else {
      throw ConfigError("summarization.categorical must be 'mode' or 'last'");
    }
    sec.finish();
  }
  if (const json* s = root.child("model")) {
    Section sec(*s, "model");
    sec.read("d_model", c.pipeline.model.d_model);
    sec.read("num_head", c.pipeline.model.num_head);
    sec.read("ff_dim", c.pipeline.model.ff_dim);
    sec.read("num_layer", c.pipeline.model.num_layer);
    sec.read("classifier_down_factor", c.pipeline.model.classifier_down_factor);
    sec.finish();
  }
  if (const json* s = root.child("loss")) {
    Section sec(*s, "loss");
    sec.read("alpha", c.pipeline.loss.alpha);
    sec.read("gamma", c.pipeline.loss.gamma);
    sec.finish();
  }
  if (const json* s = root.child("train")) {
    Section sec(*s, "train");
    sec.read("learning_rate", c.train.learning_rate);
    sec.read("batch_size", c.train.batch_size);
    sec.read("max_epochs", c.train.max_epochs);
    sec.read("eval_every", c.train.eval_every);
    sec.read("patience", c.train.patience);
    std::string metric = to_string(c.train.stop_metric);
    sec.read("stop_metric", metric);
    c.train.stop_metric = parse_stop_metric(metric);
    sec.read("validation_fraction", c.train.validation_fraction);
    sec.read("beta1", c.train.beta1);
    sec.read("beta2", c.train.beta2);
    sec.read("epsilon", c.train.epsilon);
    sec.read("threads", c.train.threads);
    sec.finish();
  }
  if (const json* s = root.child("bootstrap")) {
    Section sec(*s, "bootstrap");
    sec.read("replicates", c.bootstrap.replicates);
    sec.read("level", c.bootstrap.level);
    sec.read("threshold", c.bootstrap.threshold);
    sec.finish();
  }
  if (const json* s = root.child("sweep")) {
    Section sec(*s, "sweep");
    SweepGrid g;
    const ModelConfig& m = c.pipeline.model;
    auto list = [&](const char* key, auto& dst, auto fallback) {
      using V = typename std::decay_t<decltype(dst)>::value_type;
      if (const json* v = sec.child(key)) {
        dst = read_list<V>(*v, sec.where(key));
      } else {
        dst = {static_cast<V>(fallback)};
      }
    };
    list("d_model", g.d_model, m.d_model);
    list("num_head", g.num_head, m.num_head);
    list("ff_dim", g.ff_dim, m.ff_dim);
    list("num_layer", g.num_layer, m.num_layer);
    list("classifier_down_factor", g.classifier_down_factor, m.classifier_down_factor);
    list("learning_rate", g.learning_rate, c.train.learning_rate);
    sec.finish();
    c.sweep = g;
  }
  root.finish();
  c.finalize();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": malformed JSON: " + e.what());
  }
  return parse_run_config(j);
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["test_fraction"] = test_fraction;
  j["dataset"] = dataset;
  j["run_dir"] = run_dir;
  j["variant"] = to_string(pipeline.variant);
  j["impute"] = pipeline.impute;
  j["synth"] = {{"n_samples", synth.n_samples},
                {"n_numerical", synth.n_numerical},
                {"n_categorical", synth.n_categorical},
                {"categories_per_feature", synth.categories_per_feature},
                {"missing_rate", synth.missing_rate},
                {"observation_window", synth.observation_window},
                {"mean_events", synth.mean_events},
                {"prevalence", synth.prevalence},
                {"label_noise", synth.label_noise}};
  j["summarization"] = {
      {"window", pipeline.summarization.window},
      {"categorical", pipeline.summarization.categorical == CategoricalAggregator::Mode ? "mode" : "last"}};
  j["model"] = model_config_to_json(pipeline.model);
  j["loss"] = {{"alpha", pipeline.loss.alpha}, {"gamma", pipeline.loss.gamma}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size},
                {"max_epochs", train.max_epochs},
                {"eval_every", train.eval_every},
                {"patience", train.patience},
                {"stop_metric", to_string(train.stop_metric)},
                {"validation_fraction", train.validation_fraction},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"epsilon", train.epsilon},
                {"threads", train.threads}};
  j["bootstrap"] = {{"replicates", bootstrap.replicates}, {"level", bootstrap.level}, {"threshold", bootstrap.threshold}};
  if (sweep) {
    j["sweep"] = {{"d_model", sweep->d_model},
                  {"num_head", sweep->num_head},
                  {"ff_dim", sweep->ff_dim},
                  {"num_layer", sweep->num_layer},
                  {"classifier_down_factor", sweep->classifier_down_factor},
                  {"learning_rate", sweep->learning_rate}};
  }
  return j;
}

}  // namespace summit
