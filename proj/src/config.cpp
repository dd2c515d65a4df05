#include "aad/config.hpp"

#include <algorithm>
#include <set>

#include "aad/synthetic.hpp"

namespace aad {

namespace {

// Single list of serialized fields; strategy is handled separately.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("name", c.name);
  f("arm", c.arm);
  f("dataset", c.dataset);
  f("csv_path", c.csv_path);
  f("label_column", c.label_column);
  f("class_column", c.class_column);
  f("n", c.n);
  f("d", c.d);
  f("anomaly_fraction", c.anomaly_fraction);
  f("anomaly_classes", c.anomaly_classes);
  f("stream_windows", c.stream_windows);
  f("shift_window", c.shift_window);
  f("shift", c.shift);
  f("trees", c.trees);
  f("subsample", c.subsample);
  f("max_depth", c.max_depth);
  f("budget", c.budget);
  f("batch", c.batch);
  f("candidates", c.candidates);
  f("delta", c.delta);
  f("tau", c.tau);
  f("normalize_scores", c.normalize_scores);
  f("window", c.window);
  f("queries_per_window", c.queries_per_window);
  f("alpha", c.alpha);
  f("kl_reps", c.kl_reps);
  f("replace_fraction", c.replace_fraction);
  f("members", c.members);
  f("bias", c.bias);
  f("lambda", c.lambda);
  f("hidden", c.hidden);
  f("upsample", c.upsample);
  f("precision_threshold", c.precision_threshold);
  f("pseudo_nominals", c.pseudo_nominals);
  f("complexity_weight", c.complexity_weight);
  f("seeds", c.seeds);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::batch:
      return "batch";
    case Mode::stream:
      return "stream";
    case Mode::glad:
      return "glad";
  }
  return "batch";
}

const std::vector<std::string>& known_arms() {
  static const std::vector<std::string> arms = {"bal",    "bal-noprior-unif", "bal-noprior-rand", "unsupervised",
                                                "sal-kl", "sal-20pct",        "sal-noreplace",    "glad",
                                                "loda",   "loda-global"};
  return arms;
}

Mode RunConfig::mode() const {
  if (arm.rfind("sal-", 0) == 0) return Mode::stream;
  if (arm == "glad" || arm == "loda" || arm == "loda-global") return Mode::glad;
  return Mode::batch;
}

void RunConfig::validate() const {
  const auto& arms = known_arms();
  require(std::find(arms.begin(), arms.end(), arm) != arms.end(), "unknown arm '" + arm + "'");
  static const std::set<std::string> datasets = {"cluster", "toy", "benchmark", "stream", "csv"};
  require(datasets.count(dataset) > 0, "unknown dataset '" + dataset + "'");
  require(dataset != "csv" || !csv_path.empty(), "dataset csv needs csv_path");
  require(!seeds.empty(), "seeds must be nonempty");
  require(n > 0 && d > 0, "n and d must be positive");
  require(anomaly_fraction >= 0.0 && anomaly_fraction < 1.0, "anomaly_fraction must lie in [0,1)");
  require(trees > 0 && subsample > 1, "trees must be positive and subsample at least 2");
  require(batch > 0, "batch must be positive");
  require(candidates >= batch, "candidates must be at least batch");
  require(delta > 0, "delta must be positive");
  require(tau > 0.0 && tau < 1.0, "tau must lie in (0,1)");
  require(window > 1 && queries_per_window > 0, "window must exceed 1 and queries_per_window be positive");
  require(alpha > 0.0 && alpha < 0.5, "alpha must lie in (0,0.5)");
  require(kl_reps > 0, "kl_reps must be positive");
  require(replace_fraction > 0.0 && replace_fraction <= 1.0, "replace_fraction must lie in (0,1]");
  require(members > 0, "members must be positive");
  require(bias > 0.0 && bias < 1.0, "bias must lie in (0,1)");
  require(lambda >= 0.0, "lambda must be nonnegative");
  require(upsample > 0, "upsample must be positive");
  require(precision_threshold >= 0.0 && precision_threshold <= 1.0, "precision_threshold must lie in [0,1]");
  require(complexity_weight >= 0.0, "complexity_weight must be nonnegative");
  require(mode() != Mode::stream || dataset == "stream" || dataset == "csv",
          "stream arms need the stream dataset or a csv in arrival order");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  visit_fields(*this, [&](const char* key, const auto& v) { j[key] = v; });
  j["strategy"] = to_string(strategy);
  j["mode"] = to_string(mode());
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  RunConfig c;
  std::set<std::string> seen;
  try {
    visit_fields(c, [&](const char* key, auto& v) {
      seen.insert(key);
      if (j.contains(key)) j.at(key).get_to(v);
    });
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& [key, _] : j.items()) {
    if (key == "strategy") continue;
    if (key == "mode") {
      if (j.at("mode") != to_string(c.mode()))
        throw UsageError("mode '" + j.at("mode").dump() + "' does not match arm '" + c.arm + "'");
      continue;
    }
    if (!seen.count(key)) throw UsageError("unknown config key '" + key + "'");
  }
  return c;
}

Dataset make_dataset(const RunConfig& cfg, std::uint64_t seed) {
  const std::uint64_t data_seed = derive_seed(seed, 0xda7a);
  if (cfg.dataset == "csv") {
    CsvOptions opts;
    opts.label_column = cfg.label_column;
    if (!cfg.class_column.empty()) opts.class_column = cfg.class_column;
    return load_csv(cfg.csv_path, opts);
  }
  if (cfg.dataset == "cluster") return make_cluster_dataset({cfg.n, cfg.d, cfg.anomaly_fraction}, data_seed);
  if (cfg.dataset == "toy") return make_toy_dataset(data_seed);
  if (cfg.dataset == "stream") {
    StreamSpec spec;
    spec.windows = cfg.stream_windows;
    spec.window = cfg.window;
    spec.d = cfg.d;
    spec.anomaly_fraction = cfg.anomaly_fraction;
    spec.shift_window = cfg.shift_window;
    spec.shift = cfg.shift;
    return make_drift_stream(spec, data_seed);
  }
  if (cfg.dataset == "benchmark")
    return make_benchmark_dataset({cfg.n, cfg.d, cfg.anomaly_classes, cfg.anomaly_fraction}, data_seed);
  throw UsageError("unknown dataset '" + cfg.dataset + "'");
}

}  // namespace aad
