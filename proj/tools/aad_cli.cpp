#include <iostream>

#include <CLI11.hpp>

#include "aad/harness.hpp"
#include "aad/service.hpp"

// After Eigen: glibc's resolver header defines a `_res` macro.
#include <httplib.h>

namespace {

void add_config_options(CLI::App& app, aad::RunConfig& cfg, std::string& strategy, aad::Index& seed_count) {
  app.add_option("--name", cfg.name, "run name (results directory)")->capture_default_str();
  app.add_option("--arm", cfg.arm, "experiment arm")->capture_default_str();
  app.add_option("--dataset", cfg.dataset, "cluster | toy | benchmark | stream | csv")->capture_default_str();
  app.add_option("--csv", cfg.csv_path, "csv file for dataset=csv");
  app.add_option("--label-column", cfg.label_column)->capture_default_str();
  app.add_option("--class-column", cfg.class_column);
  app.add_option("-n,--n", cfg.n, "synthetic instance count")->capture_default_str();
  app.add_option("-d,--d", cfg.d, "synthetic dimension")->capture_default_str();
  app.add_option("--anomaly-fraction", cfg.anomaly_fraction)->capture_default_str();
  app.add_option("--anomaly-classes", cfg.anomaly_classes)->capture_default_str();
  app.add_option("--stream-windows", cfg.stream_windows)->capture_default_str();
  app.add_option("--shift-window", cfg.shift_window, "first shifted window (0: stationary)")->capture_default_str();
  app.add_option("--shift", cfg.shift)->capture_default_str();
  app.add_option("-T,--trees", cfg.trees)->capture_default_str();
  app.add_option("--subsample", cfg.subsample)->capture_default_str();
  app.add_option("--max-depth", cfg.max_depth, "0: ceil(log2(subsample))")->capture_default_str();
  app.add_option("--strategy", strategy, "top | diverse | random-top")->capture_default_str();
  app.add_option("-B,--budget", cfg.budget)->capture_default_str();
  app.add_option("-b,--batch", cfg.batch, "queries per batch")->capture_default_str();
  app.add_option("--candidates", cfg.candidates)->capture_default_str();
  app.add_option("--delta", cfg.delta)->capture_default_str();
  app.add_option("--tau", cfg.tau)->capture_default_str();
  app.add_option("--normalize-scores", cfg.normalize_scores)->capture_default_str();
  app.add_option("-K,--window", cfg.window)->capture_default_str();
  app.add_option("-Q,--queries-per-window", cfg.queries_per_window)->capture_default_str();
  app.add_option("--alpha", cfg.alpha)->capture_default_str();
  app.add_option("--kl-reps", cfg.kl_reps)->capture_default_str();
  app.add_option("--replace-fraction", cfg.replace_fraction)->capture_default_str();
  app.add_option("-M,--members", cfg.members, "LODA projections")->capture_default_str();
  app.add_option("--bias", cfg.bias)->capture_default_str();
  app.add_option("--lambda", cfg.lambda)->capture_default_str();
  app.add_option("--hidden", cfg.hidden, "0: max(50, 3M)")->capture_default_str();
  app.add_option("--upsample", cfg.upsample)->capture_default_str();
  app.add_option("--precision-threshold", cfg.precision_threshold)->capture_default_str();
  app.add_option("--pseudo-nominals", cfg.pseudo_nominals)->capture_default_str();
  app.add_option("--complexity-weight", cfg.complexity_weight)->capture_default_str();
  app.add_option("--seeds", cfg.seeds, "explicit seed list");
  app.add_option("--seed-count", seed_count, "use seeds 0..N-1");
}

void finish_config(aad::RunConfig& cfg, const std::string& strategy, aad::Index seed_count) {
  cfg.strategy = aad::parse_strategy(strategy);
  if (seed_count > 0) {
    cfg.seeds.clear();
    for (aad::Index s = 0; s < seed_count; ++s) cfg.seeds.push_back(s);
  }
  cfg.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active anomaly discovery with tree ensembles and GLAD"};
  app.set_config("--config", "", "INI or TOML file with option values");
  app.require_subcommand(1);

  aad::RunConfig cfg;
  std::string strategy = "top";
  aad::Index seed_count = 0;

  auto* run = app.add_subcommand("run", "run one arm over its seeds and persist results");
  add_config_options(*run, cfg, strategy, seed_count);
  std::string out = "runs";
  unsigned threads = 0;
  run->add_option("--out", out, "results root")->capture_default_str();
  run->add_option("--threads", threads, "parallel cells (0: all cores)");

  auto* angles = app.add_subcommand("angles", "angle histograms between score vectors and w_unif");
  add_config_options(*angles, cfg, strategy, seed_count);
  aad::Index bins = 36;
  angles->add_option("--bins", bins)->capture_default_str();

  auto* curves = app.add_subcommand("curves", "mean discovery curves with 95% intervals as csv");
  std::string runs_dir, curves_out = "curves";
  curves->add_option("--runs", runs_dir, "runs/<name> directory")->required();
  curves->add_option("--out", curves_out)->capture_default_str();

  auto* serve = app.add_subcommand("serve", "serve the session API");
  std::string host = "127.0.0.1", state_dir;
  int port = 8080;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--state-dir", state_dir, "event logs for session replay");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      finish_config(cfg, strategy, seed_count);
      const auto result = aad::run(cfg, std::filesystem::path(out), threads);
      for (const auto& s : result.seeds)
        std::cout << cfg.arm << " seed " << s.seed << ": " << s.anomalies_found() << "/" << s.total_anomalies
                  << " anomalies in " << s.history.size() << " queries (" << s.wall_seconds << " s)\n";
    } else if (*angles) {
      finish_config(cfg, strategy, seed_count);
      nlohmann::json out_json = nlohmann::json::array();
      for (auto seed : cfg.seeds) {
        const auto data = aad::make_dataset(cfg, seed);
        aad::ForestParams fp;
        fp.trees = cfg.trees;
        fp.subsample = cfg.subsample;
        fp.max_depth = cfg.max_depth;
        const auto model = aad::build_forest(data.features(), fp, aad::derive_seed(seed, 1));
        auto h = aad::angle_histogram(model, data, bins).to_json();
        h["seed"] = seed;
        out_json.push_back(h);
      }
      std::cout << out_json.dump(2) << "\n";
    } else if (*curves) {
      std::vector<aad::RunResult> results;
      for (const auto& e : std::filesystem::directory_iterator(runs_dir))
        if (e.is_directory()) results.push_back(aad::load_run(e.path()));
      aad::emit_curves(results, curves_out);
      std::cout << "wrote " << results.size() << " curve file(s) to " << curves_out << "\n";
    } else if (*serve) {
      aad::SessionManager sessions(state_dir.empty() ? std::nullopt
                                                     : std::optional<std::filesystem::path>(state_dir));
      httplib::Server server;
      aad::mount_routes(server, sessions);
      std::cout << "listening on " << host << ":" << port << "\n";
      if (!server.listen(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
      }
    }
  } catch (const aad::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
