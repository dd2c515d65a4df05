#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "aad/config.hpp"
#include "aad/harness.hpp"

using namespace aad;

namespace {

RunConfig small(const std::string& arm, const std::string& dataset, Index budget) {
  RunConfig c;
  c.name = "unit";
  c.arm = arm;
  c.dataset = dataset;
  c.n = 500;
  c.budget = budget;
  c.trees = 40;
  c.subsample = 128;
  c.window = 256;
  c.stream_windows = 4;
  c.queries_per_window = 5;
  return c;
}

HistoryRecord rec(Index id) { return {0, id, Label::anomaly, 0, 0}; }

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("json round trip and strict keys") {
    RunConfig c = small("bal", "cluster", 20);
    c.strategy = Strategy::diverse;
    c.batch = 3;
    const auto j = c.to_json();
    CHECK(j.at("mode") == "batch");
    CHECK(RunConfig::from_json(j).to_json() == j);
    auto bad = j;
    bad["budgett"] = 3;
    CHECK_THROWS_AS(RunConfig::from_json(bad), UsageError);
    auto wrong_mode = j;
    wrong_mode["mode"] = "stream";
    CHECK_THROWS_AS(RunConfig::from_json(wrong_mode), UsageError);
  }

  TEST_CASE("mode follows the arm") {
    CHECK(small("sal-kl", "stream", 1).mode() == Mode::stream);
    CHECK(small("glad", "benchmark", 1).mode() == Mode::glad);
    CHECK(small("loda-global", "benchmark", 1).mode() == Mode::glad);
    CHECK(small("bal-noprior-rand", "toy", 1).mode() == Mode::batch);
  }

  TEST_CASE("validation") {
    CHECK_NOTHROW(small("bal", "toy", 10).validate());
    CHECK_THROWS_AS(small("best", "toy", 10).validate(), UsageError);
    CHECK_THROWS_AS(small("sal-kl", "toy", 10).validate(), UsageError);
    auto c = small("bal", "toy", 10);
    c.batch = 5;
    c.candidates = 3;
    CHECK_THROWS_AS(c.validate(), UsageError);
  }
}

TEST_SUITE("harness") {
  TEST_CASE("unsupervised arm queries the uniform-weight ranking") {
    const RunConfig c = small("unsupervised", "cluster", 50);
    const Dataset ds = make_dataset(c, 4);
    const auto m = build_forest(ds.features(), {c.trees, c.subsample, c.max_depth}, derive_seed(4, 1));
    const auto w = uniform_weights(m.leaf_count());
    std::vector<double> s(ds.size());
    for (Index i = 0; i < ds.size(); ++i)
      s[i] = score(w, normalize_scores(transform_one(m, ds.features().row(static_cast<Eigen::Index>(i)).transpose())));
    std::vector<Index> order(ds.size());
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return s[a] > s[b]; });
    const auto r = run_seed(c, 4);
    REQUIRE(r.history.size() == 50);
    for (Index i = 0; i < 50; ++i) CHECK(r.history[i].queried_id == order[i]);
  }

  TEST_CASE("every arm spends exactly its budget") {
    for (const auto& arm : known_arms()) {
      const bool stream = arm.rfind("sal-", 0) == 0;
      const bool glad = arm == "glad" || arm.rfind("loda", 0) == 0;
      RunConfig c = small(arm, stream ? "stream" : glad ? "benchmark" : "cluster", 12);
      if (glad) c.n = 300;
      const auto r = run_seed(c, 1);
      CAPTURE(arm);
      CHECK(r.history.size() == 12);
      CHECK(r.curve.size() == 12);
      for (Index i = 0; i < r.history.size(); ++i) CHECK(r.history[i].iter == i + 1);
      CHECK(std::is_sorted(r.curve.begin(), r.curve.end()));
    }
  }

  TEST_CASE("history lines") {
    const std::vector<HistoryRecord> h{{1, 7, Label::anomaly, 1, 0xabcULL}, {2, 3, Label::nominal, 1, 0x1ULL}};
    const auto text = history_jsonl(h);
    const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
    CHECK(first.at("iter") == 1);
    CHECK(first.at("queried_id") == 7);
    CHECK(first.at("label") == 1);
    CHECK(first.at("num_anomalies_so_far") == 1);
    CHECK(first.at("score_hash") == "0x0000000000000abc");
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  }

  TEST_CASE("persisted runs reload") {
    const auto root = std::filesystem::temp_directory_path() / "aad_unit_runs";
    std::filesystem::remove_all(root);
    RunConfig c = small("bal", "toy", 10);
    c.seeds = {0, 1};
    const auto r = run(c, root, 2);
    const auto back = load_run(root / "unit" / "bal");
    REQUIRE(back.seeds.size() == 2);
    CHECK(back.seeds[1].curve == r.seeds[1].curve);
    CHECK(std::filesystem::exists(root / "unit" / "bal" / "0" / "history.jsonl"));
    CHECK(std::filesystem::exists(root / "unit" / "bal" / "0" / "rules.txt"));
  }

  TEST_CASE("angles to the uniform direction") {
    SparseScoreVector z(4);
    for (int i = 0; i < 4; ++i) z.insert(i) = 2.0;
    CHECK(angle_to_uniform(z, 4) == doctest::Approx(0.0));
    SparseScoreVector o(2);
    o.insert(0) = 1.0;
    o.insert(1) = -1.0;
    CHECK(angle_to_uniform(o, 2) == doctest::Approx(90.0));
  }

  TEST_CASE("class diversity series") {
    Matrix x = Matrix::Zero(6, 1);
    std::vector<std::optional<Label>> y(6, Label::anomaly);
    std::vector<std::optional<std::string>> tags{"a", "a", "a", "b", "c", "a"};
    const Dataset ds(x, y, tags);
    const GroundTruth t(ds);
    const auto same = class_diversity_series({rec(0), rec(1), rec(2), rec(0), rec(1), rec(2)}, t, 3);
    CHECK(same.per_batch == std::vector<Index>{1, 1});
    CHECK(same.cumulative == std::vector<double>{1.0, 1.0});
    const auto mixed = class_diversity_series({rec(0), rec(3), rec(4)}, t, 3);
    CHECK(mixed.per_batch == std::vector<Index>{3});
    CHECK(diversity_difference(mixed, same) == std::vector<double>{2.0});
  }

  TEST_CASE("confidence intervals and curves") {
    CHECK(mean_ci({4.0}).half_width == 0.0);
    CHECK(mean_ci({4.0}).mean == 4.0);
    const auto ci = mean_ci({1.0, 2.0, 3.0});
    CHECK(ci.mean == 2.0);
    CHECK(ci.half_width == doctest::Approx(4.303 / std::sqrt(3.0)));

    RunResult r;
    SeedResult s;
    s.curve = {0, 1, 1, 2};
    s.total_anomalies = 4;
    r.seeds = {s};
    auto one = mean_curve(r);
    REQUIRE(one.size() == 4);
    CHECK(one[3].mean_pct == 50.0);
    CHECK(one[3].ci_half == 0.0);
    r.seeds = {s, s, s};
    const auto three = mean_curve(r);
    for (Index i = 0; i < 4; ++i) {
      CHECK(three[i].mean_pct == one[i].mean_pct);
      CHECK(three[i].ci_half == 0.0);
    }
  }

  TEST_CASE("curve files") {
    const auto dir = std::filesystem::temp_directory_path() / "aad_unit_curves";
    RunResult r;
    r.config = small("bal", "toy", 2);
    SeedResult s;
    s.curve = {1, 2};
    s.total_anomalies = 2;
    r.seeds = {s};
    emit_curves({r}, dir);
    std::ifstream in(dir / "bal.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "query,mean_pct,ci_half");
    CHECK(row == "1,50,0");
  }
}
