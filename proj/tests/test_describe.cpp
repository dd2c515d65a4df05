#include <doctest.h>

#include <algorithm>
#include <limits>
#include <random>

#include "aad/describe.hpp"
#include "aad/synthetic.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace aad;

namespace {

Vector pt(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

Box unit_box() { return Box{Vector::Zero(2), Vector::Ones(2)}; }

CoverProblem random_problem(std::mt19937_64& rng, Index k, Index p) {
  std::bernoulli_distribution coin(0.4);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  CoverProblem pr;
  pr.cost = Vector(static_cast<Eigen::Index>(k));
  for (Index c = 0; c < k; ++c) {
    pr.cost[static_cast<Eigen::Index>(c)] = u(rng);
    pr.rule_length.push_back(1);
    pr.leaf.push_back(c);
  }
  for (Index i = 0; i < p; ++i) {
    std::vector<Index> row;
    for (Index c = 0; c < k; ++c)
      if (coin(rng)) row.push_back(c);
    if (row.empty()) row.push_back(std::uniform_int_distribution<Index>(0, k - 1)(rng));
    pr.covering.push_back(row);
  }
  return pr;
}

}  // namespace

TEST_SUITE("describe") {
  TEST_CASE("top relevant subspaces") {
    EnsembleModel m({fixture::spine(1), fixture::one_split(1)}, 1);
    Vector x(1);
    x << 0.5;
    const auto w = uniform_weights(m.leaf_count());
    CHECK(top_relevant_subspaces(m, w, x, 2) == std::vector<Index>{m.leaf_offset(1), 0});
    CHECK(top_relevant_subspaces(m, w, x, 1) == std::vector<Index>{m.leaf_offset(1)});
    CHECK(top_relevant_subspaces(m, w, x, 9).size() == 2);
  }

  TEST_CASE("singleton cover picks the cheapest") {
    CoverProblem p;
    p.cost = Vector(3);
    p.cost << 4, 2, 9;
    p.rule_length = {1, 1, 1};
    p.leaf = {0, 1, 2};
    p.covering = {{0, 1, 2}};
    const auto s = solve_set_cover(p);
    CHECK(s.selected == std::vector<Index>{1});
    CHECK(s.cost == 2.0);
    CHECK(s.exact);
  }

  TEST_CASE("exact cover equals exhaustive search") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = random_problem(rng, 6, 4);
      const auto s = solve_set_cover_exact(p);
      CHECK(covers_all(p, s.selected));
      CHECK(s.cost == doctest::Approx(oracle::brute_force_cover_cost(p)));
    }
  }

  TEST_CASE("a uniquely covering candidate is always selected") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
      auto p = random_problem(rng, 8, 5);
      p.covering.push_back({3});
      const auto s = solve_set_cover(p);
      CHECK(std::count(s.selected.begin(), s.selected.end(), Index{3}) == 1);
    }
  }

  TEST_CASE("large problems fall back to greedy and stay feasible") {
    std::mt19937_64 rng(2);
    const auto p = random_problem(rng, 40, 30);
    const auto s = solve_set_cover(p);
    CHECK_FALSE(s.exact);
    CHECK(covers_all(p, s.selected));
  }

  TEST_CASE("infeasible cover names the instance") {
    CoverProblem p;
    p.cost = Vector::Ones(1);
    p.rule_length = {1};
    p.leaf = {0};
    p.covering = {{0}, {}};
    try {
      solve_set_cover(p);
      FAIL("expected InfeasibleCover");
    } catch (const InfeasibleCover& e) {
      CHECK(e.instance == 1);
    }
  }

  TEST_CASE("compact description of one instance") {
    const Dataset ds = make_toy_dataset(1);
    const auto m = build_forest(ds.features(), {30, 128, 0}, 3);
    const SubspaceCatalog cat(m, ds.bounding_box());
    const auto w = uniform_weights(m.leaf_count());
    const auto z = transform_one(m, ds.features().row(10).transpose());
    const auto d = compact_description(cat, w, {&z}, 5);
    const auto tops = top_relevant_subspaces(w, m.leaf_scores(), z, 5);
    Index best = tops.front();
    for (auto l : tops)
      if (cat[l].log_volume < cat[best].log_volume) best = l;
    CHECK(d.leaves == std::vector<Index>{best});
  }

  TEST_CASE("compact description covers every target") {
    const Dataset ds = make_toy_dataset(2);
    const auto m = build_forest(ds.features(), {30, 128, 0}, 3);
    const SubspaceCatalog cat(m, ds.bounding_box());
    const auto w = uniform_weights(m.leaf_count());
    std::vector<SparseScoreVector> zs;
    for (Index i = 0; i < 12; ++i) zs.push_back(transform_one(m, ds.features().row(static_cast<Eigen::Index>(i * 30)).transpose()));
    std::vector<const SparseScoreVector*> ptrs;
    for (const auto& z : zs) ptrs.push_back(&z);
    const auto d = compact_description(cat, w, ptrs, 5);
    for (Index i = 0; i < zs.size(); ++i) {
      CHECK(d.rules.matches(ds.features().row(static_cast<Eigen::Index>(i * 30)).transpose()));
    }
  }

  TEST_CASE("nominal count breaks a volume tie") {
    // Two one-split trees: x0 <= 0.5 and x1 <= 0.5, equal volume and length.
    EnsembleModel m({fixture::one_split(2, 0.5, 0), fixture::one_split(2, 0.5, 1)}, 2);
    const SubspaceCatalog cat(m, unit_box(), 0.0);
    const auto w = uniform_weights(m.leaf_count());
    const auto a = transform_one(m, pt(0.2, 0.2));
    std::vector<SparseScoreVector> pool;
    for (int i = 0; i < 3; ++i) pool.push_back(transform_one(m, pt(0.8, 0.1 + 0.1 * i)));
    std::vector<const SparseScoreVector*> unl;
    for (const auto& z : pool) unl.push_back(&z);
    InterpretableParams params;
    params.pseudo_nominals = 3;
    const auto r = interpretable_description(cat, w, {{&a, Label::anomaly}}, unl, params);
    REQUIRE(r.description.leaves.size() == 1);
    CHECK(r.description.leaves[0] == 0);
    CHECK(r.precision[0] == 1.0);
    CHECK(rules_to_text(r.description.rules) == "(x0 <= 0.500000)");
  }

  TEST_CASE("pure anomaly subspace survives the strictest threshold") {
    EnsembleModel m({fixture::one_split(2, 0.5, 0)}, 2);
    const SubspaceCatalog cat(m, unit_box(), 0.0);
    const auto a = transform_one(m, pt(0.2, 0.5));
    const auto n = transform_one(m, pt(0.9, 0.5));
    InterpretableParams params;
    params.precision_threshold = 1.0;
    params.pseudo_nominals = 0;
    const auto r = interpretable_description(cat, uniform_weights(2), {{&a, Label::anomaly}, {&n, Label::nominal}}, {},
                                             params);
    CHECK(r.precision == std::vector<double>{1.0});
    CHECK_FALSE(r.all_filtered);
  }

  TEST_CASE("all subspaces filtered gives an empty rule set") {
    EnsembleModel m({fixture::root_only(2)}, 2);
    const SubspaceCatalog cat(m, unit_box(), 0.0);
    const auto a = transform_one(m, pt(0.2, 0.5));
    const auto n = transform_one(m, pt(0.9, 0.5));
    InterpretableParams params;
    params.precision_threshold = 0.9;
    const auto r =
        interpretable_description(cat, uniform_weights(1), {{&a, Label::anomaly}, {&n, Label::nominal}}, {}, params);
    CHECK(r.all_filtered);
    CHECK(r.description.rules.empty());
  }

  TEST_CASE("rule text") {
    CHECK(rules_to_text(RuleSet{}) == "false");
    RuleSet one{{{Predicate{0, true, 1.5}}}};
    CHECK(rules_to_text(one) == "(x0 > 1.500000)");
    RuleSet two{{{Predicate{0, true, 1.0}, Predicate{1, false, 2.0}}, {Predicate{1, true, -0.25}}}};
    CHECK(rules_to_text(two) == "((x0 > 1.000000) & (x1 <= 2.000000)) or (x1 > -0.250000)");
    CHECK(parse_rules(rules_to_text(two)) == two);
    CHECK(parse_rules(rules_to_text(one)) == one);
    CHECK(parse_rules("false").empty());
    CHECK(rules_from_json(rules_to_json(two)) == two);
  }

  TEST_CASE("box conjunction lists lower then upper bound per feature") {
    const Box b{pt(-std::numeric_limits<double>::infinity(), 1.0), pt(2.0, 3.0)};
    const auto c = box_to_conjunction(b);
    REQUIRE(c.size() == 3);
    CHECK(c[0] == Predicate{0, false, 2.0});
    CHECK(c[1] == Predicate{1, true, 1.0});
    CHECK(c[2] == Predicate{1, false, 3.0});
  }

  TEST_CASE("rule length counts finite bounds") {
    const auto subs = leaf_subspaces(EnsembleModel({fixture::spine(2)}, 2));
    CHECK(subs[0].rule_length() == 1);
    CHECK(subs[1].rule_length() == 2);
  }
}
