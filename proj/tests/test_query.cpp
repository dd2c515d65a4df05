#include <doctest.h>

#include <algorithm>
#include <random>

#include "aad/query.hpp"
#include "fixtures.hpp"

using namespace aad;

namespace {

std::vector<ScoredInstance> pool_of(Index n) {
  std::vector<ScoredInstance> p;
  for (Index i = 0; i < n; ++i) {
    SparseScoreVector z(1);
    z.insert(0) = -1.0;
    p.push_back({i, z});
  }
  return p;
}

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x[i++] = a;
  return x;
}

}  // namespace

TEST_SUITE("query") {
  TEST_CASE("select top") {
    CHECK(select_top(pool_of(3), vec({0.9, 0.1, 0.5}), 1).selected == std::vector<Index>{0});
    CHECK(select_top(pool_of(3), vec({0.9, 0.1, 0.5}), 3).selected == std::vector<Index>{0, 2, 1});
    CHECK(select_top(pool_of(2), vec({0.9, 0.9}), 1).selected == std::vector<Index>{0});
    const auto t = select_top(pool_of(2), vec({0.9, 0.1}), 5);
    CHECK(t.truncated);
    CHECK(t.selected.size() == 2);
  }

  TEST_CASE("random top degenerate cases") {
    std::mt19937_64 rng(1);
    const auto s = vec({0.2, 0.9, 0.4, 0.7});
    auto a = select_random_top(pool_of(4), s, 2, 2, rng).selected;
    std::sort(a.begin(), a.end());
    CHECK(a == std::vector<Index>{1, 3});
    CHECK(select_random_top(pool_of(4), s, 1, 1, rng).selected == std::vector<Index>{1});
  }

  TEST_CASE("random top is uniform over the top n") {
    std::mt19937_64 rng(42);
    const auto s = vec({0.1, 0.9, 0.8, 0.7, 0.6, 0.5, 0.2, 0.3});
    const Index n = 5, draws = 10000;
    std::vector<double> counts(8, 0.0);
    for (Index i = 0; i < draws; ++i) counts[select_random_top(pool_of(8), s, 1, n, rng).selected[0]] += 1;
    CHECK(counts[0] + counts[6] + counts[7] == 0.0);
    double chi2 = 0.0;
    const double expected = static_cast<double>(draws) / static_cast<double>(n);
    for (Index i : {1, 2, 3, 4, 5}) chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
    CHECK(chi2 < 13.277);  // chi-square, 4 dof, 0.01 upper tail
  }

  TEST_CASE("diverse takes one from each disjoint region") {
    EnsembleModel m({fixture::one_split(1)}, 1);
    const SubspaceCatalog cat(m, Box{Vector::Zero(1), Vector::Ones(1)});
    std::vector<ScoredInstance> pool;
    for (double x : {0.1, 0.2, 0.3, 0.9}) {
      Vector v(1);
      v << x;
      pool.push_back({pool.size(), transform_one(m, v)});
    }
    const auto s = vec({0.9, 0.8, 0.7, 0.1});
    const auto w = uniform_weights(m.leaf_count());
    CHECK(select_diverse(cat, w, pool, s, 2, 4).selected == std::vector<Index>{0, 3});
    CHECK(select_top(pool, s, 2).selected == std::vector<Index>{0, 1});
    auto all = select_diverse(cat, w, pool, s, 4, 4).selected;
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<Index>{0, 1, 2, 3});
  }

  TEST_CASE("pairwise overlap") {
    const std::vector<std::vector<Index>> mem{{1, 2}, {2}, {3}};
    CHECK(mean_pairwise_overlap(mem, {0, 1}) == 1.0);
    CHECK(mean_pairwise_overlap(mem, {0, 1, 2}) == doctest::Approx(1.0 / 3.0));
    CHECK(mean_pairwise_overlap(mem, {2}) == 0.0);
  }

  TEST_CASE("strategy names") {
    for (auto s : {Strategy::top, Strategy::diverse, Strategy::random_top}) CHECK(parse_strategy(to_string(s)) == s);
    CHECK_THROWS(parse_strategy("best"));
  }
}
