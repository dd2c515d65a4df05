#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "aad/stream.hpp"
#include "aad/synthetic.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace aad;

namespace {

std::vector<Index> iota(Index from, Index n) {
  std::vector<Index> v(n);
  std::iota(v.begin(), v.end(), from);
  return v;
}

Matrix gaussian(Index n, Index d, std::uint64_t seed, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = g(rng) + (j < x.cols() / 2 ? shift : 0.0);
  return x;
}

}  // namespace

TEST_SUITE("stream") {
  TEST_CASE("leaf distribution smoothing") {
    const auto t = fixture::one_split(1);
    Matrix x(4, 1);
    x << 0.1, 0.2, 0.3, 0.4;
    const auto rows = iota(0, 4);
    const Vector p = tree_distribution(t, x, rows);
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(p[1] > 0.0);
    CHECK(p[1] < 1e-3);

    const auto s = fixture::spine(1);
    Matrix y(4, 1);
    y << 0.5, 1.5, 2.5, 3.5;
    const Vector q = tree_distribution(s, y, rows);
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(q[i] == doctest::Approx(0.25));
  }

  TEST_CASE("kl divergence values") {
    Vector p(2), q(2);
    p << 0.5, 0.5;
    q << 0.25, 0.75;
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(kl_divergence(p, q) == doctest::Approx(0.14384).epsilon(1e-4));
    CHECK(kl_divergence(p, q) == doctest::Approx(oracle::kl_direct({0.5, 0.5}, {0.25, 0.75})));
  }

  TEST_CASE("kl divergence is nonnegative") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
      Vector p(6), q(6);
      for (int i = 0; i < 6; ++i) {
        p[i] = u(rng);
        q[i] = u(rng);
      }
      p /= p.sum();
      q /= q.sum();
      const double kl = kl_divergence(p, q);
      CHECK(kl >= -1e-15);
      CHECK(kl == doctest::Approx(oracle::kl_direct({p.begin(), p.end()}, {q.begin(), q.end()})));
    }
  }

  TEST_CASE("quantile limits") {
    CHECK(empirical_quantile({3, 1, 2}, 1.0) == 3.0);
    CHECK(empirical_quantile({3, 1, 2}, 0.5) == 2.0);
    CHECK(empirical_quantile({0, 10}, 0.25) == 2.5);
  }

  TEST_CASE("vanishing alpha gives the largest per-tree mean") {
    const Matrix x = gaussian(200, 3, 1);
    const auto rows = iota(0, 200);
    const auto m = build_forest(x, rows, {20, 64, 0}, 5);
    std::mt19937_64 a(9), b(9);
    const double q = kl_threshold(m, x, rows, 0.0, 4, a);
    std::vector<Index> sh = rows;
    Vector mean = Vector::Zero(20);
    for (int r = 0; r < 4; ++r) {
      std::shuffle(sh.begin(), sh.end(), b);
      mean += per_tree_kl(m, x, std::span<const Index>(sh.data(), 100), std::span<const Index>(sh.data() + 100, 100));
    }
    CHECK(q == doctest::Approx(mean.maxCoeff() / 4.0));
  }

  TEST_CASE("identical halves have zero divergence") {
    Matrix x = gaussian(50, 2, 4);
    Matrix xx(100, 2);
    xx << x, x;
    const auto m = build_forest(xx, {10, 64, 0}, 1);
    const Vector kl = per_tree_kl(m, xx, iota(0, 50), iota(50, 50));
    CHECK(kl.maxCoeff() == 0.0);
  }

  TEST_CASE("stationary batches exceed the threshold at about rate alpha") {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Matrix x(1024, 4);
      x << gaussian(512, 4, seed), gaussian(512, 4, seed + 100);
      const auto first = iota(0, 512), second = iota(512, 512);
      const auto m = build_forest(x, first, {100, 256, 0}, seed);
      const auto base = make_baseline(m, x, first, 0.05, 10, seed);
      const auto upd = update_model(x, second, m, base, {ReplacePolicy::never, 0.2, {}}, seed);
      total += static_cast<double>((upd.kl.array() > base.q_kl).count()) / 100.0;
    }
    const double rate = total / 10.0;
    MESSAGE("stationary exceedance rate ", rate);
    CHECK(rate <= 0.10);
  }

  TEST_CASE("mean shift triggers replacement") {
    int detected = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Matrix x(1024, 4);
      x << gaussian(512, 4, seed), gaussian(512, 4, seed + 100, 3.0);
      const auto first = iota(0, 512);
      const auto m = build_forest(x, first, {100, 256, 0}, seed);
      const auto base = make_baseline(m, x, first, 0.05, 10, seed);
      detected += !update_model(x, iota(512, 512), m, base, {}, seed).replaced.empty();
    }
    CHECK(detected >= 9);
  }

  TEST_CASE("full replacement yields fresh leaves and unit weights") {
    Matrix x(400, 2);
    x << gaussian(200, 2, 1), gaussian(200, 2, 2, 50.0);
    const auto m = build_forest(x, iota(0, 200), {10, 64, 0}, 3);
    const auto base = make_baseline(m, x, iota(0, 200), 0.05, 5, 3);
    const auto upd = update_model(x, iota(200, 200), m, base, {}, 4);
    CHECK(upd.replaced.size() == 10);
    CHECK(std::all_of(upd.leaf_map.begin(), upd.leaf_map.end(), [](long v) { return v == -1; }));
    const auto w = remap_weights(uniform_weights(m.leaf_count()), upd.leaf_map, upd.model.leaf_count());
    CHECK(static_cast<Index>(w.size()) == upd.model.leaf_count());
    CHECK(w.norm() == doctest::Approx(1.0));
  }

  TEST_CASE("fixed fraction replaces the oldest trees") {
    const Matrix x = gaussian(200, 2, 1);
    const auto m = build_forest(x, iota(0, 100), {10, 64, 0}, 3);
    const auto base = make_baseline(m, x, iota(0, 100), 0.05, 5, 3);
    const std::vector<Index> age{5, 5, 0, 5, 1, 5, 5, 5, 5, 5};
    const auto upd = update_model(x, iota(100, 100), m, base, {ReplacePolicy::fixed_fraction, 0.2, {10, 64, 0}}, 4, age);
    CHECK(upd.replaced == std::vector<Index>{2, 4});
  }

  TEST_CASE("merge and retain") {
    std::vector<RetainEntry> e;
    for (Index i = 0; i < 6; ++i) {
      SparseScoreVector z(1);
      z.insert(0) = -static_cast<double>((i * 7) % 6 + 1);
      e.push_back({{i, z}, i / 3});
    }
    const auto w = uniform_weights(1);
    CHECK(merge_and_retain(w, e, 10).size() == 6);
    const auto one = merge_and_retain(w, e, 1);
    REQUIRE(one.size() == 1);
    CHECK(score(w, one[0].instance.z) == doctest::Approx(-1.0));
    const auto three = merge_and_retain(w, e, 3);
    std::vector<double> kept, all;
    for (const auto& r : three) kept.push_back(score(w, r.instance.z));
    for (const auto& r : e) all.push_back(score(w, r.instance.z));
    std::sort(kept.rbegin(), kept.rend());
    std::sort(all.rbegin(), all.rend());
    all.resize(3);
    CHECK(kept == all);
  }

  TEST_CASE("retention ties prefer the newer window") {
    SparseScoreVector z(1);
    z.insert(0) = -1.0;
    const auto r = merge_and_retain(uniform_weights(1), {{{0, z}, 0}, {{1, z}, 1}}, 1);
    CHECK(r[0].instance.id == 1);
  }

  TEST_CASE("single window stream matches batch learning") {
    const Dataset ds = make_cluster_dataset({400, 2, 0.05}, 5);
    const Matrix& x = ds.features();
    StreamParams sp;
    sp.window = 400;
    sp.budget = 30;
    sp.queries_per_window = 10;
    sp.query.batch = 1;
    sp.update.forest = {50, 128, 0};
    sp.seed = 17;
    StreamActiveLearner s(x, sp);
    Oracle o1(ds);
    while (auto q = s.next_query()) s.feedback(*q, o1.label(*q));

    const auto m = build_forest(x, iota(0, 400), sp.update.forest, derive_seed(sp.seed, 0));
    FeedbackState st;
    st.prior = PriorMode::constant;
    for (Index i = 0; i < 400; ++i) st.unlabeled.push_back({i, normalize_scores(transform_one(m, x.row(static_cast<Eigen::Index>(i)).transpose()))});
    Oracle o2(ds);
    const auto b = batch_al(30, uniform_weights(m.leaf_count()), st, [&](Index id) { return o2.label(id); });
    REQUIRE(s.history().size() == b.history.size());
    for (Index i = 0; i < b.history.size(); ++i) CHECK(s.history()[i].queried_id == b.history[i].queried_id);
  }

  TEST_CASE("drift report json fields") {
    DriftReport r{3, 7, 0.1, 0.4, false};
    const auto j = r.to_json();
    CHECK(j.at("window") == 3);
    CHECK(j.at("n_trees_replaced") == 7);
    CHECK(j.at("q_kl") == 0.1);
    CHECK(j.at("kl_max") == 0.4);
  }
}
