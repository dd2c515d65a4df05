#include <doctest.h>

#include <cmath>
#include <random>

#include "aad/iforest.hpp"
#include "aad/synthetic.hpp"
#include "fixtures.hpp"

using namespace aad;

TEST_SUITE("iforest") {
  TEST_CASE("single instance grows a single leaf") {
    Matrix x(1, 2);
    x << 0.3, 0.7;
    const auto m = build_forest(x, {1, 256, 0}, 5);
    CHECK(m.tree_count() == 1);
    CHECK(m.leaf_count() == 1);
    CHECK(m.leaf_score(0) == 0.0);
  }

  TEST_CASE("leaf score vector has one -depth entry per tree") {
    EnsembleModel m({fixture::spine(1), fixture::one_split(1)}, 1);
    Vector x(1);
    x << 0.5;
    const auto z = transform_one(m, x);
    CHECK(z.nonZeros() == 2);
    // Spine leaves in depth-first order: x0<=1, 1<x0<=2, 2<x0<=3, x0>3.
    CHECK(z.coeff(0) == -3.0);
    CHECK(z.coeff(m.leaf_offset(1)) == -1.0);
  }

  TEST_CASE("transform has T nonzeros per row and matches transform_one") {
    const Dataset ds = make_cluster_dataset({300, 2, 0.05}, 1);
    const auto m = build_forest(ds.features(), {25, 64, 0}, 2);
    const SparseScoreMatrix z = transform(m, ds.features());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      CHECK(SparseScoreVector(z.row(i).transpose()).nonZeros() == 25);
      const auto one = transform_one(m, ds.features().row(i).transpose());
      CHECK((Vector(one) - Vector(z.row(i).transpose())).norm() == 0.0);
    }
  }

  TEST_CASE("identical points get identical vectors") {
    const Dataset ds = make_cluster_dataset({300, 2, 0.05}, 1);
    const auto m = build_forest(ds.features(), {25, 64, 0}, 2);
    const Vector x = ds.features().row(3).transpose();
    CHECK(Vector(transform_one(m, x)) == Vector(transform_one(m, x)));
  }

  TEST_CASE("root-only tree has one unbounded subspace") {
    const auto subs = leaf_subspaces(EnsembleModel({fixture::root_only(2)}, 2));
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].box.lo.array().isInf().all());
    CHECK(subs[0].box.hi.array().isInf().all());
    CHECK(subs[0].rule_length() == 0);
  }

  TEST_CASE("one split gives the two half-lines") {
    const auto subs = leaf_subspaces(EnsembleModel({fixture::one_split(1)}, 1));
    REQUIRE(subs.size() == 2);
    CHECK(std::isinf(subs[0].box.lo[0]));
    CHECK(subs[0].box.hi[0] == 0.5);
    CHECK(subs[1].box.lo[0] == 0.5);
    CHECK(std::isinf(subs[1].box.hi[0]));
  }

  TEST_CASE("subspace count equals leaf count") {
    const Dataset ds = make_toy_dataset(1);
    const auto m = build_forest(ds.features(), {30, 128, 0}, 3);
    CHECK(leaf_subspaces(m).size() == m.leaf_count());
  }

  TEST_CASE("boundary value routes left") {
    const auto t = fixture::one_split(1);
    Vector x(1);
    x << 0.5;
    CHECK(t.leaf_of(x) == 0);
    x << 0.5000001;
    CHECK(t.leaf_of(x) == 1);
  }

  TEST_CASE("default depth limit and subsample cap") {
    CHECK(default_max_depth(256) == 8);
    Matrix x = Matrix::Random(40, 3);
    const auto m = build_forest(x, {4, 256, 0}, 9);
    for (Index t = 0; t < m.tree_count(); ++t) CHECK(m.tree(t).nodes()[0].sample_count == 40);
  }

  TEST_CASE("json round trip preserves structure") {
    const Dataset ds = make_toy_dataset(2);
    const auto m = build_forest(ds.features(), {10, 64, 0}, 4);
    const auto back = EnsembleModel::from_json(m.to_json());
    CHECK(back.to_json() == m.to_json());
    CHECK(Vector(transform_one(back, ds.features().row(5).transpose())) ==
          Vector(transform_one(m, ds.features().row(5).transpose())));
  }

  TEST_CASE("replacing a tree keeps the others") {
    const Dataset ds = make_toy_dataset(2);
    const auto m = build_forest(ds.features(), {3, 64, 0}, 4);
    const auto r = m.with_replaced({1}, {fixture::one_split(2)});
    CHECK(r.tree(0).to_json() == m.tree(0).to_json());
    CHECK(r.tree(2).to_json() == m.tree(2).to_json());
    CHECK(r.tree(1).leaf_count() == 2);
    CHECK(r.leaf_count() == m.tree(0).leaf_count() + 2 + m.tree(2).leaf_count());
  }
}
