#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "aad/data.hpp"
#include "aad/synthetic.hpp"

using namespace aad;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

Dataset tiny(Index n) {
  Matrix x(static_cast<Eigen::Index>(n), 1);
  std::vector<std::optional<Label>> y;
  for (Index i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    y.push_back(i % 3 == 0 ? Label::anomaly : Label::nominal);
  }
  return Dataset(x, y);
}

std::vector<Index> sizes(const std::vector<std::vector<Index>>& w) {
  std::vector<Index> s;
  for (const auto& b : w) s.push_back(b.size());
  return s;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("csv labels give the anomaly fraction") {
    const auto p = write_temp("aad_three.csv", "a,b,label\n0,0,1\n1,2,-1\n3,1,-1\n");
    const Dataset ds = load_csv(p);
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 2);
    CHECK(GroundTruth(ds).anomaly_fraction() == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("bounding box is the per-feature min and max") {
    const auto p = write_temp("aad_box.csv", "x,y,label\n0,0,-1\n1,2,1\n");
    const Dataset ds = load_csv(p);
    const Box& b = ds.bounding_box();
    CHECK(b.lo[0] == 0.0);
    CHECK(b.hi[0] == 1.0);
    CHECK(b.lo[1] == 0.0);
    CHECK(b.hi[1] == 2.0);
  }

  TEST_CASE("malformed row reports its line") {
    const auto p = write_temp("aad_bad.csv", "x,label\n1,1\noops,-1\n");
    CHECK_THROWS_AS(load_csv(p), ParseError);
  }

  TEST_CASE("csv round trip keeps features and labels") {
    const Dataset a = tiny(7);
    const auto p = std::filesystem::temp_directory_path() / "aad_rt.csv";
    write_csv(a, p);
    const Dataset b = load_csv(p);
    CHECK(b.features() == a.features());
    for (Index i = 0; i < a.size(); ++i) CHECK(GroundTruth(a).label(i) == GroundTruth(b).label(i));
  }

  TEST_CASE("oracle answers and logs each id once") {
    const Dataset ds = tiny(6);
    Oracle o(ds);
    CHECK(o.label(0) == Label::anomaly);
    CHECK(o.label(0) == Label::anomaly);
    CHECK(o.queries() == 1);
    for (Index i = 0; i < ds.size(); ++i) o.label(i);
    CHECK(o.log().size() == ds.size());
    CHECK_THROWS_AS(o.label(99), std::out_of_range);
  }

  TEST_CASE("stream windows") {
    CHECK(sizes(stream_windows(tiny(10), 4)) == std::vector<Index>{4, 4, 2});
    CHECK(sizes(stream_windows(tiny(8), 4)) == std::vector<Index>{4, 4});
    CHECK(sizes(stream_windows(tiny(3), 4)) == std::vector<Index>{3});
    const auto w = stream_windows(tiny(10), 4);
    CHECK(w[1].front() == 4);
  }

  TEST_CASE("downsampling keeps nominals and order") {
    const Dataset ds = make_cluster_dataset({2000, 2, 0.2}, 7);
    const Dataset small = downsample_anomalies(ds, 0.05, 1);
    const GroundTruth t(small);
    CHECK(t.anomaly_fraction() == doctest::Approx(0.05).epsilon(0.2));
    Index nominals = 0;
    for (Index i = 0; i < ds.size(); ++i) nominals += !GroundTruth(ds).is_anomaly(i);
    CHECK(small.size() - t.anomaly_count() == nominals);
  }

  TEST_CASE("synthetic generators are seed-deterministic") {
    CHECK(make_toy_dataset(3).features() == make_toy_dataset(3).features());
    CHECK(make_toy_dataset(3).features() != make_toy_dataset(4).features());
    const Dataset b = make_benchmark_dataset({}, 1);
    CHECK(GroundTruth(b).has_class_tags());
    CHECK(GroundTruth(b).anomaly_fraction() == doctest::Approx(0.03).epsilon(0.1));
  }
}
