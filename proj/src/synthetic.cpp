#include "aad/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace aad {

namespace {

class Builder {
 public:
  explicit Builder(Index d) : d_(d) {}

  void add(const Vector& x, Label y, std::string tag) {
    rows_.push_back(x);
    labels_.push_back(y);
    tags_.push_back(std::move(tag));
  }

  Index size() const { return rows_.size(); }

  Dataset build(std::mt19937_64* shuffle_rng) {
    std::vector<Index> order(rows_.size());
    std::iota(order.begin(), order.end(), Index{0});
    if (shuffle_rng) std::shuffle(order.begin(), order.end(), *shuffle_rng);
    Matrix x(static_cast<Eigen::Index>(order.size()), static_cast<Eigen::Index>(d_));
    std::vector<std::optional<Label>> labels;
    std::vector<std::optional<std::string>> tags;
    for (std::size_t i = 0; i < order.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = rows_[order[i]].transpose();
      labels.emplace_back(labels_[order[i]]);
      tags.emplace_back(tags_[order[i]]);
    }
    return Dataset(std::move(x), std::move(labels), std::move(tags));
  }

 private:
  Index d_;
  std::vector<Vector> rows_;
  std::vector<Label> labels_;
  std::vector<std::string> tags_;
};

Vector gaussian(const Vector& mean, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector x(mean.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = mean[j] + sd * n(rng);
  return x;
}

Vector uniform_box(Index d, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector x(static_cast<Eigen::Index>(d));
  for (auto& v : x) v = u(rng);
  return x;
}

Index anomaly_count(Index n, double fraction) {
  if (fraction < 0.0 || fraction >= 1.0) throw ContractViolation("anomaly fraction must lie in [0,1)");
  return static_cast<Index>(std::llround(static_cast<double>(n) * fraction));
}

}  // namespace

Dataset make_cluster_dataset(const ClusterSpec& spec, std::uint64_t seed) {
  if (spec.d == 0 || spec.n == 0) throw ContractViolation("make_cluster_dataset: empty shape");
  std::mt19937_64 rng(seed);
  const auto d = static_cast<Eigen::Index>(spec.d);
  const std::vector<std::pair<Vector, double>> clusters = {{Vector::Constant(d, -2.0), 0.8},
                                                           {Vector::Constant(d, 2.0), 0.6}};
  const Index anomalies = anomaly_count(spec.n, spec.anomaly_fraction);
  Builder b(spec.d);
  for (Index i = 0; b.size() < spec.n - anomalies; ++i) {
    const auto c = i % clusters.size();
    b.add(gaussian(clusters[c].first, clusters[c].second, rng), Label::nominal, "nominal-" + std::to_string(c));
  }
  while (b.size() < spec.n) {
    Vector x = uniform_box(spec.d, -6.0, 6.0, rng);
    const bool clear = std::all_of(clusters.begin(), clusters.end(), [&](const auto& c) {
      return (x - c.first).norm() > 3.5 * c.second;
    });
    if (clear) b.add(x, Label::anomaly, "anomaly");
  }
  return b.build(&rng);
}

Dataset make_toy_dataset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Builder b(2);
  const std::vector<std::pair<Vector, double>> nominal = {
      {Vector{{0.0, 0.0}}, 1.0}, {Vector{{5.0, 4.0}}, 0.8}, {Vector{{-4.0, 5.0}}, 0.7}};
  const Index per = 150;
  for (std::size_t c = 0; c < nominal.size(); ++c)
    for (Index i = 0; i < per; ++i) b.add(gaussian(nominal[c].first, nominal[c].second, rng), Label::nominal,
                                          "nominal-" + std::to_string(c));
  const std::vector<std::pair<Vector, double>> anomalous = {{Vector{{4.0, -2.0}}, 0.35}, {Vector{{-3.5, 1.5}}, 0.3}};
  for (std::size_t c = 0; c < anomalous.size(); ++c)
    for (Index i = 0; i < 18; ++i) b.add(gaussian(anomalous[c].first, anomalous[c].second, rng), Label::anomaly,
                                         "anomaly-" + std::to_string(c));
  return b.build(&rng);
}

Dataset make_benchmark_dataset(const BenchmarkSpec& spec, std::uint64_t seed) {
  if (spec.d < 2 || spec.n == 0 || spec.anomaly_classes == 0)
    throw ContractViolation("make_benchmark_dataset: need d >= 2, n > 0 and at least one anomaly class");
  std::mt19937_64 rng(seed);
  const auto d = static_cast<Eigen::Index>(spec.d);
  auto point = [&](double a, double c) {
    Vector v = Vector::Constant(d, c);
    v[0] = a;
    return v;
  };
  // Two tight clusters and one broad one; the broad cluster's tails are
  // isolated easily and crowd the top of the unsupervised ranking.
  const std::vector<std::tuple<Vector, double, double>> nominal = {
      {point(-3.0, 0.0), 0.5, 0.4}, {point(3.0, 0.0), 0.5, 0.4}, {point(0.0, 4.0), 1.8, 0.2}};
  // Tight anomaly groups in the gaps between nominal clusters.
  std::vector<Vector> groups;
  for (Index k = 0; k < spec.anomaly_classes; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(spec.anomaly_classes);
    Vector c = Vector::Zero(d);
    c[0] = -4.0 + 8.0 * t + 4.0 / static_cast<double>(spec.anomaly_classes);
    c[1] = -2.5 + (k % 2 == 0 ? 0.0 : -1.0);
    groups.push_back(c);
  }
  const Index anomalies = anomaly_count(spec.n, spec.anomaly_fraction);
  Builder b(spec.d);
  std::discrete_distribution<std::size_t> pick({0.4, 0.4, 0.2});
  while (b.size() < spec.n - anomalies) {
    const auto c = pick(rng);
    const auto& [mean, sd, _] = nominal[c];
    b.add(gaussian(mean, sd, rng), Label::nominal, "nominal-" + std::to_string(c));
  }
  // Class 0 is scattered far from every cluster (easy for isolation); the
  // remaining classes are tight groups.
  for (Index i = 0; i < anomalies; ++i) {
    const auto k = i % groups.size();
    if (k == 0) {
      Vector x;
      do {
        x = uniform_box(spec.d, -7.0, 7.0, rng);
      } while (std::any_of(nominal.begin(), nominal.end(), [&](const auto& c) {
        return (x - std::get<0>(c)).norm() < 4.0 * std::get<1>(c);
      }));
      b.add(x, Label::anomaly, "anomaly-0");
    } else {
      b.add(gaussian(groups[k], 0.15, rng), Label::anomaly, "anomaly-" + std::to_string(k));
    }
  }
  return b.build(&rng);
}

Dataset make_drift_stream(const StreamSpec& spec, std::uint64_t seed) {
  if (spec.windows == 0 || spec.window == 0 || spec.d == 0) throw ContractViolation("make_drift_stream: empty shape");
  std::mt19937_64 rng(seed);
  const auto d = static_cast<Eigen::Index>(spec.d);
  const Index per_window = anomaly_count(spec.window, spec.anomaly_fraction);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> radius(4.0, 6.0);
  auto ring = [&](const Vector& centre) {
    Vector dir(d);
    for (auto& v : dir) v = n01(rng);
    return Vector(centre + radius(rng) * dir.normalized());
  };
  Builder b(spec.d);
  for (Index w = 0; w < spec.windows; ++w) {
    const bool shifted = spec.shift_window > 0 && w >= spec.shift_window;
    Vector centre = Vector::Zero(d);
    if (shifted) centre.head((d + 1) / 2).setConstant(spec.shift);
    std::vector<std::pair<Vector, Label>> rows;
    for (Index i = 0; i < spec.window - per_window; ++i) rows.emplace_back(gaussian(centre, 1.0, rng), Label::nominal);
    // A third of the anomalies form a recurring tight group that travels
    // with the regime; after the shift another third occupy the vacated
    // region; the rest are isolated points on a ring.
    Vector group = centre;
    group[d - 1] += 3.0;
    for (Index i = 0; i < per_window; ++i) {
      if (i % 3 == 0)
        rows.emplace_back(gaussian(group, 0.25, rng), Label::anomaly);
      else if (shifted && i % 3 == 1)
        rows.emplace_back(gaussian(Vector::Zero(d), 0.3, rng), Label::anomaly);
      else
        rows.emplace_back(ring(centre), Label::anomaly);
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    for (auto& [x, y] : rows) b.add(x, y, y == Label::anomaly ? "anomaly" : "nominal");
  }
  return b.build(nullptr);
}

}  // namespace aad
