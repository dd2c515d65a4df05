#pragma once

#include <cstdint>

#include "aad/data.hpp"

namespace aad {

/// Gaussian nominal clusters with uniform anomalies kept clear of them.
struct ClusterSpec {
  Index n = 2000;
  Index d = 2;
  double anomaly_fraction = 0.02;
};
Dataset make_cluster_dataset(const ClusterSpec& spec, std::uint64_t seed);

/// Two-dimensional running example: three nominal blobs and two compact
/// anomaly groups next to them.
Dataset make_toy_dataset(std::uint64_t seed);

/// Harder benchmark with class tags: nominal clusters of mixed spread (the
/// broad one produces isolated nominals), one class of scattered anomalies
/// and tight anomaly groups that isolation alone ranks poorly.
struct BenchmarkSpec {
  Index n = 2000;
  Index d = 4;
  Index anomaly_classes = 3;
  double anomaly_fraction = 0.03;
};
Dataset make_benchmark_dataset(const BenchmarkSpec& spec, std::uint64_t seed);

/// Windowed stream; rows are in arrival order. Anomalies are a recurring
/// tight group plus isolated points on a ring. With `shift_window` set,
/// every row from that window on has its mean moved by `shift` standard
/// deviations along the first half of the axes, and a third of the
/// anomalies of the shifted regime sit where the nominals used to be.
struct StreamSpec {
  Index windows = 20;
  Index window = 512;
  Index d = 4;
  double anomaly_fraction = 0.03;
  Index shift_window = 0;  // 0: stationary
  double shift = 3.0;
};
Dataset make_drift_stream(const StreamSpec& spec, std::uint64_t seed);

}  // namespace aad
