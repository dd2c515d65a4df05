#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aad/types.hpp"

namespace aad {

class GroundTruth;
class Oracle;

/// Axis-aligned box; bounds may be infinite.
struct Box {
  Vector lo;
  Vector hi;

  bool contains(const Eigen::Ref<const Vector>& x) const;
};

struct ParseError : std::runtime_error {
  ParseError(std::size_t row, const std::string& what);
  std::size_t row;
};

/// Immutable collection of instances. Labels and class tags are held
/// privately: learning code only ever sees features, and the truth is
/// reachable through Oracle (per-id queries) or GroundTruth (metrics).
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix features, std::vector<std::optional<Label>> labels,
          std::vector<std::optional<std::string>> class_tags = {},
          std::vector<std::string> feature_names = {});

  Index size() const { return static_cast<Index>(features_.rows()); }
  Index dim() const { return static_cast<Index>(features_.cols()); }
  bool empty() const { return size() == 0; }

  const Matrix& features() const { return features_; }
  auto row(Index i) const { return features_.row(static_cast<Eigen::Index>(i)); }
  const Box& bounding_box() const { return bbox_; }
  const std::vector<std::string>& feature_names() const { return names_; }

  /// Rows in `ids` order, as a new dataset (labels carried along).
  Dataset subset(const std::vector<Index>& ids) const;

 private:
  friend class GroundTruth;
  friend class Oracle;
  friend void write_csv(const Dataset&, const std::filesystem::path&);

  Matrix features_;
  std::vector<std::optional<Label>> labels_;
  std::vector<std::optional<std::string>> tags_;
  std::vector<std::string> names_;
  Box bbox_;
};

/// Metrics-side access to hidden labels. Never used by learners.
class GroundTruth {
 public:
  explicit GroundTruth(const Dataset& ds) : ds_(&ds) {}
  std::optional<Label> label(Index id) const;
  bool is_anomaly(Index id) const { return label(id) == Label::anomaly; }
  std::optional<std::string> class_tag(Index id) const;
  bool has_class_tags() const;
  Index anomaly_count() const;
  double anomaly_fraction() const;

 private:
  const Dataset* ds_;
};

/// Simulated analyst backed by hidden labels.
class Oracle {
 public:
  explicit Oracle(const Dataset& ds) : ds_(&ds) {}

  /// Throws std::out_of_range for unknown ids or unlabeled rows.
  Label label(Index id);

  std::vector<std::pair<Index, Label>> log() const;
  std::size_t queries() const;

 private:
  const Dataset* ds_;
  mutable std::mutex mu_;
  std::vector<std::pair<Index, Label>> log_;
  std::set<Index> seen_;
};

struct CsvOptions {
  std::string label_column = "label";
  std::optional<std::string> class_column;
  std::vector<std::string> anomaly_values{"1", "anomaly", "+1"};
  std::vector<std::string> nominal_values{"-1", "nominal"};
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts = {});
void write_csv(const Dataset& ds, const std::filesystem::path& path);

/// Consecutive order-preserving id batches of size K (last may be short).
std::vector<std::vector<Index>> stream_windows(const Dataset& ds, Index window);

/// Keeps every nominal and a seeded random subset of anomalies so that
/// anomalies make up about `fraction` of the result. Row order is kept.
Dataset downsample_anomalies(const Dataset& ds, double fraction, std::uint64_t seed);

}  // namespace aad
