#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "aad/data.hpp"
#include "aad/query.hpp"

namespace aad {

enum class Mode { batch, stream, glad };
std::string to_string(Mode m);

/// Raised for unknown arms, out-of-range parameters and similar misuse.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every experiment knob. Arms select the engine and its variant:
///   bal, bal-noprior-unif, bal-noprior-rand, unsupervised   (batch, IFOR leaves)
///   sal-kl, sal-20pct, sal-noreplace                        (stream, IFOR leaves)
///   glad, loda, loda-global                                 (LODA members)
struct RunConfig {
  std::string name = "default";
  std::string arm = "bal";

  // Data. Synthetic sets are regenerated per seed; csv is loaded as is.
  std::string dataset = "benchmark";  // cluster | toy | benchmark | stream | csv
  std::string csv_path;
  std::string label_column = "label";
  std::string class_column;
  Index n = 2000;
  Index d = 4;
  double anomaly_fraction = 0.03;
  Index anomaly_classes = 3;
  Index stream_windows = 20;
  Index shift_window = 0;
  double shift = 3.0;

  // Forest.
  Index trees = 100;
  Index subsample = 256;
  Index max_depth = 0;

  // Active learning.
  Strategy strategy = Strategy::top;
  Index budget = 100;
  Index batch = 1;
  Index candidates = 10;
  Index delta = 5;
  double tau = 0.03;
  bool normalize_scores = true;

  // Streaming.
  Index window = 512;
  Index queries_per_window = 20;
  double alpha = 0.05;
  Index kl_reps = 10;
  double replace_fraction = 0.2;

  // GLAD and LODA.
  Index members = 15;
  double bias = 0.5;
  double lambda = 1.0;
  Index hidden = 0;
  Index upsample = 5;

  // Interpretable rules.
  double precision_threshold = 0.4;
  Index pseudo_nominals = 128;
  double complexity_weight = 1.0;

  std::vector<std::uint64_t> seeds{0};

  Mode mode() const;
  /// Throws UsageError on an unknown arm or a value out of range.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
};

const std::vector<std::string>& known_arms();

/// Dataset for one seed: synthetic generators draw from a seed derived from
/// the run seed, so every arm sees the same data for the same seed.
Dataset make_dataset(const RunConfig& cfg, std::uint64_t seed);

}  // namespace aad
