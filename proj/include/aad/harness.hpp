#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aad/config.hpp"
#include "aad/engine.hpp"
#include "aad/iforest.hpp"

namespace aad {

/// Build identifier baked in at configure time ("unknown" outside git).
const char* code_version();

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<Index> curve;  // cumulative anomalies after each query
  std::vector<HistoryRecord> history;
  std::vector<DriftReport> drift;
  std::vector<BatchRecord> batches;
  std::string rules;
  Index total_anomalies = 0;
  double wall_seconds = 0.0;

  Index anomalies_found() const { return curve.empty() ? 0 : curve.back(); }
};

struct RunResult {
  RunConfig config;
  std::vector<SeedResult> seeds;
};

/// Scripted-oracle run of one (config, seed) cell.
SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed);

/// Every seed of `cfg`, cells in parallel up to `threads` (0: hardware).
/// With `out_root`, results land in out_root/<name>/<arm>/<seed>/.
RunResult run(const RunConfig& cfg, const std::optional<std::filesystem::path>& out_root = std::nullopt,
              unsigned threads = 0);

/// One JSON object per line: iter, queried_id, label, num_anomalies_so_far, score_hash.
std::string history_jsonl(const std::vector<HistoryRecord>& history);
std::string drift_jsonl(const std::vector<DriftReport>& drift);
void persist_seed(const RunConfig& cfg, const SeedResult& result, const std::filesystem::path& dir);

/// Angles (degrees) between unit-normalized score vectors and w_unif.
struct AngleHistogram {
  std::vector<double> edges;  // bins + 1 edges over [0, 180]
  std::vector<Index> anomaly;
  std::vector<Index> nominal;
  double anomaly_mean = 0.0;
  double nominal_mean = 0.0;

  nlohmann::json to_json() const;
};

double angle_to_uniform(const SparseScoreVector& z, Index members);
AngleHistogram angle_histogram(const EnsembleModel& model, const Dataset& data, Index bins = 36);

/// Unique hidden classes per consecutive batch of `batch_size` queries and
/// their running average.
struct DiversitySeries {
  std::vector<Index> per_batch;
  std::vector<double> cumulative;
};
DiversitySeries class_diversity_series(const std::vector<HistoryRecord>& history, const GroundTruth& truth,
                                       Index batch_size);
/// Element-wise difference of two cumulative series over their common length.
std::vector<double> diversity_difference(const DiversitySeries& a, const DiversitySeries& b);

/// Mean and 95% Student-t half-width of a sample.
struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
};
MeanCi mean_ci(const std::vector<double>& xs);
double t_quantile_975(Index dof);

/// Percent of all anomalies seen after each query, averaged over seeds.
struct CurvePoint {
  Index query = 0;
  double mean_pct = 0.0;
  double ci_half = 0.0;
};
std::vector<CurvePoint> mean_curve(const RunResult& result);

/// Writes <dir>/<arm>.csv for each result.
void emit_curves(const std::vector<RunResult>& results, const std::filesystem::path& dir);

/// Reads persisted seeds back from out_root/<name>/<arm>/*.
RunResult load_run(const std::filesystem::path& arm_dir);

}  // namespace aad
