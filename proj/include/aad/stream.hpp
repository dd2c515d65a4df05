#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "aad/active.hpp"
#include "aad/iforest.hpp"
#include "aad/query.hpp"

namespace aad {

inline constexpr double kLeafSmoothing = 1e-3;

/// Leaf occupancy of `rows` in a tree, add-smoothed and normalized.
Vector tree_distribution(const IsolationTree& tree, const Matrix& data, std::span<const Index> rows,
                         double smoothing = kLeafSmoothing);
std::vector<Vector> ensemble_distribution(const EnsembleModel& model, const Matrix& data,
                                          std::span<const Index> rows, double smoothing = kLeafSmoothing);

/// sum_i p_i ln(p_i / q_i); terms with p_i = 0 contribute nothing.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != q.size()) throw ContractViolation("kl_divergence: length mismatch");
  Scalar sum(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > Scalar(0)) sum += p[i] * std::log(p[i] / q[i]);
  }
  return sum;
}

/// Linear-interpolation empirical quantile (q in [0,1]).
double empirical_quantile(std::vector<double> values, double q);

/// Per-tree D_KL(p_A || p_B) between the leaf distributions of two row sets.
Vector per_tree_kl(const EnsembleModel& model, const Matrix& data, std::span<const Index> a,
                   std::span<const Index> b);

/// (1 - alpha) quantile of per-tree KL averaged over `reps` random half splits.
double kl_threshold(const EnsembleModel& model, const Matrix& data, std::span<const Index> rows, double alpha,
                    Index reps, std::mt19937_64& rng);

struct DriftBaseline {
  std::vector<Vector> distributions;  // p_t per tree
  double q_kl = 0.0;
  double alpha = 0.05;
  Index reps = 10;
};

DriftBaseline make_baseline(const EnsembleModel& model, const Matrix& data, std::span<const Index> rows, double alpha,
                            Index reps, std::uint64_t seed);

enum class ReplacePolicy { kl, fixed_fraction, never };

struct UpdateParams {
  ReplacePolicy policy = ReplacePolicy::kl;
  double replace_fraction = 0.2;  // fixed_fraction policy
  ForestParams forest;
};

struct UpdateResult {
  EnsembleModel model;
  DriftBaseline baseline;
  std::vector<Index> replaced;  // tree ids, ascending
  Vector kl;                    // per-tree D_KL(p_t || q_t) for the window
  double kl_max = 0.0;
  /// Old global leaf -> new global leaf, or -1 for discarded leaves.
  std::vector<long> leaf_map;
};

/// Detects drifted trees against the baseline; when at least 2 * alpha * T
/// trees exceed q_KL, those trees are rebuilt on the window and the
/// threshold and baselines are recomputed on it. `tree_age` (creation
/// window per tree) selects the oldest trees under fixed_fraction.
UpdateResult update_model(const Matrix& data, std::span<const Index> rows, const EnsembleModel& model,
                          const DriftBaseline& baseline, const UpdateParams& params, std::uint64_t seed,
                          std::span<const Index> tree_age = {});

/// Surviving leaves keep their weights, new leaves start at 1/sqrt(m'),
/// then the vector is renormalized.
WeightVector remap_weights(const WeightVector& w, const std::vector<long>& leaf_map, Index new_leaf_count);

struct RetainEntry {
  ScoredInstance instance;
  Index window = 0;  // arrival window, for recency ties
};

/// K highest scores under w; ties to the newer window, then the lower id.
std::vector<RetainEntry> merge_and_retain(const WeightVector& w, std::vector<RetainEntry> entries, Index keep);

struct DriftReport {
  Index window = 0;
  Index n_trees_replaced = 0;
  double q_kl = 0.0;
  double kl_max = 0.0;
  bool exempt = false;  // final short window: not drift-checked

  nlohmann::json to_json() const;
};

struct StreamParams {
  Index window = 512;           // K
  Index budget = 300;           // B
  Index queries_per_window = 20;  // Q
  double alpha = 0.05;
  Index kl_reps = 10;
  double tau = 0.03;
  UpdateParams update;
  QueryParams query;
  PriorMode prior = PriorMode::constant;
  LearnParams learn_params;
  bool learn = true;
  bool normalize_scores = true;
  std::uint64_t seed = 0;
};

/// Stream-AL as a step machine over a feature matrix read in windows.
class StreamActiveLearner {
 public:
  StreamActiveLearner(const Matrix& data, StreamParams params);

  std::optional<Index> next_query();
  std::optional<Index> pending() const;
  void feedback(Index id, Label y);

  const std::vector<HistoryRecord>& history() const { return history_; }
  const std::vector<DriftReport>& drift() const { return drift_; }
  const EnsembleModel& model() const { return model_; }
  const WeightVector& weights() const;
  Index spent() const { return spent_; }
  Index retained() const;
  Index windows_read() const { return next_window_; }
  Index anomalies_found() const;

 private:
  SparseScoreVector encode(Index id) const;
  void advance();
  void start_learner(std::vector<ScoredInstance> pool, Index budget);

  const Matrix* data_;
  StreamParams params_;
  std::vector<std::vector<Index>> windows_;
  Index next_window_ = 0;
  bool continuation_ = false;
  EnsembleModel model_;
  DriftBaseline baseline_;
  std::vector<Index> tree_age_;
  WeightVector w_;
  std::vector<Index> anomaly_ids_, nominal_ids_;
  std::vector<std::pair<Index, Index>> pool_;  // (id, arrival window)
  std::optional<BatchActiveLearner> learner_;
  std::unique_ptr<SubspaceCatalog> catalog_;
  std::mt19937_64 rng_;
  Index spent_ = 0;
  std::vector<HistoryRecord> history_;
  std::vector<DriftReport> drift_;
};

}  // namespace aad
