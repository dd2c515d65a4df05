#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "aad/types.hpp"

namespace aad {

/// Unit-norm uniform weights [1/sqrt(m), ...].
inline WeightVector uniform_weights(Index m) {
  return WeightVector::Constant(static_cast<Eigen::Index>(m), 1.0 / std::sqrt(static_cast<double>(m)));
}

WeightVector random_unit_weights(Index m, std::mt19937_64& rng);

/// w . z over the nonzeros of z.
double score(const WeightVector& w, const SparseScoreVector& z);

/// z / ||z||; throws ContractViolation on an all-zero vector.
SparseScoreVector normalize_scores(const SparseScoreVector& z);

/// Hinge loss against threshold q: anomalies (y=+1) are penalized below q,
/// nominals (y=-1) at or above it.
template <typename Scalar>
Scalar hinge_loss(Scalar q, Scalar wz, Label y) {
  if (y == Label::anomaly) return wz >= q ? Scalar(0) : q - wz;
  return wz < q ? Scalar(0) : wz - q;
}

inline double hinge_loss(double q, const WeightVector& w, const SparseScoreVector& z, Label y) {
  return hinge_loss(q, score(w, z), y);
}

struct ScoredInstance {
  Index id = 0;
  SparseScoreVector z;
};

enum class PriorMode {
  decaying,  // lambda = 0.5 / (|H+| + |H-|), 0.5 with no labels
  constant,  // lambda = 0.5 (streaming setting)
  none,      // lambda = 0
};

struct FeedbackState {
  std::vector<ScoredInstance> unlabeled;
  std::vector<ScoredInstance> anomalies;
  std::vector<ScoredInstance> nominals;
  double tau = 0.03;
  PriorMode prior = PriorMode::decaying;

  double lambda() const;
  Index labeled() const { return anomalies.size() + nominals.size(); }
  Index total() const { return unlabeled.size() + labeled(); }
};

/// Instance ranked at position ceil(n * tau) (descending score, ties by id)
/// among all instances of the state, under the previous weights.
struct QuantileAnchor {
  Index id = 0;
  SparseScoreVector z_tau;
  double q_hat = 0.0;
};

QuantileAnchor quantile_anchor(const FeedbackState& state, const WeightVector& w_prev);

/// Per-class averaged hinge losses against both anchors plus the prior
/// lambda * ||w - w_unif||^2. Anchors are frozen at construction; the
/// second anchor's score z_tau . w moves with w.
class AadObjective {
 public:
  AadObjective(const FeedbackState& state, QuantileAnchor anchor, WeightVector w_unif);

  double value(const WeightVector& w) const;
  /// Subgradient; zero at hinge kinks.
  WeightVector gradient(const WeightVector& w) const;

 private:
  const FeedbackState* state_;
  QuantileAnchor anchor_;
  WeightVector w_unif_;
  double lambda_;
};

struct LearnParams {
  double step = 0.01;
  int max_steps = 1000;
  double tolerance = 1e-8;
};

/// Gradient descent on AadObjective starting at w_prev; result has unit norm.
/// Returns w_prev unchanged when there are no labels.
WeightVector learn_weights(const FeedbackState& state, const WeightVector& w_prev, const LearnParams& params = {});

struct HistoryRecord {
  Index iter = 0;  // 1-based query count
  Index queried_id = 0;
  Label label = Label::nominal;
  Index anomalies_so_far = 0;
  std::uint64_t score_hash = 0;
};

/// Chooses positions (into `pool`) to query next, best first.
using QuerySelector =
    std::function<std::vector<Index>(const std::vector<ScoredInstance>& pool, const Vector& scores,
                                     const WeightVector& w)>;

/// Greedy argmax over the pool, ties to the lowest id.
QuerySelector greedy_selector();

/// Step-wise Batch-AL engine: next_query() proposes, feedback() applies the
/// label and relearns once the current query batch is fully labeled.
class BatchActiveLearner {
 public:
  BatchActiveLearner(FeedbackState state, WeightVector w0, Index budget, QuerySelector selector = greedy_selector(),
                     LearnParams params = {}, bool learn = true);

  /// Pending query, selecting a new batch when none is outstanding.
  /// Empty once the budget or the pool is exhausted.
  std::optional<Index> next_query();
  /// Pending query without selecting.
  std::optional<Index> pending() const;
  /// Throws ContractViolation unless `id` is the pending query.
  void feedback(Index id, Label y);

  const WeightVector& weights() const { return w_; }
  const FeedbackState& state() const { return state_; }
  FeedbackState& mutable_state() { return state_; }
  void set_weights(WeightVector w) { w_ = std::move(w); }
  const std::vector<HistoryRecord>& history() const { return history_; }
  Index budget_remaining() const { return budget_ - spent_; }
  void add_budget(Index more) { budget_ += more; }
  Index spent() const { return spent_; }
  /// Scores of the unlabeled pool under the current weights.
  Vector pool_scores() const;
  Index anomalies_found() const { return state_.anomalies.size(); }
  void set_query_offset(Index offset) { iter_offset_ = offset; }

 private:
  std::uint64_t snapshot_hash() const;

  FeedbackState state_;
  WeightVector w_;
  Index budget_;
  Index spent_ = 0;
  Index iter_offset_ = 0;
  QuerySelector selector_;
  LearnParams params_;
  bool learn_;
  std::vector<Index> queue_;
  std::vector<HistoryRecord> history_;
};

struct BatchResult {
  WeightVector w;
  FeedbackState state;
  std::vector<HistoryRecord> history;
  Index iterations = 0;
};

/// Runs B queries (or until the pool is exhausted) against a label source.
BatchResult batch_al(Index budget, WeightVector w0, FeedbackState state, const std::function<Label(Index)>& oracle,
                     QuerySelector selector = greedy_selector(), const LearnParams& params = {}, bool learn = true);

}  // namespace aad
