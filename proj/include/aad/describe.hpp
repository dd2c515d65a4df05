#pragma once

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "aad/active.hpp"
#include "aad/iforest.hpp"

namespace aad {

/// Data bounding box widened by `margin` of its range on each side. A
/// constant dimension gets a unit-width box around its value.
Box clipping_box(const Box& data_box, double margin = 0.05);

/// Sum of log widths of `box` intersected with `clip`.
double log_volume(const Box& box, const Box& clip);

/// Leaf subspaces of a model with clipped log-volumes and relevance a = w o d.
class SubspaceCatalog {
 public:
  SubspaceCatalog(const EnsembleModel& model, const Box& data_box, double margin = 0.05);

  Index size() const { return subspaces_.size(); }
  const Subspace& operator[](Index leaf) const { return subspaces_[leaf]; }
  const std::vector<Subspace>& subspaces() const { return subspaces_; }
  void set_relevance(const WeightVector& w);
  /// Log-volume of the clipping box itself.
  double clip_log_volume() const { return clip_log_volume_; }

 private:
  std::vector<Subspace> subspaces_;
  double clip_log_volume_ = 0.0;
};

/// Among the leaves containing an instance (the support of its score
/// vector), the delta with highest relevance w_i * d_i; ties to lower leaf.
std::vector<Index> top_relevant_subspaces(const WeightVector& w, const Vector& leaf_scores,
                                          const SparseScoreVector& z, Index delta);
std::vector<Index> top_relevant_subspaces(const EnsembleModel& model, const WeightVector& w,
                                          const Eigen::Ref<const Vector>& x, Index delta);

/// Weighted set cover: choose candidates so that every instance is covered.
struct CoverProblem {
  /// covering[i]: candidate positions containing instance i (row i of U).
  std::vector<std::vector<Index>> covering;
  Vector cost;
  /// Tie-break data per candidate.
  std::vector<int> rule_length;
  std::vector<Index> leaf;

  Index candidates() const { return static_cast<Index>(cost.size()); }
  Index instances() const { return covering.size(); }
};

struct CoverSolution {
  std::vector<Index> selected;  // candidate positions, ascending
  double cost = 0.0;
  bool exact = false;
};

struct InfeasibleCover : std::runtime_error {
  InfeasibleCover(Index instance);
  Index instance;
};

/// Branch-and-bound for k <= exact_limit candidates, greedy cost-effectiveness
/// otherwise. Ties: lower cost, fewer sets, shorter total rule length,
/// lexicographically smaller leaf ids.
CoverSolution solve_set_cover(const CoverProblem& problem, Index exact_limit = 25);
CoverSolution solve_set_cover_exact(const CoverProblem& problem);
CoverSolution solve_set_cover_greedy(const CoverProblem& problem);

/// Evaluates the cost of a selection summed in ascending position order.
double cover_cost(const CoverProblem& problem, const std::vector<Index>& selected);
bool covers_all(const CoverProblem& problem, const std::vector<Index>& selected);

struct Predicate {
  Index feature = 0;
  bool greater = false;  // true: x[f] > threshold, false: x[f] <= threshold
  double threshold = 0.0;

  bool operator==(const Predicate&) const = default;
};

using Conjunction = std::vector<Predicate>;

/// Disjunction of conjunctions of feature-range predicates.
struct RuleSet {
  std::vector<Conjunction> disjuncts;

  bool empty() const { return disjuncts.empty(); }
  bool matches(const Eigen::Ref<const Vector>& x) const;
  bool operator==(const RuleSet&) const = default;
};

/// One conjunction per box: for each feature in ascending order, the finite
/// lower bound (>) then the finite upper bound (<=).
Conjunction box_to_conjunction(const Box& box);
RuleSet rules_from_subspaces(const SubspaceCatalog& catalog, const std::vector<Index>& leaves);

/// "(x0 > 1.500000)" / "((x0 > 1.000000) & (x1 <= 2.000000)) or (...)";
/// "false" when empty, "true" for an unconstrained conjunction.
std::string rules_to_text(const RuleSet& rules);
RuleSet parse_rules(const std::string& text);
nlohmann::json rules_to_json(const RuleSet& rules);
RuleSet rules_from_json(const nlohmann::json& j);

struct Description {
  std::vector<Index> leaves;      // selected subspaces (leaf ids)
  std::vector<Index> candidates;  // candidate leaf ids
  RuleSet rules;
  bool exact = false;
};

/// Minimum-volume cover of `targets` by their delta most relevant leaves.
Description compact_description(const SubspaceCatalog& catalog, const WeightVector& w,
                                 const std::vector<const SparseScoreVector*>& targets, Index delta = 5);

struct DescribedInstance {
  const SparseScoreVector* z = nullptr;
  Label label = Label::nominal;
};

struct InterpretableParams {
  Index delta = 5;
  /// Pseudo-nominals sampled from the unlabeled pool; capped at its size.
  Index pseudo_nominals = 128;
  double precision_threshold = 0.4;
  double complexity_weight = 1.0;
  std::uint64_t seed = 0;
};

struct InterpretableDescription {
  Description description;
  std::vector<double> precision;  // per kept leaf
  std::vector<Index> pseudo_nominals;  // positions into the unlabeled list
  bool all_filtered = false;
};

/// Covers labeled anomalies with subspaces costed by v(1 + eta) + c * 2^(len-1),
/// then keeps subspaces whose precision over labeled plus pseudo-nominal
/// instances reaches the threshold.
InterpretableDescription interpretable_description(const SubspaceCatalog& catalog, const WeightVector& w,
                                                   const std::vector<DescribedInstance>& labeled,
                                                   const std::vector<const SparseScoreVector*>& unlabeled,
                                                   const InterpretableParams& params);

/// Leaf membership through the score-vector support.
bool in_leaf(const SparseScoreVector& z, Index leaf);

}  // namespace aad
