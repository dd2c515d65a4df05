#pragma once

#include <random>
#include <string>
#include <vector>

#include "aad/active.hpp"
#include "aad/describe.hpp"

namespace aad {

enum class Strategy { top, diverse, random_top };

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy s);

struct QueryBatch {
  std::vector<Index> selected;    // pool positions, in selection order
  std::vector<Index> candidates;  // pool positions of the top-n candidates
  Strategy strategy = Strategy::top;
  bool truncated = false;         // pool smaller than requested
};

/// b highest scores; ties to lower id.
QueryBatch select_top(const std::vector<ScoredInstance>& pool, const Vector& scores, Index b);

/// Uniform sample of b among the n top-scored.
QueryBatch select_random_top(const std::vector<ScoredInstance>& pool, const Vector& scores, Index b, Index n,
                             std::mt19937_64& rng);

/// Candidates are the n top-scored instances; their compact description S*
/// is computed and instances are picked one at a time, preferring the
/// fewest S* subspaces shared with already-picked instances, then higher
/// score, then lower id.
QueryBatch select_diverse(const SubspaceCatalog& catalog, const WeightVector& w,
                          const std::vector<ScoredInstance>& pool, const Vector& scores, Index b, Index n,
                          Index delta = 5);

/// Membership of each candidate in the subspaces of a description.
std::vector<std::vector<Index>> description_membership(const Description& description,
                                                       const std::vector<const SparseScoreVector*>& instances);

/// Sum over pairs in `batch` of shared subspaces, divided by the pair count.
double mean_pairwise_overlap(const std::vector<std::vector<Index>>& membership, const std::vector<Index>& batch);

struct QueryParams {
  Strategy strategy = Strategy::top;
  Index batch = 3;       // b
  Index candidates = 10; // n
  Index delta = 5;
};

/// Adapts a strategy to the Batch-AL engine. `catalog` is required for
/// the diverse strategy; `rng` for random-top. Both must outlive the selector.
QuerySelector make_selector(const QueryParams& params, const SubspaceCatalog* catalog, std::mt19937_64* rng);

}  // namespace aad
