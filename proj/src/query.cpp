#include "aad/query.hpp"

#include <algorithm>
#include <numeric>

namespace aad {

Strategy parse_strategy(const std::string& name) {
  if (name == "top") return Strategy::top;
  if (name == "diverse") return Strategy::diverse;
  if (name == "random-top") return Strategy::random_top;
  throw std::invalid_argument("unknown query strategy '" + name + "' (expected top | diverse | random-top)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::top:
      return "top";
    case Strategy::diverse:
      return "diverse";
    case Strategy::random_top:
      return "random-top";
  }
  return "top";
}

namespace {

std::vector<Index> ranked_positions(const std::vector<ScoredInstance>& pool, const Vector& scores, Index n) {
  std::vector<Index> order(pool.size());
  std::iota(order.begin(), order.end(), Index{0});
  const auto k = std::min<std::size_t>(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), [&](Index a, Index b) {
    const double sa = scores[static_cast<Eigen::Index>(a)], sb = scores[static_cast<Eigen::Index>(b)];
    return sa != sb ? sa > sb : pool[a].id < pool[b].id;
  });
  order.resize(k);
  return order;
}

}  // namespace

QueryBatch select_top(const std::vector<ScoredInstance>& pool, const Vector& scores, Index b) {
  if (b < 1) throw ContractViolation("select_top: b must be >= 1");
  QueryBatch out;
  out.strategy = Strategy::top;
  out.selected = ranked_positions(pool, scores, b);
  out.candidates = out.selected;
  out.truncated = pool.size() < b;
  return out;
}

QueryBatch select_random_top(const std::vector<ScoredInstance>& pool, const Vector& scores, Index b, Index n,
                             std::mt19937_64& rng) {
  if (b < 1 || n < b) throw ContractViolation("select_random_top: need n >= b >= 1");
  QueryBatch out;
  out.strategy = Strategy::random_top;
  out.candidates = ranked_positions(pool, scores, n);
  out.truncated = pool.size() < b;
  auto picks = out.candidates;
  const auto take = std::min<std::size_t>(b, picks.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, picks.size() - 1);
    std::swap(picks[i], picks[pick(rng)]);
  }
  picks.resize(take);
  out.selected = std::move(picks);
  return out;
}

std::vector<std::vector<Index>> description_membership(const Description& description,
                                                       const std::vector<const SparseScoreVector*>& instances) {
  std::vector<std::vector<Index>> out;
  for (const auto* z : instances) {
    std::vector<Index> row;
    for (auto leaf : description.leaves) {
      if (in_leaf(*z, leaf)) row.push_back(leaf);
    }
    out.push_back(std::move(row));
  }
  return out;
}

namespace {

Index shared(const std::vector<Index>& a, const std::vector<Index>& b) {
  Index n = 0;
  for (auto x : a) n += std::binary_search(b.begin(), b.end(), x) ? 1 : 0;
  return n;
}

}  // namespace

double mean_pairwise_overlap(const std::vector<std::vector<Index>>& membership, const std::vector<Index>& batch) {
  if (batch.size() < 2) return 0.0;
  double total = 0.0;
  Index pairs = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = i + 1; j < batch.size(); ++j) {
      total += static_cast<double>(shared(membership[batch[i]], membership[batch[j]]));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

QueryBatch select_diverse(const SubspaceCatalog& catalog, const WeightVector& w,
                          const std::vector<ScoredInstance>& pool, const Vector& scores, Index b, Index n,
                          Index delta) {
  if (b < 1 || n < b) throw ContractViolation("select_diverse: need n >= b >= 1");
  QueryBatch out;
  out.strategy = Strategy::diverse;
  out.candidates = ranked_positions(pool, scores, n);
  out.truncated = pool.size() < b;
  if (out.candidates.empty()) return out;

  std::vector<const SparseScoreVector*> zs;
  for (auto pos : out.candidates) zs.push_back(&pool[pos].z);
  const auto description = compact_description(catalog, w, zs, delta);
  const auto membership = description_membership(description, zs);

  std::vector<bool> taken(out.candidates.size(), false);
  std::vector<Index> picked;  // candidate slots
  const auto take = std::min<std::size_t>(b, out.candidates.size());
  while (picked.size() < take) {
    std::size_t best = out.candidates.size();
    Index best_overlap = 0;
    for (std::size_t c = 0; c < out.candidates.size(); ++c) {
      if (taken[c]) continue;
      Index overlap = 0;
      for (auto p : picked) overlap += shared(membership[c], membership[p]);
      // Candidates are already in descending score / ascending id order.
      if (best == out.candidates.size() || overlap < best_overlap) {
        best = c;
        best_overlap = overlap;
      }
    }
    taken[best] = true;
    picked.push_back(best);
  }
  for (auto slot : picked) out.selected.push_back(out.candidates[slot]);
  return out;
}

QuerySelector make_selector(const QueryParams& params, const SubspaceCatalog* catalog, std::mt19937_64* rng) {
  switch (params.strategy) {
    case Strategy::top:
      if (params.batch <= 1) return greedy_selector();
      return [b = params.batch](const std::vector<ScoredInstance>& pool, const Vector& scores, const WeightVector&) {
        return select_top(pool, scores, b).selected;
      };
    case Strategy::random_top:
      if (!rng) throw ContractViolation("make_selector: random-top needs an rng");
      return [b = params.batch, n = params.candidates, rng](const std::vector<ScoredInstance>& pool,
                                                             const Vector& scores, const WeightVector&) {
        return select_random_top(pool, scores, b, n, *rng).selected;
      };
    case Strategy::diverse:
      if (!catalog) throw ContractViolation("make_selector: diverse needs a subspace catalog");
      return [b = params.batch, n = params.candidates, delta = params.delta, catalog](
                 const std::vector<ScoredInstance>& pool, const Vector& scores, const WeightVector& w) {
        return select_diverse(*catalog, w, pool, scores, b, n, delta).selected;
      };
  }
  return greedy_selector();
}

}  // namespace aad
