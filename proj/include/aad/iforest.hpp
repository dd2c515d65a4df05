#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "aad/data.hpp"
#include "aad/types.hpp"

namespace aad {

/// One node of an isolation tree. Internal nodes route x left iff
/// x[split_feature] <= split_value.
struct TreeNode {
  int split_feature = -1;  // -1 for leaves
  double split_value = 0.0;
  int left = -1;
  int right = -1;
  int depth = 0;
  Index sample_count = 0;
  Box box;
  Index leaf_index = 0;  // position within the owning tree's leaf list

  bool is_leaf() const { return split_feature < 0; }
};

class IsolationTree {
 public:
  /// Grows a tree on `rows` of `data` (all rows are used; subsampling
  /// happens in the caller).
  static IsolationTree grow(const Matrix& data, std::span<const Index> rows, int max_depth,
                            std::mt19937_64& rng);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const std::vector<int>& leaves() const { return leaves_; }
  Index leaf_count() const { return leaves_.size(); }

  /// Local leaf index (0..leaf_count) of the leaf containing x.
  Index leaf_of(const Eigen::Ref<const Vector>& x) const;
  const TreeNode& leaf(Index local) const { return nodes_[static_cast<std::size_t>(leaves_[local])]; }

  nlohmann::json to_json() const;
  static IsolationTree from_json(const nlohmann::json& j, Index dim);

 private:
  void finalize(Index dim);

  std::vector<TreeNode> nodes_;
  std::vector<int> leaves_;
};

struct ForestParams {
  Index trees = 100;
  Index subsample = 256;
  /// 0 selects ceil(log2(subsample)).
  int max_depth = 0;
};

int default_max_depth(Index subsample);

/// Isolation forest viewed as an ensemble of its leaves. Leaves of tree t
/// occupy the contiguous global range [leaf_offset(t), leaf_offset(t) + count).
class EnsembleModel {
 public:
  EnsembleModel() = default;
  EnsembleModel(std::vector<IsolationTree> trees, Index dim);

  Index tree_count() const { return trees_.size(); }
  Index leaf_count() const { return leaf_tree_.size(); }
  Index dim() const { return dim_; }
  const IsolationTree& tree(Index t) const { return trees_[t]; }
  const std::vector<IsolationTree>& trees() const { return trees_; }
  Index leaf_offset(Index t) const { return offsets_[t]; }
  Index tree_of_leaf(Index leaf) const { return leaf_tree_[leaf]; }
  const TreeNode& leaf(Index global) const;
  /// Raw leaf score d_i = -depth.
  double leaf_score(Index global) const { return -static_cast<double>(leaf(global).depth); }
  Vector leaf_scores() const;

  /// Replaces the listed trees; other trees keep their structure. Global
  /// leaf indices are re-laid out.
  EnsembleModel with_replaced(const std::vector<Index>& tree_ids, std::vector<IsolationTree> fresh) const;

  nlohmann::json to_json() const;
  static EnsembleModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static EnsembleModel load(const std::filesystem::path& path);

 private:
  std::vector<IsolationTree> trees_;
  std::vector<Index> offsets_;
  std::vector<Index> leaf_tree_;
  Index dim_ = 0;
};

/// Builds T trees, each on an independent uniform subsample drawn without
/// replacement (capped at the batch size). Per-tree seeds are derived from
/// `seed` so trees can be rebuilt independently.
EnsembleModel build_forest(const Matrix& data, std::span<const Index> rows, const ForestParams& params,
                           std::uint64_t seed);
EnsembleModel build_forest(const Matrix& data, const ForestParams& params, std::uint64_t seed);

/// Single tree on a fresh subsample of `rows`.
IsolationTree build_tree(const Matrix& data, std::span<const Index> rows, const ForestParams& params,
                         std::uint64_t seed);

/// Sparse leaf-score vector: value -depth at the containing leaf of each tree.
SparseScoreVector transform_one(const EnsembleModel& model, const Eigen::Ref<const Vector>& x);
SparseScoreMatrix transform(const EnsembleModel& model, const Matrix& data);
SparseScoreMatrix transform(const EnsembleModel& model, const Matrix& data, std::span<const Index> rows);

/// Leaf region with its raw score, volume and relevance.
struct Subspace {
  Index leaf = 0;
  Box box;
  int depth = 0;
  double score = 0.0;       // d_i = -depth
  double log_volume = 0.0;  // of the clipped box
  double relevance = 0.0;   // a_i = w_i * d_i

  /// Number of finite bounds (rule predicates).
  int rule_length() const;
};

std::vector<Subspace> leaf_subspaces(const EnsembleModel& model);

}  // namespace aad
