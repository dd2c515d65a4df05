#include "aad/iforest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace aad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Grower {
  const Matrix& data;
  int max_depth;
  std::mt19937_64& rng;
  std::vector<TreeNode>& nodes;

  int grow(std::vector<Index>& rows, std::size_t begin, std::size_t end, int depth, Box box) {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{});
    nodes[static_cast<std::size_t>(id)].depth = depth;
    nodes[static_cast<std::size_t>(id)].sample_count = end - begin;
    nodes[static_cast<std::size_t>(id)].box = box;
    if (end - begin <= 1 || depth >= max_depth) return id;

    const auto d = static_cast<int>(data.cols());
    std::uniform_int_distribution<int> pick(0, d - 1);
    for (int attempt = 0; attempt < d; ++attempt) {
      const int f = pick(rng);
      double lo = kInf, hi = -kInf;
      for (auto i = begin; i < end; ++i) {
        const double v = data(static_cast<Eigen::Index>(rows[i]), f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;
      std::uniform_real_distribution<double> cut(lo, hi);
      double split = cut(rng);
      if (split >= hi) split = lo;  // guard against rounding up to the upper bound
      const auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                      rows.begin() + static_cast<std::ptrdiff_t>(end), [&](Index r) {
                                        return data(static_cast<Eigen::Index>(r), f) <= split;
                                      }) -
                       rows.begin();
      Box left_box = box, right_box = box;
      left_box.hi[f] = split;
      right_box.lo[f] = split;
      const int l = grow(rows, begin, static_cast<std::size_t>(mid), depth + 1, std::move(left_box));
      const int r = grow(rows, static_cast<std::size_t>(mid), end, depth + 1, std::move(right_box));
      auto& node = nodes[static_cast<std::size_t>(id)];
      node.split_feature = f;
      node.split_value = split;
      node.left = l;
      node.right = r;
      return id;
    }
    return id;
  }
};

}  // namespace

int default_max_depth(Index subsample) {
  return static_cast<int>(std::ceil(std::log2(static_cast<double>(std::max<Index>(subsample, 1)))));
}

IsolationTree IsolationTree::grow(const Matrix& data, std::span<const Index> rows, int max_depth,
                                  std::mt19937_64& rng) {
  if (rows.empty()) throw ContractViolation("IsolationTree::grow: empty batch");
  IsolationTree tree;
  std::vector<Index> work(rows.begin(), rows.end());
  const auto d = data.cols();
  Box root{Vector::Constant(d, -kInf), Vector::Constant(d, kInf)};
  Grower g{data, max_depth, rng, tree.nodes_};
  g.grow(work, 0, work.size(), 0, std::move(root));
  tree.finalize(static_cast<Index>(d));
  return tree;
}

void IsolationTree::finalize(Index dim) {
  leaves_.clear();
  // Depth-first, left before right, so leaf numbering is structural.
  std::vector<int> stack{0};
  if (nodes_[0].box.lo.size() == 0) {
    nodes_[0].box = Box{Vector::Constant(static_cast<Eigen::Index>(dim), -kInf),
                        Vector::Constant(static_cast<Eigen::Index>(dim), kInf)};
  }
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      node.leaf_index = leaves_.size();
      leaves_.push_back(id);
      continue;
    }
    auto& l = nodes_[static_cast<std::size_t>(node.left)];
    auto& r = nodes_[static_cast<std::size_t>(node.right)];
    l.box = node.box;
    r.box = node.box;
    l.box.hi[node.split_feature] = node.split_value;
    r.box.lo[node.split_feature] = node.split_value;
    l.depth = node.depth + 1;
    r.depth = node.depth + 1;
    stack.push_back(node.right);
    stack.push_back(node.left);
  }
}

Index IsolationTree::leaf_of(const Eigen::Ref<const Vector>& x) const {
  const TreeNode* node = &nodes_[0];
  while (!node->is_leaf()) {
    node = &nodes_[static_cast<std::size_t>(x[node->split_feature] <= node->split_value ? node->left : node->right)];
  }
  return node->leaf_index;
}

nlohmann::json IsolationTree::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& n : nodes_) {
    arr.push_back({{"f", n.split_feature}, {"v", n.split_value}, {"l", n.left}, {"r", n.right},
                   {"n", n.sample_count}});
  }
  return arr;
}

IsolationTree IsolationTree::from_json(const nlohmann::json& j, Index dim) {
  IsolationTree tree;
  for (const auto& n : j) {
    TreeNode node;
    node.split_feature = n.at("f").get<int>();
    node.split_value = n.at("v").get<double>();
    node.left = n.at("l").get<int>();
    node.right = n.at("r").get<int>();
    node.sample_count = n.at("n").get<Index>();
    tree.nodes_.push_back(std::move(node));
  }
  if (tree.nodes_.empty()) throw std::runtime_error("IsolationTree::from_json: no nodes");
  tree.finalize(dim);
  return tree;
}

EnsembleModel::EnsembleModel(std::vector<IsolationTree> trees, Index dim) : trees_(std::move(trees)), dim_(dim) {
  Index offset = 0;
  for (Index t = 0; t < trees_.size(); ++t) {
    offsets_.push_back(offset);
    for (Index i = 0; i < trees_[t].leaf_count(); ++i) leaf_tree_.push_back(t);
    offset += trees_[t].leaf_count();
  }
}

const TreeNode& EnsembleModel::leaf(Index global) const {
  const Index t = leaf_tree_.at(global);
  return trees_[t].leaf(global - offsets_[t]);
}

Vector EnsembleModel::leaf_scores() const {
  Vector d(static_cast<Eigen::Index>(leaf_count()));
  for (Index i = 0; i < leaf_count(); ++i) d[static_cast<Eigen::Index>(i)] = leaf_score(i);
  return d;
}

EnsembleModel EnsembleModel::with_replaced(const std::vector<Index>& tree_ids,
                                           std::vector<IsolationTree> fresh) const {
  if (tree_ids.size() != fresh.size()) throw ContractViolation("with_replaced: id/tree count mismatch");
  auto trees = trees_;
  for (std::size_t i = 0; i < tree_ids.size(); ++i) trees.at(tree_ids[i]) = std::move(fresh[i]);
  return EnsembleModel(std::move(trees), dim_);
}

nlohmann::json EnsembleModel::to_json() const {
  nlohmann::json j;
  j["format"] = "aad-iforest";
  j["version"] = 1;
  j["dim"] = dim_;
  auto arr = nlohmann::json::array();
  for (const auto& t : trees_) arr.push_back(t.to_json());
  j["trees"] = std::move(arr);
  return j;
}

EnsembleModel EnsembleModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "aad-iforest" || j.value("version", 0) != 1)
    throw std::runtime_error("EnsembleModel::from_json: unsupported format");
  const auto dim = j.at("dim").get<Index>();
  std::vector<IsolationTree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(IsolationTree::from_json(t, dim));
  return EnsembleModel(std::move(trees), dim);
}

void EnsembleModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump();
}

EnsembleModel EnsembleModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return from_json(nlohmann::json::parse(in));
}

IsolationTree build_tree(const Matrix& data, std::span<const Index> rows, const ForestParams& params,
                         std::uint64_t seed) {
  if (rows.empty()) throw ContractViolation("build_tree: empty batch");
  if (params.subsample < 2) throw ContractViolation("build_tree: subsample must be >= 2");
  std::mt19937_64 rng(seed);
  const Index psi = std::min<Index>(params.subsample, rows.size());
  std::vector<Index> sample(rows.begin(), rows.end());
  // Partial Fisher-Yates: first psi entries are a uniform sample without replacement.
  for (Index i = 0; i < psi; ++i) {
    std::uniform_int_distribution<Index> pick(i, sample.size() - 1);
    std::swap(sample[i], sample[pick(rng)]);
  }
  sample.resize(psi);
  const int depth = params.max_depth > 0 ? params.max_depth : default_max_depth(psi);
  return IsolationTree::grow(data, sample, depth, rng);
}

EnsembleModel build_forest(const Matrix& data, std::span<const Index> rows, const ForestParams& params,
                           std::uint64_t seed) {
  if (params.trees < 1) throw ContractViolation("build_forest: need at least one tree");
  std::vector<IsolationTree> trees;
  trees.reserve(params.trees);
  for (Index t = 0; t < params.trees; ++t) trees.push_back(build_tree(data, rows, params, derive_seed(seed, t)));
  return EnsembleModel(std::move(trees), static_cast<Index>(data.cols()));
}

EnsembleModel build_forest(const Matrix& data, const ForestParams& params, std::uint64_t seed) {
  std::vector<Index> rows(static_cast<std::size_t>(data.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return build_forest(data, rows, params, seed);
}

SparseScoreVector transform_one(const EnsembleModel& model, const Eigen::Ref<const Vector>& x) {
  if (static_cast<Index>(x.size()) != model.dim()) throw ContractViolation("transform: dimension mismatch");
  SparseScoreVector z(static_cast<Eigen::Index>(model.leaf_count()));
  z.reserve(static_cast<Eigen::Index>(model.tree_count()));
  // Leaf ranges are contiguous and increasing by tree, so insertBack keeps order.
  for (Index t = 0; t < model.tree_count(); ++t) {
    const auto& tree = model.tree(t);
    const Index local = tree.leaf_of(x);
    z.insertBack(static_cast<Eigen::Index>(model.leaf_offset(t) + local)) =
        -static_cast<double>(tree.leaf(local).depth);
  }
  return z;
}

SparseScoreMatrix transform(const EnsembleModel& model, const Matrix& data, std::span<const Index> rows) {
  SparseScoreMatrix h(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(model.leaf_count()));
  h.reserve(Eigen::VectorXi::Constant(static_cast<Eigen::Index>(rows.size()),
                                      static_cast<int>(model.tree_count())));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector x = data.row(static_cast<Eigen::Index>(rows[i])).transpose();
    for (Index t = 0; t < model.tree_count(); ++t) {
      const auto& tree = model.tree(t);
      const Index local = tree.leaf_of(x);
      h.insert(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(model.leaf_offset(t) + local)) =
          -static_cast<double>(tree.leaf(local).depth);
    }
  }
  h.makeCompressed();
  return h;
}

SparseScoreMatrix transform(const EnsembleModel& model, const Matrix& data) {
  std::vector<Index> rows(static_cast<std::size_t>(data.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return transform(model, data, rows);
}

int Subspace::rule_length() const {
  int n = 0;
  for (Eigen::Index j = 0; j < box.lo.size(); ++j) {
    n += std::isfinite(box.lo[j]) ? 1 : 0;
    n += std::isfinite(box.hi[j]) ? 1 : 0;
  }
  return n;
}

std::vector<Subspace> leaf_subspaces(const EnsembleModel& model) {
  std::vector<Subspace> out;
  out.reserve(model.leaf_count());
  for (Index i = 0; i < model.leaf_count(); ++i) {
    const auto& leaf = model.leaf(i);
    Subspace s;
    s.leaf = i;
    s.box = leaf.box;
    s.depth = leaf.depth;
    s.score = -static_cast<double>(leaf.depth);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace aad
