#include "aad/stream.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace aad {

Vector tree_distribution(const IsolationTree& tree, const Matrix& data, std::span<const Index> rows,
                         double smoothing) {
  if (rows.empty()) throw ContractViolation("tree_distribution: empty batch");
  Vector p = Vector::Constant(static_cast<Eigen::Index>(tree.leaf_count()), smoothing);
  for (auto r : rows) {
    const Vector x = data.row(static_cast<Eigen::Index>(r)).transpose();
    p[static_cast<Eigen::Index>(tree.leaf_of(x))] += 1.0;
  }
  return p / p.sum();
}

std::vector<Vector> ensemble_distribution(const EnsembleModel& model, const Matrix& data,
                                          std::span<const Index> rows, double smoothing) {
  std::vector<Vector> out;
  out.reserve(model.tree_count());
  for (const auto& tree : model.trees()) out.push_back(tree_distribution(tree, data, rows, smoothing));
  return out;
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractViolation("empirical_quantile: no values");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Vector per_tree_kl(const EnsembleModel& model, const Matrix& data, std::span<const Index> a,
                   std::span<const Index> b) {
  Vector kl(static_cast<Eigen::Index>(model.tree_count()));
  for (Index t = 0; t < model.tree_count(); ++t) {
    kl[static_cast<Eigen::Index>(t)] =
        kl_divergence(tree_distribution(model.tree(t), data, a), tree_distribution(model.tree(t), data, b));
  }
  return kl;
}

double kl_threshold(const EnsembleModel& model, const Matrix& data, std::span<const Index> rows, double alpha,
                    Index reps, std::mt19937_64& rng) {
  if (rows.size() < 2) throw ContractViolation("kl_threshold: need at least two instances");
  if (reps < 1) throw ContractViolation("kl_threshold: need at least one repetition");
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(model.tree_count()));
  std::vector<Index> shuffled(rows.begin(), rows.end());
  const auto half = shuffled.size() / 2;
  for (Index r = 0; r < reps; ++r) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    mean += per_tree_kl(model, data, std::span<const Index>(shuffled.data(), half),
                        std::span<const Index>(shuffled.data() + half, shuffled.size() - half));
  }
  mean /= static_cast<double>(reps);
  return empirical_quantile(std::vector<double>(mean.begin(), mean.end()), 1.0 - alpha);
}

DriftBaseline make_baseline(const EnsembleModel& model, const Matrix& data, std::span<const Index> rows, double alpha,
                            Index reps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DriftBaseline b;
  b.alpha = alpha;
  b.reps = reps;
  b.q_kl = kl_threshold(model, data, rows, alpha, reps, rng);
  b.distributions = ensemble_distribution(model, data, rows);
  return b;
}

UpdateResult update_model(const Matrix& data, std::span<const Index> rows, const EnsembleModel& model,
                          const DriftBaseline& baseline, const UpdateParams& params, std::uint64_t seed,
                          std::span<const Index> tree_age) {
  const Index trees = model.tree_count();
  UpdateResult out;
  out.kl = Vector::Zero(static_cast<Eigen::Index>(trees));
  for (Index t = 0; t < trees; ++t) {
    out.kl[static_cast<Eigen::Index>(t)] =
        kl_divergence(baseline.distributions.at(t), tree_distribution(model.tree(t), data, rows));
  }
  out.kl_max = trees > 0 ? out.kl.maxCoeff() : 0.0;

  std::vector<Index> replace;
  switch (params.policy) {
    case ReplacePolicy::kl:
      for (Index t = 0; t < trees; ++t) {
        if (out.kl[static_cast<Eigen::Index>(t)] > baseline.q_kl) replace.push_back(t);
      }
      if (static_cast<double>(replace.size()) < 2.0 * baseline.alpha * static_cast<double>(trees)) replace.clear();
      break;
    case ReplacePolicy::fixed_fraction: {
      std::vector<Index> order(trees);
      std::iota(order.begin(), order.end(), Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        const Index age_a = tree_age.empty() ? 0 : tree_age[a];
        const Index age_b = tree_age.empty() ? 0 : tree_age[b];
        return age_a < age_b;
      });
      const auto n = static_cast<Index>(std::llround(params.replace_fraction * static_cast<double>(trees)));
      replace.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n, trees)));
      std::sort(replace.begin(), replace.end());
      break;
    }
    case ReplacePolicy::never:
      break;
  }

  out.leaf_map.resize(model.leaf_count());
  if (replace.empty()) {
    out.model = model;
    out.baseline = baseline;
    std::iota(out.leaf_map.begin(), out.leaf_map.end(), 0L);
    return out;
  }

  std::vector<IsolationTree> fresh;
  for (auto t : replace) fresh.push_back(build_tree(data, rows, params.forest, derive_seed(seed, t)));
  out.model = model.with_replaced(replace, std::move(fresh));
  out.replaced = replace;
  std::vector<bool> gone(trees, false);
  for (auto t : replace) gone[t] = true;
  for (Index leaf = 0; leaf < model.leaf_count(); ++leaf) {
    const Index t = model.tree_of_leaf(leaf);
    out.leaf_map[leaf] =
        gone[t] ? -1L : static_cast<long>(out.model.leaf_offset(t) + (leaf - model.leaf_offset(t)));
  }
  out.baseline = make_baseline(out.model, data, rows, baseline.alpha, baseline.reps, derive_seed(seed, trees + 1));
  return out;
}

WeightVector remap_weights(const WeightVector& w, const std::vector<long>& leaf_map, Index new_leaf_count) {
  const double v = 1.0 / std::sqrt(static_cast<double>(new_leaf_count));
  WeightVector out = WeightVector::Constant(static_cast<Eigen::Index>(new_leaf_count), v);
  for (std::size_t old = 0; old < leaf_map.size(); ++old) {
    if (leaf_map[old] >= 0) out[leaf_map[old]] = w[static_cast<Eigen::Index>(old)];
  }
  return out / out.norm();
}

std::vector<RetainEntry> merge_and_retain(const WeightVector& w, std::vector<RetainEntry> entries, Index keep) {
  if (keep < 1) throw ContractViolation("merge_and_retain: K must be >= 1");
  if (entries.size() <= keep) return entries;
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < entries.size(); ++i) ranked.emplace_back(score(w, entries[i].instance.z), i);
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                    [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      const auto& ea = entries[a.second];
                      const auto& eb = entries[b.second];
                      if (ea.window != eb.window) return ea.window > eb.window;
                      return ea.instance.id < eb.instance.id;
                    });
  std::vector<RetainEntry> out;
  for (Index i = 0; i < keep; ++i) out.push_back(std::move(entries[ranked[i].second]));
  return out;
}

nlohmann::json DriftReport::to_json() const {
  return {{"window", window}, {"n_trees_replaced", n_trees_replaced}, {"q_kl", q_kl}, {"kl_max", kl_max}};
}

StreamActiveLearner::StreamActiveLearner(const Matrix& data, StreamParams params)
    : data_(&data), params_(std::move(params)), rng_(derive_seed(params_.seed, 7)) {
  if (data.rows() == 0) throw ContractViolation("stream_al: empty stream");
  if (params_.queries_per_window < 1 || params_.budget < params_.queries_per_window)
    throw ContractViolation("stream_al: need B >= Q >= 1");
  if (params_.window < 1) throw ContractViolation("stream_al: window size must be >= 1");
  for (Index start = 0; start < static_cast<Index>(data.rows()); start += params_.window) {
    std::vector<Index> batch(std::min<Index>(params_.window, static_cast<Index>(data.rows()) - start));
    std::iota(batch.begin(), batch.end(), start);
    windows_.push_back(std::move(batch));
  }
  const auto& first = windows_.front();
  model_ = build_forest(data, first, params_.update.forest, derive_seed(params_.seed, 0));
  tree_age_.assign(model_.tree_count(), 0);
  if (first.size() >= 2) {
    baseline_ = make_baseline(model_, data, first, params_.alpha, params_.kl_reps, derive_seed(params_.seed, 1));
  } else {
    baseline_.distributions = ensemble_distribution(model_, data, first);
    baseline_.alpha = params_.alpha;
  }
  w_ = uniform_weights(model_.leaf_count());
}

SparseScoreVector StreamActiveLearner::encode(Index id) const {
  auto z = transform_one(model_, data_->row(static_cast<Eigen::Index>(id)).transpose());
  return params_.normalize_scores ? normalize_scores(z) : z;
}

const WeightVector& StreamActiveLearner::weights() const { return learner_ ? learner_->weights() : w_; }

Index StreamActiveLearner::retained() const { return learner_ ? learner_->state().unlabeled.size() : pool_.size(); }

Index StreamActiveLearner::anomalies_found() const {
  return learner_ ? learner_->state().anomalies.size() : anomaly_ids_.size();
}

void StreamActiveLearner::start_learner(std::vector<ScoredInstance> pool, Index budget) {
  FeedbackState state;
  state.tau = params_.tau;
  state.prior = params_.prior;
  state.unlabeled = std::move(pool);
  for (auto id : anomaly_ids_) state.anomalies.push_back({id, encode(id)});
  for (auto id : nominal_ids_) state.nominals.push_back({id, encode(id)});
  QuerySelector selector;
  if (params_.query.strategy == Strategy::diverse) {
    // Clip by the data seen so far.
    std::vector<Index> seen;
    for (Index w = 0; w < next_window_; ++w) seen.insert(seen.end(), windows_[w].begin(), windows_[w].end());
    Matrix rows(static_cast<Eigen::Index>(seen.size()), data_->cols());
    for (std::size_t i = 0; i < seen.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = data_->row(static_cast<Eigen::Index>(seen[i]));
    catalog_ = std::make_unique<SubspaceCatalog>(model_, Box{rows.colwise().minCoeff().transpose(),
                                                             rows.colwise().maxCoeff().transpose()});
    selector = make_selector(params_.query, catalog_.get(), &rng_);
  } else {
    selector = make_selector(params_.query, nullptr, &rng_);
  }
  learner_.emplace(std::move(state), w_, budget, std::move(selector), params_.learn_params, params_.learn);
  learner_->set_query_offset(spent_);
}

void StreamActiveLearner::advance() {
  // Fold the finished per-window learner back into the stream state.
  if (learner_) {
    w_ = learner_->weights();
    pool_.erase(std::remove_if(pool_.begin(), pool_.end(),
                               [&](const auto& e) {
                                 const auto& un = learner_->state().unlabeled;
                                 return std::none_of(un.begin(), un.end(),
                                                     [&](const ScoredInstance& s) { return s.id == e.first; });
                               }),
                pool_.end());
    learner_.reset();
  }

  const Index t = next_window_++;
  const auto& rows = windows_[t];
  const bool last = next_window_ == windows_.size();
  if (t > 0) {
    DriftReport report;
    report.window = t;
    report.exempt = last && rows.size() < params_.window;
    if (!report.exempt) {
      const auto upd = update_model(*data_, rows, model_, baseline_, params_.update,
                                    derive_seed(params_.seed, 1000 + t), tree_age_);
      report.n_trees_replaced = upd.replaced.size();
      report.kl_max = upd.kl_max;
      report.q_kl = baseline_.q_kl;
      if (!upd.replaced.empty()) {
        w_ = remap_weights(w_, upd.leaf_map, upd.model.leaf_count());
        model_ = upd.model;
        baseline_ = upd.baseline;
        for (auto tree : upd.replaced) tree_age_[tree] = t;
      }
    } else {
      report.q_kl = baseline_.q_kl;
    }
    drift_.push_back(report);
  }

  // Retained instances are re-encoded under the current model.
  std::vector<RetainEntry> entries;
  for (const auto& [id, window] : pool_) entries.push_back({{id, encode(id)}, window});
  for (auto id : rows) entries.push_back({{id, encode(id)}, t});
  auto kept = merge_and_retain(w_, std::move(entries), params_.window);
  pool_.clear();
  std::vector<ScoredInstance> pool;
  for (auto& e : kept) {
    pool_.emplace_back(e.instance.id, e.window);
    pool.push_back(std::move(e.instance));
  }
  start_learner(std::move(pool), std::min(params_.queries_per_window, params_.budget - spent_));
}

std::optional<Index> StreamActiveLearner::pending() const {
  return learner_ ? learner_->pending() : std::nullopt;
}

std::optional<Index> StreamActiveLearner::next_query() {
  while (true) {
    if (spent_ >= params_.budget) return std::nullopt;
    if (learner_) {
      if (auto q = learner_->next_query()) return q;
    }
    if (spent_ >= params_.budget) return std::nullopt;
    if (next_window_ < windows_.size()) {
      advance();
      continue;
    }
    // Stream exhausted: keep querying the final retained pool.
    if (!learner_ || continuation_) return std::nullopt;
    continuation_ = true;
    learner_->add_budget(params_.budget - spent_);
  }
}

void StreamActiveLearner::feedback(Index id, Label y) {
  if (!learner_) throw ContractViolation("feedback: no pending query");
  learner_->feedback(id, y);
  ++spent_;
  (y == Label::anomaly ? anomaly_ids_ : nominal_ids_).push_back(id);
  history_.push_back(learner_->history().back());
}

}  // namespace aad
