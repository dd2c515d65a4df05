#include "aad/active.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aad {

WeightVector random_unit_weights(Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  WeightVector w(static_cast<Eigen::Index>(m));
  for (auto& v : w) v = normal(rng);
  return w / w.norm();
}

double score(const WeightVector& w, const SparseScoreVector& z) {
  if (w.size() != z.size()) throw ContractViolation("score: weight/score dimension mismatch");
  return z.dot(w);
}

SparseScoreVector normalize_scores(const SparseScoreVector& z) {
  const double n = z.norm();
  if (!(n > 0.0)) throw ContractViolation("normalize_scores: all-zero score vector");
  return z / n;
}

double FeedbackState::lambda() const {
  switch (prior) {
    case PriorMode::none:
      return 0.0;
    case PriorMode::constant:
      return 0.5;
    case PriorMode::decaying:
      break;
  }
  const auto n = labeled();
  return n == 0 ? 0.5 : 0.5 / static_cast<double>(n);
}

QuantileAnchor quantile_anchor(const FeedbackState& state, const WeightVector& w_prev) {
  std::vector<std::pair<double, const ScoredInstance*>> ranked;
  ranked.reserve(state.total());
  for (const auto* set : {&state.unlabeled, &state.anomalies, &state.nominals}) {
    for (const auto& s : *set) ranked.emplace_back(score(w_prev, s.z), &s);
  }
  if (ranked.empty()) throw ContractViolation("quantile_anchor: empty state");
  const auto n = ranked.size();
  auto pos = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * state.tau));
  pos = std::clamp<std::size_t>(pos, 1, n) - 1;
  std::nth_element(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(pos), ranked.end(),
                   [](const auto& a, const auto& b) {
                     return a.first != b.first ? a.first > b.first : a.second->id < b.second->id;
                   });
  const auto& [q, inst] = ranked[pos];
  return QuantileAnchor{inst->id, inst->z, q};
}

AadObjective::AadObjective(const FeedbackState& state, QuantileAnchor anchor, WeightVector w_unif)
    : state_(&state), anchor_(std::move(anchor)), w_unif_(std::move(w_unif)), lambda_(state.lambda()) {}

double AadObjective::value(const WeightVector& w) const {
  const double q_dyn = score(w, anchor_.z_tau);
  double total = 0.0;
  for (const auto* set : {&state_->anomalies, &state_->nominals}) {
    if (set->empty()) continue;
    const Label y = set == &state_->anomalies ? Label::anomaly : Label::nominal;
    double sum = 0.0;
    for (const auto& s : *set) {
      const double wz = score(w, s.z);
      sum += hinge_loss(anchor_.q_hat, wz, y) + hinge_loss(q_dyn, wz, y);
    }
    total += sum / static_cast<double>(set->size());
  }
  return total + lambda_ * (w - w_unif_).squaredNorm();
}

WeightVector AadObjective::gradient(const WeightVector& w) const {
  WeightVector g = 2.0 * lambda_ * (w - w_unif_);
  const double q_dyn = score(w, anchor_.z_tau);
  for (const auto* set : {&state_->anomalies, &state_->nominals}) {
    if (set->empty()) continue;
    const bool anomaly = set == &state_->anomalies;
    const double inv = 1.0 / static_cast<double>(set->size());
    for (const auto& s : *set) {
      const double wz = score(w, s.z);
      if (anomaly) {
        if (wz < anchor_.q_hat) g -= inv * s.z;
        if (wz < q_dyn) {
          g += inv * anchor_.z_tau;
          g -= inv * s.z;
        }
      } else {
        if (wz > anchor_.q_hat) g += inv * s.z;
        if (wz > q_dyn) {
          g += inv * s.z;
          g -= inv * anchor_.z_tau;
        }
      }
    }
  }
  return g;
}

WeightVector learn_weights(const FeedbackState& state, const WeightVector& w_prev, const LearnParams& params) {
  if (state.labeled() == 0) return w_prev;
  const auto m = static_cast<Index>(w_prev.size());
  AadObjective objective(state, quantile_anchor(state, w_prev), uniform_weights(m));
  WeightVector w = w_prev;
  double prev = objective.value(w);
  for (int step = 0; step < params.max_steps; ++step) {
    WeightVector next = w - params.step * objective.gradient(w);
    const double cur = objective.value(next);
    if (prev - cur < params.tolerance) {
      if (cur < prev) w = std::move(next);
      break;
    }
    w = std::move(next);
    prev = cur;
  }
  const double n = w.norm();
  return n > 0.0 ? WeightVector(w / n) : w_prev;
}

QuerySelector greedy_selector() {
  return [](const std::vector<ScoredInstance>& pool, const Vector& scores, const WeightVector&) {
    std::vector<Index> out;
    if (pool.empty()) return out;
    Index best = 0;
    for (Index i = 1; i < pool.size(); ++i) {
      const auto si = scores[static_cast<Eigen::Index>(i)];
      const auto sb = scores[static_cast<Eigen::Index>(best)];
      if (si > sb || (si == sb && pool[i].id < pool[best].id)) best = i;
    }
    out.push_back(best);
    return out;
  };
}

BatchActiveLearner::BatchActiveLearner(FeedbackState state, WeightVector w0, Index budget, QuerySelector selector,
                                       LearnParams params, bool learn)
    : state_(std::move(state)),
      w_(std::move(w0)),
      budget_(budget),
      selector_(std::move(selector)),
      params_(params),
      learn_(learn) {}

Vector BatchActiveLearner::pool_scores() const {
  Vector s(static_cast<Eigen::Index>(state_.unlabeled.size()));
  for (Index i = 0; i < state_.unlabeled.size(); ++i) s[static_cast<Eigen::Index>(i)] = score(w_, state_.unlabeled[i].z);
  return s;
}

std::optional<Index> BatchActiveLearner::pending() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.front();
}

std::optional<Index> BatchActiveLearner::next_query() {
  if (!queue_.empty()) return queue_.front();
  if (spent_ >= budget_ || state_.unlabeled.empty()) return std::nullopt;
  const auto picks = selector_(state_.unlabeled, pool_scores(), w_);
  const Index room = budget_ - spent_;
  for (Index i = 0; i < picks.size() && i < room; ++i) queue_.push_back(state_.unlabeled.at(picks[i]).id);
  if (queue_.empty()) return std::nullopt;
  return queue_.front();
}

void BatchActiveLearner::feedback(Index id, Label y) {
  if (queue_.empty() || queue_.front() != id)
    throw ContractViolation("feedback: instance " + std::to_string(id) + " is not the pending query");
  auto it = std::find_if(state_.unlabeled.begin(), state_.unlabeled.end(),
                         [id](const ScoredInstance& s) { return s.id == id; });
  if (it == state_.unlabeled.end()) throw ContractViolation("feedback: instance not in unlabeled pool");
  (y == Label::anomaly ? state_.anomalies : state_.nominals).push_back(std::move(*it));
  state_.unlabeled.erase(it);
  queue_.erase(queue_.begin());
  ++spent_;
  if (queue_.empty() && learn_) w_ = learn_weights(state_, w_, params_);
  history_.push_back(HistoryRecord{iter_offset_ + spent_, id, y, state_.anomalies.size(), snapshot_hash()});
}

std::uint64_t BatchActiveLearner::snapshot_hash() const {
  return fnv1a(w_.data(), static_cast<std::size_t>(w_.size()) * sizeof(double));
}

BatchResult batch_al(Index budget, WeightVector w0, FeedbackState state, const std::function<Label(Index)>& oracle,
                     QuerySelector selector, const LearnParams& params, bool learn) {
  if (budget < 1) throw ContractViolation("batch_al: budget must be >= 1");
  BatchActiveLearner learner(std::move(state), std::move(w0), budget, std::move(selector), params, learn);
  while (auto q = learner.next_query()) learner.feedback(*q, oracle(*q));
  BatchResult out{learner.weights(), learner.state(), learner.history(), learner.spent()};
  return out;
}

}  // namespace aad
