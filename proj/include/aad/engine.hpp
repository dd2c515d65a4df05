#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "aad/config.hpp"
#include "aad/describe.hpp"
#include "aad/stream.hpp"

namespace aad {

/// One selected query batch with the subspace overlap among its members,
/// counted against the compact description of that round's candidates.
struct BatchRecord {
  std::vector<Index> ids;
  double overlap = 0.0;  // shared subspaces summed over pairs
};

/// Interpretable rules for the labeled anomalies with the evidence behind
/// them: per-disjunct precision and the pseudo-nominal sample (instance ids).
struct RuleReport {
  RuleSet rules;
  std::vector<double> precision;
  std::vector<Index> pseudo_nominals;
};

/// Arm-independent step interface. The harness (scripted oracle) and the
/// service (human labels) both drive engines through next_query/feedback,
/// so a session replays a harness run event for event.
class Engine {
 public:
  virtual ~Engine() = default;

  /// Selects the next query if none is pending; empty when finished.
  virtual std::optional<Index> next_query() = 0;
  virtual std::optional<Index> pending() const = 0;
  /// Throws ContractViolation unless `id` is the pending query.
  virtual void feedback(Index id, Label y) = 0;

  virtual const std::vector<HistoryRecord>& history() const = 0;
  /// Current anomaly score of an instance.
  virtual double score(Index id) const = 0;
  /// Compact-description rules around one instance; empty for LODA arms.
  virtual RuleSet describe(Index id) const;
  /// Interpretable rules for the anomalies labeled so far.
  virtual RuleReport rule_report() const { return {}; }
  RuleSet rules() const { return rule_report().rules; }
  virtual std::vector<DriftReport> drift() const { return {}; }
  virtual const std::vector<BatchRecord>& batches() const;
  /// Per-instance relevance p(x) (GLAD arm only), else null.
  virtual nlohmann::json relevance() const { return nullptr; }

  Index budget() const { return budget_; }
  Index spent() const { return history().size(); }
  Index anomalies_found() const { return history().empty() ? 0 : history().back().anomalies_so_far; }

 protected:
  explicit Engine(Index budget) : budget_(budget) {}
  Index budget_;
};

/// Builds the arm's engine on the features of `data`, which must outlive it.
/// Labels are never read.
std::unique_ptr<Engine> make_engine(const RunConfig& cfg, const Dataset& data, std::uint64_t seed);

}  // namespace aad
