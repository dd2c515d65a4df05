#include "aad/describe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace aad {

namespace {

using Bits = std::vector<std::uint64_t>;

Bits make_bits(Index n) { return Bits((n + 63) / 64, 0); }
void set_bit(Bits& b, Index i) { b[i / 64] |= (std::uint64_t{1} << (i % 64)); }
bool test_bit(const Bits& b, Index i) { return (b[i / 64] >> (i % 64)) & 1U; }

struct TieKey {
  double cost;
  Index count;
  long rule_length;
  std::vector<Index> leaves;  // sorted

  bool operator<(const TieKey& o) const {
    if (cost != o.cost) return cost < o.cost;
    if (count != o.count) return count < o.count;
    if (rule_length != o.rule_length) return rule_length < o.rule_length;
    return leaves < o.leaves;
  }
};

TieKey key_of(const CoverProblem& p, std::vector<Index> selected) {
  std::sort(selected.begin(), selected.end());
  TieKey k{cover_cost(p, selected), selected.size(), 0, {}};
  for (auto c : selected) {
    k.rule_length += p.rule_length.empty() ? 0 : p.rule_length[c];
    k.leaves.push_back(p.leaf.empty() ? c : p.leaf[c]);
  }
  std::sort(k.leaves.begin(), k.leaves.end());
  return k;
}

void check_feasible(const CoverProblem& p) {
  for (Index i = 0; i < p.instances(); ++i) {
    if (p.covering[i].empty()) throw InfeasibleCover(i);
  }
}

class BranchAndBound {
 public:
  explicit BranchAndBound(const CoverProblem& p) : p_(p), excluded_(p.candidates(), false) {
    // Candidates per instance, cheapest first.
    by_instance_ = p.covering;
    for (auto& list : by_instance_) {
      std::sort(list.begin(), list.end(), [&](Index a, Index b) {
        return p.cost[static_cast<Eigen::Index>(a)] != p.cost[static_cast<Eigen::Index>(b)]
                   ? p.cost[static_cast<Eigen::Index>(a)] < p.cost[static_cast<Eigen::Index>(b)]
                   : a < b;
      });
    }
  }

  CoverSolution run() {
    std::vector<int> covered(p_.instances(), 0);
    std::vector<Index> chosen;
    search(covered, chosen, 0.0);
    std::sort(best_.begin(), best_.end());
    return CoverSolution{best_, cover_cost(p_, best_), true};
  }

 private:
  void search(std::vector<int>& covered, std::vector<Index>& chosen, double cost) {
    // Pick the uncovered instance with the fewest available candidates and
    // bound by the most expensive cheapest-available cover among them.
    Index pivot = p_.instances();
    Index fewest = std::numeric_limits<Index>::max();
    double bound = 0.0;
    for (Index i = 0; i < p_.instances(); ++i) {
      if (covered[i] > 0) continue;
      Index available = 0;
      double cheapest = std::numeric_limits<double>::infinity();
      for (auto c : by_instance_[i]) {
        if (excluded_[c]) continue;
        ++available;
        cheapest = std::min(cheapest, p_.cost[static_cast<Eigen::Index>(c)]);
      }
      if (available == 0) return;
      bound = std::max(bound, cheapest);
      if (available < fewest) {
        fewest = available;
        pivot = i;
      }
    }
    if (pivot == p_.instances()) {
      auto key = key_of(p_, chosen);
      if (!have_best_ || key < best_key_) {
        best_key_ = std::move(key);
        best_ = chosen;
        have_best_ = true;
      }
      return;
    }
    if (have_best_ && cost + bound > best_key_.cost * (1.0 + 1e-12)) return;

    std::vector<Index> newly_excluded;
    for (auto c : by_instance_[pivot]) {
      if (excluded_[c]) continue;
      const double next = cost + p_.cost[static_cast<Eigen::Index>(c)];
      if (!have_best_ || next <= best_key_.cost * (1.0 + 1e-12)) {
        chosen.push_back(c);
        for (Index i = 0; i < p_.instances(); ++i) {
          if (contains(i, c)) ++covered[i];
        }
        search(covered, chosen, next);
        for (Index i = 0; i < p_.instances(); ++i) {
          if (contains(i, c)) --covered[i];
        }
        chosen.pop_back();
      }
      // Later branches never use c again: every cover containing c was seen.
      excluded_[c] = true;
      newly_excluded.push_back(c);
    }
    for (auto c : newly_excluded) excluded_[c] = false;
  }

  bool contains(Index instance, Index candidate) const {
    if (membership_.empty()) {
      membership_.assign(p_.candidates(), make_bits(p_.instances()));
      for (Index i = 0; i < p_.instances(); ++i) {
        for (auto c : p_.covering[i]) set_bit(membership_[c], i);
      }
    }
    return test_bit(membership_[candidate], instance);
  }

  const CoverProblem& p_;
  std::vector<std::vector<Index>> by_instance_;
  std::vector<bool> excluded_;
  mutable std::vector<Bits> membership_;
  std::vector<Index> best_;
  TieKey best_key_{};
  bool have_best_ = false;
};

}  // namespace

bool in_leaf(const SparseScoreVector& z, Index leaf) {
  const auto nnz = z.nonZeros();
  const auto* idx = z.innerIndexPtr();
  return std::binary_search(idx, idx + nnz, static_cast<SparseScoreVector::StorageIndex>(leaf));
}

Box clipping_box(const Box& data_box, double margin) {
  Box clip = data_box;
  for (Eigen::Index j = 0; j < clip.lo.size(); ++j) {
    const double range = data_box.hi[j] - data_box.lo[j];
    const double pad = range > 0.0 ? margin * range : 0.5;
    clip.lo[j] -= pad;
    clip.hi[j] += pad;
  }
  return clip;
}

double log_volume(const Box& box, const Box& clip) {
  double lv = 0.0;
  for (Eigen::Index j = 0; j < box.lo.size(); ++j) {
    const double lo = std::max(box.lo[j], clip.lo[j]);
    const double hi = std::min(box.hi[j], clip.hi[j]);
    lv += std::log(std::max(hi - lo, std::numeric_limits<double>::min()));
  }
  return lv;
}

SubspaceCatalog::SubspaceCatalog(const EnsembleModel& model, const Box& data_box, double margin)
    : subspaces_(leaf_subspaces(model)) {
  const Box clip = clipping_box(data_box, margin);
  clip_log_volume_ = log_volume(clip, clip);
  for (auto& s : subspaces_) s.log_volume = log_volume(s.box, clip);
}

void SubspaceCatalog::set_relevance(const WeightVector& w) {
  if (static_cast<Index>(w.size()) != subspaces_.size()) throw ContractViolation("set_relevance: dimension mismatch");
  for (auto& s : subspaces_) s.relevance = w[static_cast<Eigen::Index>(s.leaf)] * s.score;
}

std::vector<Index> top_relevant_subspaces(const WeightVector& w, const Vector& leaf_scores, const SparseScoreVector& z,
                                          Index delta) {
  if (delta < 1) throw ContractViolation("top_relevant_subspaces: delta must be >= 1");
  std::vector<std::pair<double, Index>> rel;
  for (SparseScoreVector::InnerIterator it(z); it; ++it) {
    const auto leaf = static_cast<Index>(it.index());
    rel.emplace_back(w[it.index()] * leaf_scores[it.index()], leaf);
  }
  const auto k = std::min<std::size_t>(delta, rel.size());
  std::partial_sort(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(k), rel.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<Index> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(rel[i].second);
  return out;
}

std::vector<Index> top_relevant_subspaces(const EnsembleModel& model, const WeightVector& w,
                                          const Eigen::Ref<const Vector>& x, Index delta) {
  return top_relevant_subspaces(w, model.leaf_scores(), transform_one(model, x), delta);
}

InfeasibleCover::InfeasibleCover(Index i)
    : std::runtime_error("set cover infeasible: instance " + std::to_string(i) + " is not covered by any candidate"),
      instance(i) {}

double cover_cost(const CoverProblem& problem, const std::vector<Index>& selected) {
  auto sorted = selected;
  std::sort(sorted.begin(), sorted.end());
  double c = 0.0;
  for (auto s : sorted) c += problem.cost[static_cast<Eigen::Index>(s)];
  return c;
}

bool covers_all(const CoverProblem& problem, const std::vector<Index>& selected) {
  for (const auto& row : problem.covering) {
    const bool hit = std::any_of(row.begin(), row.end(), [&](Index c) {
      return std::find(selected.begin(), selected.end(), c) != selected.end();
    });
    if (!hit) return false;
  }
  return true;
}

CoverSolution solve_set_cover_exact(const CoverProblem& problem) {
  check_feasible(problem);
  if (problem.instances() == 0) return CoverSolution{{}, 0.0, true};
  return BranchAndBound(problem).run();
}

CoverSolution solve_set_cover_greedy(const CoverProblem& problem) {
  check_feasible(problem);
  const Index k = problem.candidates();
  std::vector<std::vector<Index>> members(k);
  for (Index i = 0; i < problem.instances(); ++i) {
    for (auto c : problem.covering[i]) members[c].push_back(i);
  }
  std::vector<bool> covered(problem.instances(), false);
  Index remaining = problem.instances();
  std::vector<Index> chosen;
  auto rule_len = [&](Index c) { return problem.rule_length.empty() ? 0 : problem.rule_length[c]; };
  auto leaf_of = [&](Index c) { return problem.leaf.empty() ? c : problem.leaf[c]; };
  while (remaining > 0) {
    Index best = k;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < k; ++c) {
      Index gain = 0;
      for (auto i : members[c]) gain += covered[i] ? 0 : 1;
      if (gain == 0) continue;
      const double ratio = problem.cost[static_cast<Eigen::Index>(c)] / static_cast<double>(gain);
      const bool better = ratio < best_ratio ||
                          (ratio == best_ratio && (rule_len(c) < rule_len(best) ||
                                                   (rule_len(c) == rule_len(best) && leaf_of(c) < leaf_of(best))));
      if (best == k || better) {
        best = c;
        best_ratio = ratio;
      }
    }
    chosen.push_back(best);
    for (auto i : members[best]) {
      if (!covered[i]) {
        covered[i] = true;
        --remaining;
      }
    }
  }
  // Drop sets made redundant by later picks, most expensive first.
  std::vector<Index> order = chosen;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return problem.cost[static_cast<Eigen::Index>(a)] > problem.cost[static_cast<Eigen::Index>(b)];
  });
  for (auto c : order) {
    std::vector<Index> trial;
    for (auto s : chosen) {
      if (s != c) trial.push_back(s);
    }
    if (covers_all(problem, trial)) chosen = std::move(trial);
  }
  std::sort(chosen.begin(), chosen.end());
  return CoverSolution{chosen, cover_cost(problem, chosen), false};
}

CoverSolution solve_set_cover(const CoverProblem& problem, Index exact_limit) {
  return problem.candidates() <= exact_limit ? solve_set_cover_exact(problem) : solve_set_cover_greedy(problem);
}

bool RuleSet::matches(const Eigen::Ref<const Vector>& x) const {
  return std::any_of(disjuncts.begin(), disjuncts.end(), [&](const Conjunction& c) {
    return std::all_of(c.begin(), c.end(), [&](const Predicate& p) {
      const double v = x[static_cast<Eigen::Index>(p.feature)];
      return p.greater ? v > p.threshold : v <= p.threshold;
    });
  });
}

Conjunction box_to_conjunction(const Box& box) {
  Conjunction c;
  for (Eigen::Index j = 0; j < box.lo.size(); ++j) {
    if (std::isfinite(box.lo[j])) c.push_back(Predicate{static_cast<Index>(j), true, box.lo[j]});
    if (std::isfinite(box.hi[j])) c.push_back(Predicate{static_cast<Index>(j), false, box.hi[j]});
  }
  return c;
}

RuleSet rules_from_subspaces(const SubspaceCatalog& catalog, const std::vector<Index>& leaves) {
  RuleSet rs;
  for (auto leaf : leaves) rs.disjuncts.push_back(box_to_conjunction(catalog[leaf].box));
  return rs;
}

std::string rules_to_text(const RuleSet& rules) {
  if (rules.disjuncts.empty()) return "false";
  std::string out;
  char buf[64];
  for (std::size_t d = 0; d < rules.disjuncts.size(); ++d) {
    if (d > 0) out += " or ";
    const auto& conj = rules.disjuncts[d];
    if (conj.empty()) {
      out += "true";
      continue;
    }
    std::string body;
    for (std::size_t i = 0; i < conj.size(); ++i) {
      if (i > 0) body += " & ";
      const auto& p = conj[i];
      std::snprintf(buf, sizeof buf, "(x%zu %s %.6f)", p.feature, p.greater ? ">" : "<=", p.threshold);
      body += buf;
    }
    out += conj.size() > 1 ? "(" + body + ")" : body;
  }
  return out;
}

namespace {

struct RuleParser {
  const std::string& s;
  std::size_t pos = 0;

  void skip() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool accept(const std::string& tok) {
    skip();
    if (s.compare(pos, tok.size(), tok) == 0) {
      pos += tok.size();
      return true;
    }
    return false;
  }
  void expect(const std::string& tok) {
    if (!accept(tok)) throw std::invalid_argument("parse_rules: expected '" + tok + "' at offset " + std::to_string(pos));
  }
  // "(xN op value)"
  Predicate predicate() {
    expect("(");
    expect("x");
    std::size_t used = 0;
    const auto feature = std::stoul(s.substr(pos), &used);
    pos += used;
    Predicate p;
    p.feature = feature;
    if (accept("<=")) {
      p.greater = false;
    } else {
      expect(">");
      p.greater = true;
    }
    skip();
    p.threshold = std::stod(s.substr(pos), &used);
    pos += used;
    expect(")");
    return p;
  }
  Conjunction conjunction() {
    if (accept("true")) return {};
    skip();
    // "((" opens a multi-predicate conjunction; "(x" a lone predicate.
    if (s.compare(pos, 2, "((") == 0) {
      expect("(");
      Conjunction c{predicate()};
      while (accept("&")) c.push_back(predicate());
      expect(")");
      return c;
    }
    return Conjunction{predicate()};
  }
};

}  // namespace

RuleSet parse_rules(const std::string& text) {
  RuleParser parser{text};
  RuleSet rs;
  if (parser.accept("false")) {
    parser.skip();
    if (parser.pos != text.size()) throw std::invalid_argument("parse_rules: trailing input");
    return rs;
  }
  rs.disjuncts.push_back(parser.conjunction());
  while (parser.accept("or")) rs.disjuncts.push_back(parser.conjunction());
  parser.skip();
  if (parser.pos != text.size()) throw std::invalid_argument("parse_rules: trailing input");
  return rs;
}

nlohmann::json rules_to_json(const RuleSet& rules) {
  auto disjuncts = nlohmann::json::array();
  for (const auto& conj : rules.disjuncts) {
    auto c = nlohmann::json::array();
    for (const auto& p : conj) c.push_back({{"f", p.feature}, {"op", p.greater ? ">" : "<="}, {"thr", p.threshold}});
    disjuncts.push_back(std::move(c));
  }
  return {{"disjuncts", std::move(disjuncts)}};
}

RuleSet rules_from_json(const nlohmann::json& j) {
  RuleSet rs;
  for (const auto& c : j.at("disjuncts")) {
    Conjunction conj;
    for (const auto& p : c) {
      const auto op = p.at("op").get<std::string>();
      if (op != ">" && op != "<=") throw std::invalid_argument("rules_from_json: bad operator " + op);
      conj.push_back(Predicate{p.at("f").get<Index>(), op == ">", p.at("thr").get<double>()});
    }
    rs.disjuncts.push_back(std::move(conj));
  }
  return rs;
}

namespace {

// Candidate leaves (union of per-target top-delta subspaces) and U rows.
struct Candidates {
  std::vector<Index> leaves;
  CoverProblem problem;
};

Candidates build_candidates(const SubspaceCatalog& catalog, const WeightVector& w,
                            const std::vector<const SparseScoreVector*>& targets, Index delta) {
  Vector d(static_cast<Eigen::Index>(catalog.size()));
  for (Index i = 0; i < catalog.size(); ++i) d[static_cast<Eigen::Index>(i)] = catalog[i].score;
  std::vector<Index> leaves;
  for (const auto* z : targets) {
    const auto tops = top_relevant_subspaces(w, d, *z, delta);
    leaves.insert(leaves.end(), tops.begin(), tops.end());
  }
  std::sort(leaves.begin(), leaves.end());
  leaves.erase(std::unique(leaves.begin(), leaves.end()), leaves.end());

  Candidates out;
  out.leaves = leaves;
  auto& p = out.problem;
  p.cost = Vector::Zero(static_cast<Eigen::Index>(leaves.size()));
  for (auto leaf : leaves) {
    p.rule_length.push_back(catalog[leaf].rule_length());
    p.leaf.push_back(leaf);
  }
  // U row: every candidate subspace that contains the target, not only its
  // own top-delta leaves. Without this, nested leaves picked by different
  // targets end up as separate disjuncts.
  for (const auto* z : targets) {
    std::vector<Index> row;
    for (Index c = 0; c < leaves.size(); ++c) {
      if (in_leaf(*z, leaves[c])) row.push_back(c);
    }
    p.covering.push_back(std::move(row));
  }
  return out;
}

}  // namespace

Description compact_description(const SubspaceCatalog& catalog, const WeightVector& w,
                                const std::vector<const SparseScoreVector*>& targets, Index delta) {
  if (targets.empty()) throw ContractViolation("compact_description: no instances to describe");
  auto cand = build_candidates(catalog, w, targets, delta);
  // Volumes rescaled by a single common factor (max log-volume) to avoid
  // underflow; the argmin of the cover is unchanged.
  double max_lv = -std::numeric_limits<double>::infinity();
  for (auto leaf : cand.leaves) max_lv = std::max(max_lv, catalog[leaf].log_volume);
  for (Index c = 0; c < cand.leaves.size(); ++c) {
    cand.problem.cost[static_cast<Eigen::Index>(c)] = std::exp(catalog[cand.leaves[c]].log_volume - max_lv);
  }
  const auto sol = solve_set_cover(cand.problem);
  Description out;
  out.candidates = cand.leaves;
  for (auto c : sol.selected) out.leaves.push_back(cand.leaves[c]);
  out.rules = rules_from_subspaces(catalog, out.leaves);
  out.exact = sol.exact;
  return out;
}

InterpretableDescription interpretable_description(const SubspaceCatalog& catalog, const WeightVector& w,
                                                   const std::vector<DescribedInstance>& labeled,
                                                   const std::vector<const SparseScoreVector*>& unlabeled,
                                                   const InterpretableParams& params) {
  if (!(params.precision_threshold >= 0.0 && params.precision_threshold <= 1.0))
    throw ContractViolation("interpretable_description: precision threshold must lie in [0,1]");
  std::vector<const SparseScoreVector*> anomalies;
  std::vector<const SparseScoreVector*> nominals;
  for (const auto& inst : labeled) (inst.label == Label::anomaly ? anomalies : nominals).push_back(inst.z);
  if (anomalies.empty()) throw ContractViolation("interpretable_description: no labeled anomalies");

  // Pseudo-nominals: uniform sample without replacement from the pool.
  std::vector<Index> order(unlabeled.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(params.seed);
  const Index u = std::min<Index>(params.pseudo_nominals, unlabeled.size());
  for (Index i = 0; i < u; ++i) {
    std::uniform_int_distribution<Index> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  for (Index i = 0; i < u; ++i) nominals.push_back(unlabeled[order[i]]);

  auto cand = build_candidates(catalog, w, anomalies, params.delta);
  const auto k = cand.leaves.size();
  std::vector<Index> eta(k, 0), hits(k, 0);
  for (Index c = 0; c < k; ++c) {
    for (const auto* z : nominals) eta[c] += in_leaf(*z, cand.leaves[c]) ? 1 : 0;
    for (const auto* z : anomalies) hits[c] += in_leaf(*z, cand.leaves[c]) ? 1 : 0;
  }
  // Volumes as fractions of the clipping box, so that the volume and
  // complexity terms do not depend on the units of the features.
  for (Index c = 0; c < k; ++c) {
    const double v = std::exp(catalog[cand.leaves[c]].log_volume - catalog.clip_log_volume());
    const double complexity = std::pow(2.0, cand.problem.rule_length[c] - 1);
    cand.problem.cost[static_cast<Eigen::Index>(c)] =
        v * (1.0 + static_cast<double>(eta[c])) + params.complexity_weight * complexity;
  }
  const auto sol = solve_set_cover(cand.problem);

  InterpretableDescription out;
  out.pseudo_nominals.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(u));
  out.description.candidates = cand.leaves;
  out.description.exact = sol.exact;
  for (auto c : sol.selected) {
    const double total = static_cast<double>(hits[c] + eta[c]);
    const double precision = total > 0.0 ? static_cast<double>(hits[c]) / total : 0.0;
    if (precision >= params.precision_threshold) {
      out.description.leaves.push_back(cand.leaves[c]);
      out.precision.push_back(precision);
    }
  }
  out.description.rules = rules_from_subspaces(catalog, out.description.leaves);
  out.all_filtered = out.description.leaves.empty();
  return out;
}

}  // namespace aad
