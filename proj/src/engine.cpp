#include "aad/engine.hpp"

#include <algorithm>

#include "aad/glad.hpp"
#include "aad/iforest.hpp"
#include "aad/loda.hpp"

namespace aad {

RuleSet Engine::describe(Index) const { return {}; }

const std::vector<BatchRecord>& Engine::batches() const {
  static const std::vector<BatchRecord> none;
  return none;
}

namespace {

ForestParams forest_params(const RunConfig& cfg) {
  ForestParams p;
  p.trees = cfg.trees;
  p.subsample = cfg.subsample;
  p.max_depth = cfg.max_depth;
  return p;
}

InterpretableParams rule_params(const RunConfig& cfg, std::uint64_t seed) {
  InterpretableParams p;
  p.delta = cfg.delta;
  p.pseudo_nominals = cfg.pseudo_nominals;
  p.precision_threshold = cfg.precision_threshold;
  p.complexity_weight = cfg.complexity_weight;
  p.seed = derive_seed(seed, 5);
  return p;
}

// Shared batch-mode engine over fixed score vectors: IFOR leaves for the
// bal arms, dense LODA member scores for loda and loda-global.
class BatchEngine final : public Engine {
 public:
  BatchEngine(const RunConfig& cfg, const Dataset& data, std::uint64_t seed)
      : Engine(cfg.budget), cfg_(cfg), seed_(seed), rng_(derive_seed(seed, 3)) {
    const Matrix& x = data.features();
    const bool trees = cfg.mode() == Mode::batch;
    if (trees) {
      model_ = build_forest(x, forest_params(cfg), derive_seed(seed, 1));
      const SparseScoreMatrix zm = transform(model_, x);
      z_.reserve(static_cast<std::size_t>(zm.rows()));
      for (Eigen::Index i = 0; i < zm.rows(); ++i) {
        SparseScoreVector z = zm.row(i).transpose();
        z_.push_back(cfg.normalize_scores ? normalize_scores(z) : z);
      }
      catalog_ = std::make_unique<SubspaceCatalog>(model_, data.bounding_box());
    } else {
      std::mt19937_64 lrng(derive_seed(seed, 1));
      const Matrix s = member_scores(fit_loda(x, cfg.members, 0, lrng), x);
      for (Eigen::Index i = 0; i < s.rows(); ++i) z_.push_back(Vector(s.row(i).transpose()).sparseView(0.0, 0.0));
    }
    const auto m = static_cast<Index>(trees ? model_.leaf_count() : cfg.members);

    FeedbackState state;
    state.tau = cfg.tau;
    state.prior = (cfg.arm == "bal-noprior-unif" || cfg.arm == "bal-noprior-rand") ? PriorMode::none
                                                                                     : PriorMode::decaying;
    for (Index i = 0; i < z_.size(); ++i) state.unlabeled.push_back({i, z_[i]});
    WeightVector w0 = uniform_weights(m);
    if (cfg.arm == "bal-noprior-rand") {
      std::mt19937_64 wrng(derive_seed(seed, 2));
      w0 = random_unit_weights(m, wrng);
    }
    const bool learn = cfg.arm != "unsupervised" && cfg.arm != "loda";

    QueryParams qp;
    qp.strategy = cfg.strategy;
    qp.batch = cfg.batch;
    qp.candidates = cfg.candidates;
    qp.delta = cfg.delta;
    if (!trees && cfg.strategy == Strategy::diverse) throw UsageError("diverse queries need a tree ensemble");
    QuerySelector inner = make_selector(qp, catalog_.get(), &rng_);
    QuerySelector selector = inner;
    if (trees && cfg.batch > 1) {
      selector = [this, inner](const std::vector<ScoredInstance>& pool, const Vector& scores,
                               const WeightVector& w) {
        auto picked = inner(pool, scores, w);
        record_batch(pool, scores, w, picked);
        return picked;
      };
    }
    learner_.emplace(std::move(state), std::move(w0), cfg.budget, std::move(selector), LearnParams{}, learn);
  }

  std::optional<Index> next_query() override { return learner_->next_query(); }
  std::optional<Index> pending() const override { return learner_->pending(); }
  void feedback(Index id, Label y) override {
    learner_->feedback(id, y);
    (y == Label::anomaly ? anomalies_ : nominals_).push_back(id);
  }
  const std::vector<HistoryRecord>& history() const override { return learner_->history(); }
  double score(Index id) const override { return aad::score(learner_->weights(), z_.at(id)); }

  RuleSet describe(Index id) const override {
    if (!catalog_) return {};
    return compact_description(*catalog_, learner_->weights(), {&z_.at(id)}, cfg_.delta).rules;
  }

  RuleReport rule_report() const override {
    if (!catalog_ || anomalies_.empty()) return {};
    std::vector<DescribedInstance> labeled;
    for (auto id : anomalies_) labeled.push_back({&z_[id], Label::anomaly});
    for (auto id : nominals_) labeled.push_back({&z_[id], Label::nominal});
    const auto& pool = learner_->state().unlabeled;
    std::vector<const SparseScoreVector*> unlabeled;
    for (const auto& s : pool) unlabeled.push_back(&s.z);
    auto d = interpretable_description(*catalog_, learner_->weights(), labeled, unlabeled, rule_params(cfg_, seed_));
    RuleReport r{std::move(d.description.rules), std::move(d.precision), {}};
    for (auto p : d.pseudo_nominals) r.pseudo_nominals.push_back(pool[p].id);
    return r;
  }

  const std::vector<BatchRecord>& batches() const override { return batches_; }

 private:
  void record_batch(const std::vector<ScoredInstance>& pool, const Vector& scores, const WeightVector& w,
                    const std::vector<Index>& picked) {
    BatchRecord rec;
    for (auto p : picked) rec.ids.push_back(pool[p].id);
    const QueryBatch top = select_top(pool, scores, cfg_.candidates);
    std::vector<const SparseScoreVector*> cand;
    for (auto p : top.selected) cand.push_back(&pool[p].z);
    const Description desc = compact_description(*catalog_, w, cand, cfg_.delta);
    std::vector<const SparseScoreVector*> chosen;
    for (auto p : picked) chosen.push_back(&pool[p].z);
    const auto membership = description_membership(desc, chosen);
    std::vector<Index> all(chosen.size());
    for (Index i = 0; i < all.size(); ++i) all[i] = i;
    const double pairs = static_cast<double>(all.size() * (all.size() - 1) / 2);
    rec.overlap = pairs > 0 ? mean_pairwise_overlap(membership, all) * pairs : 0.0;
    batches_.push_back(std::move(rec));
  }

  RunConfig cfg_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  EnsembleModel model_;
  std::unique_ptr<SubspaceCatalog> catalog_;
  std::vector<SparseScoreVector> z_;
  std::optional<BatchActiveLearner> learner_;
  std::vector<Index> anomalies_, nominals_;
  std::vector<BatchRecord> batches_;
};

class StreamEngine final : public Engine {
 public:
  StreamEngine(const RunConfig& cfg, const Dataset& data, std::uint64_t seed)
      : Engine(cfg.budget), cfg_(cfg), data_(data.features()), box_(data.bounding_box()), learner_(data_, params(cfg, seed)) {}

  std::optional<Index> next_query() override { return learner_.next_query(); }
  std::optional<Index> pending() const override { return learner_.pending(); }
  void feedback(Index id, Label y) override { learner_.feedback(id, y); }
  const std::vector<HistoryRecord>& history() const override { return learner_.history(); }
  std::vector<DriftReport> drift() const override { return learner_.drift(); }

  double score(Index id) const override { return aad::score(learner_.weights(), encode(id)); }

  RuleSet describe(Index id) const override {
    const SubspaceCatalog catalog(learner_.model(), box_);
    const SparseScoreVector z = encode(id);
    return compact_description(catalog, learner_.weights(), {&z}, cfg_.delta).rules;
  }

 private:
  static StreamParams params(const RunConfig& cfg, std::uint64_t seed) {
    StreamParams p;
    p.window = cfg.window;
    p.budget = cfg.budget;
    p.queries_per_window = cfg.queries_per_window;
    p.alpha = cfg.alpha;
    p.kl_reps = cfg.kl_reps;
    p.tau = cfg.tau;
    p.update.policy = cfg.arm == "sal-kl"      ? ReplacePolicy::kl
                      : cfg.arm == "sal-20pct" ? ReplacePolicy::fixed_fraction
                                               : ReplacePolicy::never;
    p.update.replace_fraction = cfg.replace_fraction;
    p.update.forest = forest_params(cfg);
    p.query.strategy = cfg.strategy;
    p.query.batch = cfg.batch;
    p.query.candidates = cfg.candidates;
    p.query.delta = cfg.delta;
    p.prior = PriorMode::constant;
    p.normalize_scores = cfg.normalize_scores;
    p.seed = derive_seed(seed, 1);
    return p;
  }

  SparseScoreVector encode(Index id) const {
    auto z = transform_one(learner_.model(), data_.row(static_cast<Eigen::Index>(id)).transpose());
    return cfg_.normalize_scores ? normalize_scores(z) : z;
  }

  RunConfig cfg_;
  const Matrix& data_;
  Box box_;
  StreamActiveLearner learner_;
};

class GladEngine final : public Engine {
 public:
  GladEngine(const RunConfig& cfg, const Dataset& data, std::uint64_t seed)
      : Engine(cfg.budget),
        bias_(cfg.bias),
        learner_(data.features(), ensemble(cfg, data, seed), cfg.budget, params(cfg, seed)) {}

  std::optional<Index> next_query() override { return learner_.next_query(); }
  std::optional<Index> pending() const override { return learner_.pending(); }
  void feedback(Index id, Label y) override { learner_.feedback(id, y); }
  const std::vector<HistoryRecord>& history() const override { return learner_.history(); }
  double score(Index id) const override { return learner_.scores()[static_cast<Eigen::Index>(id)]; }

  nlohmann::json relevance() const override {
    const Matrix p = learner_.relevance_all();
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const Vector r = p.row(i).transpose();
      rows.push_back({{"id", i},
                      {"p", std::vector<double>(r.begin(), r.end())},
                      {"most_relevant", most_relevant_member(r)}});
    }
    return {{"members", p.cols()}, {"bias", bias_}, {"instances", rows}};
  }

 private:
  static LodaEnsemble ensemble(const RunConfig& cfg, const Dataset& data, std::uint64_t seed) {
    // Same projections as the loda arms for the same seed.
    std::mt19937_64 rng(derive_seed(seed, 1));
    return fit_loda(data.features(), cfg.members, 0, rng);
  }
  static GladParams params(const RunConfig& cfg, std::uint64_t seed) {
    GladParams p;
    p.bias = cfg.bias;
    p.lambda = cfg.lambda;
    p.tau = cfg.tau;
    p.hidden = cfg.hidden;
    p.upsample = cfg.upsample;
    p.seed = derive_seed(seed, 4);
    return p;
  }

  double bias_;
  GladLearner learner_;
};

}  // namespace

std::unique_ptr<Engine> make_engine(const RunConfig& cfg, const Dataset& data, std::uint64_t seed) {
  cfg.validate();
  if (data.size() == 0) throw UsageError("dataset is empty");
  switch (cfg.mode()) {
    case Mode::stream:
      return std::make_unique<StreamEngine>(cfg, data, seed);
    case Mode::glad:
      if (cfg.arm == "glad") return std::make_unique<GladEngine>(cfg, data, seed);
      return std::make_unique<BatchEngine>(cfg, data, seed);
    case Mode::batch:
      return std::make_unique<BatchEngine>(cfg, data, seed);
  }
  throw UsageError("unknown mode");
}

}  // namespace aad
