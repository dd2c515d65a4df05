#include "aad/glad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aad {

namespace {

Eigen::Index ei(Index i) { return static_cast<Eigen::Index>(i); }

Matrix gather(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(ei(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(ei(i)) = m.row(ei(rows[i]));
  return out;
}

// Per-output cross-entropy toward b: -b log p - (1 - b) log(1 - p).
double cross_entropy(double p, double b) {
  constexpr double eps = 1e-300;
  return -b * std::log(std::max(p, eps)) - (1.0 - b) * std::log(std::max(1.0 - p, eps));
}

}  // namespace

double prior_loss(const Matrix& relevance, double bias) {
  if (relevance.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < relevance.size(); ++i) total += cross_entropy(relevance.data()[i], bias);
  return total / static_cast<double>(relevance.rows());
}

FssnObjective::FssnObjective(const Matrix& data, const Matrix& member_scores, double bias, double lambda)
    : data_(&data), scores_(&member_scores), bias_(bias), lambda_(lambda) {
  if (data.rows() != member_scores.rows())
    throw ContractViolation("FssnObjective: data and member scores differ in row count");
  if (!(bias > 0.0 && bias < 1.0)) throw ContractViolation("FssnObjective: bias must lie in (0,1)");
}

double FssnObjective::value(const FssnNetwork& net, const std::vector<GladLabel>& labeled, const GladAnchor& anchor,
                            const std::vector<Index>& prior_rows) const {
  Vector unused;
  return value_and_gradient(net, labeled, anchor, prior_rows, unused);
}

double FssnObjective::value_and_gradient(const FssnNetwork& net, const std::vector<GladLabel>& labeled,
                                         const GladAnchor& anchor, const std::vector<Index>& prior_rows,
                                         Vector& grad) const {
  // Rows: labeled..., anchor, prior...
  std::vector<Index> rows;
  rows.reserve(labeled.size() + 1 + prior_rows.size());
  for (const auto& l : labeled) rows.push_back(l.row);
  const Index anchor_pos = rows.size();
  rows.push_back(anchor.row);
  rows.insert(rows.end(), prior_rows.begin(), prior_rows.end());

  FssnNetwork::Cache cache;
  const Matrix p = net.forward(gather(*data_, rows), &cache);
  const Matrix s = gather(*scores_, rows);
  Matrix d_logits = Matrix::Zero(p.rows(), p.cols());

  double loss = 0.0;
  if (!labeled.empty()) {
    const double inv = 1.0 / static_cast<double>(labeled.size());
    const double score_tau = s.row(ei(anchor_pos)).dot(p.row(ei(anchor_pos)));
    // d Score / d logit_m = s_m p_m (1 - p_m)
    auto dscore = [&](Index r) -> Vector {
      return (s.row(ei(r)).array() * p.row(ei(r)).array() * (1.0 - p.row(ei(r)).array())).transpose();
    };
    const Vector dtau = dscore(anchor_pos);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const double sc = s.row(ei(i)).dot(p.row(ei(i)));
      const double y = sign(labeled[i].label);
      const Vector di = dscore(i);
      for (const double q : {anchor.q, score_tau}) {
        const double h = y * (q - sc);
        if (h > 0.0) {
          loss += inv * h;
          d_logits.row(ei(i)) -= inv * y * di.transpose();
        }
      }
      // Second hinge also moves with Score(x_tau).
      if (y * (score_tau - sc) > 0.0) d_logits.row(ei(anchor_pos)) += inv * y * dtau.transpose();
    }
  }

  if (!prior_rows.empty()) {
    const double scale = lambda_ / static_cast<double>(prior_rows.size());
    const auto first = ei(anchor_pos + 1);
    const auto count = ei(prior_rows.size());
    double total = 0.0;
    for (Eigen::Index i = first; i < first + count; ++i)
      for (Eigen::Index m = 0; m < p.cols(); ++m) total += cross_entropy(p(i, m), bias_);
    loss += scale * total;
    // d/dlogit of the cross-entropy is p - b.
    d_logits.middleRows(first, count) += scale * (p.middleRows(first, count).array() - bias_).matrix();
  }

  grad = net.flatten(net.backward(cache, d_logits));
  return loss;
}

double max_prime_deviation(const FssnNetwork& net, const Matrix& data, double bias) {
  return (net.forward(data).array() - bias).abs().maxCoeff();
}

PrimeReport prime_fssn(FssnNetwork& net, const Matrix& data, double bias, const GladParams& params,
                       std::mt19937_64& rng) {
  if (!(bias > 0.0 && bias < 1.0)) throw ContractViolation("prime_fssn: bias must lie in (0,1)");
  PrimeReport report;
  report.max_deviation = max_prime_deviation(net, data, bias);
  if (report.max_deviation <= params.prime_tolerance) {
    report.converged = true;
    return report;
  }
  const Matrix no_scores = Matrix::Zero(data.rows(), ei(net.members()));
  const FssnObjective objective(data, no_scores, bias, 1.0);
  std::vector<Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  Vector velocity = Vector::Zero(ei(net.parameter_count()));
  Vector grad;
  for (Index epoch = 1; epoch <= params.prime_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += params.batch) {
      const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + params.batch)));
      objective.value_and_gradient(net, {}, GladAnchor{rows.front(), 0.0}, rows, grad);
      velocity = params.momentum * velocity - params.prime_step * grad;
      net.set_parameters(net.parameters() + velocity);
    }
    report.epochs = epoch;
    report.max_deviation = max_prime_deviation(net, data, bias);
    if (report.max_deviation <= params.prime_tolerance) {
      report.converged = true;
      break;
    }
  }
  return report;
}

Vector glad_scores(const FssnNetwork& net, const Matrix& data, const Matrix& member_scores) {
  if (data.rows() != member_scores.rows() || member_scores.cols() != ei(net.members()))
    throw ContractViolation("glad_scores: shape mismatch");
  return (member_scores.array() * net.forward(data).array()).rowwise().sum();
}

Index most_relevant_member(const Vector& relevance) {
  if (relevance.size() == 0) throw ContractViolation("most_relevant_member: empty relevance vector");
  Eigen::Index best = 0;
  for (Eigen::Index m = 1; m < relevance.size(); ++m)
    if (relevance[m] > relevance[best]) best = m;
  return static_cast<Index>(best);
}

GladLearner::GladLearner(const Matrix& data, LodaEnsemble ensemble, Index budget, GladParams params)
    : data_(&data),
      ensemble_(std::move(ensemble)),
      member_scores_(member_scores(ensemble_, data)),
      params_(params),
      budget_(budget),
      rng_(params.seed),
      is_labeled_(static_cast<std::size_t>(data.rows()), false) {
  if (data.rows() == 0) throw ContractViolation("GladLearner: empty dataset");
  const Index m = ensemble_.size();
  const Index hidden = params_.hidden > 0 ? params_.hidden : std::max<Index>(50, 3 * m);
  net_ = FssnNetwork(static_cast<Index>(data.cols()), m, hidden, params_.bias, rng_);
  const Vector mean = data.colwise().mean().transpose();
  Vector scale = ((data.rowwise() - mean.transpose()).array().square().colwise().sum() /
                  static_cast<double>(std::max<Eigen::Index>(1, data.rows() - 1)))
                     .sqrt()
                     .transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (!(scale[j] > 0.0)) scale[j] = 1.0;
  net_.set_input_scaling(mean, scale);
  prime_ = prime_fssn(net_, data, params_.bias, params_, rng_);
  velocity_ = Vector::Zero(ei(net_.parameter_count()));
}

GladAnchor GladLearner::anchor() const {
  const Vector s = scores();
  std::vector<Index> order(static_cast<std::size_t>(s.size()));
  std::iota(order.begin(), order.end(), Index{0});
  auto pos = static_cast<std::size_t>(std::ceil(static_cast<double>(order.size()) * params_.tau));
  pos = std::clamp<std::size_t>(pos, 1, order.size()) - 1;
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pos), order.end(),
                   [&](Index a, Index b) { return s[ei(a)] != s[ei(b)] ? s[ei(a)] > s[ei(b)] : a < b; });
  return GladAnchor{order[pos], s[ei(order[pos])]};
}

std::optional<Index> GladLearner::next_query() {
  if (pending_) return pending_;
  if (labeled_.size() >= budget_) return std::nullopt;
  const Vector s = scores();
  std::optional<Index> best;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (is_labeled_[static_cast<std::size_t>(i)]) continue;
    if (!best || s[i] > s[ei(*best)]) best = static_cast<Index>(i);
  }
  pending_ = best;
  return pending_;
}

void GladLearner::feedback(Index id, Label y) {
  if (!pending_ || *pending_ != id)
    throw ContractViolation("feedback: instance " + std::to_string(id) + " is not the pending query");
  // Anchors come from the scores before this label is added.
  const GladAnchor a = anchor();
  pending_.reset();
  is_labeled_[id] = true;
  labeled_.push_back(GladLabel{id, y});
  if (params_.learn) retrain(a);
  const Vector p = net_.parameters();
  history_.push_back(HistoryRecord{labeled_.size(), id, y, anomalies_found(),
                                   fnv1a(p.data(), static_cast<std::size_t>(p.size()) * sizeof(double))});
}

Index GladLearner::anomalies_found() const {
  return static_cast<Index>(std::count_if(labeled_.begin(), labeled_.end(),
                                          [](const GladLabel& l) { return l.label == Label::anomaly; }));
}

void GladLearner::retrain(const GladAnchor& a) {
  // One pass over D with every labeled instance repeated `upsample` times.
  struct Item {
    Index row;
    int labeled;  // index into labeled_ or -1
  };
  std::vector<Item> items;
  items.reserve(static_cast<std::size_t>(data_->rows()) + labeled_.size() * params_.upsample);
  for (Eigen::Index i = 0; i < data_->rows(); ++i) items.push_back({static_cast<Index>(i), -1});
  for (std::size_t l = 0; l < labeled_.size(); ++l)
    for (Index k = 0; k < params_.upsample; ++k) items.push_back({labeled_[l].row, static_cast<int>(l)});
  std::shuffle(items.begin(), items.end(), rng_);

  const FssnObjective objective(*data_, member_scores_, params_.bias, params_.lambda);
  const Vector mask = net_.weight_mask();
  Vector grad;
  for (std::size_t start = 0; start < items.size(); start += params_.batch) {
    const std::size_t end = std::min(items.size(), start + params_.batch);
    std::vector<GladLabel> lab;
    std::vector<Index> prior;
    for (std::size_t i = start; i < end; ++i) {
      if (items[i].labeled >= 0)
        lab.push_back(labeled_[static_cast<std::size_t>(items[i].labeled)]);
      else
        prior.push_back(items[i].row);
    }
    objective.value_and_gradient(net_, lab, a, prior, grad);
    const Vector theta = net_.parameters();
    grad += 2.0 * params_.l2 * mask.cwiseProduct(theta);
    velocity_ = params_.momentum * velocity_ - params_.step * grad;
    net_.set_parameters(theta + velocity_);
  }
}

Vector GladLearner::relevance(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != data_->cols()) throw ContractViolation("relevance: dimension mismatch");
  Matrix row = x.transpose();
  return net_.forward(row).row(0).transpose();
}

Index GladLearner::most_relevant_member(const Eigen::Ref<const Vector>& x) const {
  return aad::most_relevant_member(relevance(x));
}

}  // namespace aad
