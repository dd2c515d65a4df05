#pragma once

#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "aad/active.hpp"
#include "aad/loda.hpp"
#include "aad/types.hpp"

namespace aad {

/// Feature-space suppression network: one tanh hidden layer and M logistic
/// outputs p_m(x), the local relevance of ensemble member m at x.
template <typename Scalar>
class Fssn {
 public:
  using Vec = VectorT<Scalar>;
  using Mat = MatrixT<Scalar>;

  struct Gradient {
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;
  };

  struct Cache {
    Mat input;   // standardized inputs
    Mat hidden;  // tanh activations
    Mat output;  // relevances
  };

  Fssn() = default;

  /// Glorot-uniform hidden layer; output weights start at zero with bias
  /// logit(b), so every output equals b before any training.
  Fssn(Index inputs, Index members, Index hidden, Scalar bias_prob, std::mt19937_64& rng)
      : mean_(Vec::Zero(static_cast<Eigen::Index>(inputs))),
        scale_(Vec::Ones(static_cast<Eigen::Index>(inputs))),
        w1_(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(inputs)),
        b1_(Vec::Zero(static_cast<Eigen::Index>(hidden))),
        w2_(Mat::Zero(static_cast<Eigen::Index>(members), static_cast<Eigen::Index>(hidden))),
        b2_(Vec::Constant(static_cast<Eigen::Index>(members), std::log(bias_prob / (Scalar(1) - bias_prob)))) {
    const double limit = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < w1_.size(); ++i) w1_.data()[i] = static_cast<Scalar>(u(rng));
  }

  /// Random output layer as well; used to exercise priming from scratch.
  void randomize_output(std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Eigen::Index i = 0; i < w2_.size(); ++i) w2_.data()[i] = static_cast<Scalar>(u(rng));
    for (Eigen::Index i = 0; i < b2_.size(); ++i) b2_[i] += static_cast<Scalar>(u(rng));
  }

  /// Inputs are standardized with these statistics before the first layer.
  void set_input_scaling(const Vec& mean, const Vec& scale) {
    mean_ = mean;
    scale_ = scale;
  }

  Index inputs() const { return static_cast<Index>(w1_.cols()); }
  Index hidden() const { return static_cast<Index>(w1_.rows()); }
  Index members() const { return static_cast<Index>(w2_.rows()); }

  Mat forward(const Mat& x, Cache* cache = nullptr) const {
    Mat input = (x.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
    Mat hidden = ((input * w1_.transpose()).rowwise() + b1_.transpose()).array().tanh();
    Mat logits = (hidden * w2_.transpose()).rowwise() + b2_.transpose();
    Mat out = (Scalar(1) / (Scalar(1) + (-logits.array()).exp())).matrix();
    if (cache) {
      cache->input = std::move(input);
      cache->hidden = std::move(hidden);
      cache->output = out;
    }
    return out;
  }

  /// Parameter gradient given dL/dlogits (n x M).
  Gradient backward(const Cache& cache, const Mat& d_logits) const {
    Gradient g;
    g.w2 = d_logits.transpose() * cache.hidden;
    g.b2 = d_logits.colwise().sum().transpose();
    const Mat d_pre = ((d_logits * w2_).array() * (Scalar(1) - cache.hidden.array().square())).matrix();
    g.w1 = d_pre.transpose() * cache.input;
    g.b1 = d_pre.colwise().sum().transpose();
    return g;
  }

  Index parameter_count() const {
    return static_cast<Index>(w1_.size() + b1_.size() + w2_.size() + b2_.size());
  }

  Vec parameters() const {
    Vec p(static_cast<Eigen::Index>(parameter_count()));
    pack(w1_, b1_, w2_, b2_, p);
    return p;
  }

  void set_parameters(const Vec& p) {
    Eigen::Index o = unpack_into(w1_, p, 0);
    o = unpack_into(b1_, p, o);
    o = unpack_into(w2_, p, o);
    unpack_into(b2_, p, o);
  }

  Vec flatten(const Gradient& g) const {
    Vec p(static_cast<Eigen::Index>(parameter_count()));
    pack(g.w1, g.b1, g.w2, g.b2, p);
    return p;
  }

  /// Weight matrices only (no biases), for L2 regularization.
  Scalar weight_sq_norm() const { return w1_.squaredNorm() + w2_.squaredNorm(); }
  Vec weight_mask() const {
    Vec mask = Vec::Zero(static_cast<Eigen::Index>(parameter_count()));
    mask.head(w1_.size()).setOnes();
    mask.segment(w1_.size() + b1_.size(), w2_.size()).setOnes();
    return mask;
  }

  nlohmann::json to_json() const {
    const Vec p = parameters();
    return {{"inputs", inputs()},
            {"hidden", hidden()},
            {"members", members()},
            {"mean", std::vector<double>(mean_.begin(), mean_.end())},
            {"scale", std::vector<double>(scale_.begin(), scale_.end())},
            {"parameters", std::vector<double>(p.begin(), p.end())}};
  }

 private:
  template <typename A, typename B, typename C, typename D>
  static void pack(const A& w1, const B& b1, const C& w2, const D& b2, Vec& p) {
    Eigen::Index o = 0;
    p.segment(o, w1.size()) = Eigen::Map<const Vec>(w1.data(), w1.size());
    o += w1.size();
    p.segment(o, b1.size()) = b1;
    o += b1.size();
    p.segment(o, w2.size()) = Eigen::Map<const Vec>(w2.data(), w2.size());
    o += w2.size();
    p.segment(o, b2.size()) = b2;
  }

  template <typename M>
  static Eigen::Index unpack_into(M& m, const Vec& p, Eigen::Index o) {
    Eigen::Map<Vec>(m.data(), m.size()) = p.segment(o, m.size());
    return o + m.size();
  }

  Vec mean_, scale_;
  Mat w1_;
  Vec b1_;
  Mat w2_;
  Vec b2_;
};

using FssnNetwork = Fssn<double>;

/// sum_m -b log p_m - (1 - b) log(1 - p_m), averaged over rows.
double prior_loss(const Matrix& relevance, double bias);

/// max(0, y (q - score)).
inline double glad_hinge(double q, double score, Label y) {
  return std::max(0.0, static_cast<double>(sign(y)) * (q - score));
}

struct GladLabel {
  Index row = 0;  // row of D
  Label label = Label::nominal;
};

struct GladAnchor {
  Index row = 0;   // x_tau
  double q = 0.0;  // q_tau, frozen
};

/// Combined loss: mean hinge over labeled rows against q_tau and the live
/// Score(x_tau), plus lambda / |D| * sum of prior losses over `prior_rows`.
class FssnObjective {
 public:
  FssnObjective(const Matrix& data, const Matrix& member_scores, double bias, double lambda);

  /// Loss value over the given rows; an empty labeled set leaves the prior term.
  double value(const FssnNetwork& net, const std::vector<GladLabel>& labeled, const GladAnchor& anchor,
               const std::vector<Index>& prior_rows) const;
  /// Loss and flattened gradient.
  double value_and_gradient(const FssnNetwork& net, const std::vector<GladLabel>& labeled, const GladAnchor& anchor,
                            const std::vector<Index>& prior_rows, Vector& grad) const;

 private:
  const Matrix* data_;
  const Matrix* scores_;
  double bias_;
  double lambda_;
};

struct GladParams {
  double bias = 0.5;
  double lambda = 1.0;
  double tau = 0.03;
  Index hidden = 0;  // 0 selects max(50, 3M)
  double step = 0.01;
  double momentum = 0.9;
  Index batch = 64;
  double l2 = 1e-3;
  Index upsample = 5;
  Index prime_epochs = 200;
  double prime_step = 0.05;
  double prime_tolerance = 0.01;
  bool learn = true;
  std::uint64_t seed = 0;
};

struct PrimeReport {
  bool converged = false;
  Index epochs = 0;
  double max_deviation = 0.0;
};

/// Cross-entropy toward b at every output over D until every output lies
/// within the tolerance of b, or the epoch cap.
PrimeReport prime_fssn(FssnNetwork& net, const Matrix& data, double bias, const GladParams& params,
                       std::mt19937_64& rng);

/// Largest |p_m(x) - b| over D.
double max_prime_deviation(const FssnNetwork& net, const Matrix& data, double bias);

/// Score(x) = sum_m s_m(x) p_m(x) for each row.
Vector glad_scores(const FssnNetwork& net, const Matrix& data, const Matrix& member_scores);

/// argmax_m p_m(x), ties to the lowest index.
Index most_relevant_member(const Vector& relevance);

/// GLAD session over a fixed dataset D.
class GladLearner {
 public:
  GladLearner(const Matrix& data, LodaEnsemble ensemble, Index budget, GladParams params = {});

  std::optional<Index> next_query();
  std::optional<Index> pending() const { return pending_; }
  void feedback(Index id, Label y);

  Vector scores() const { return glad_scores(net_, *data_, member_scores_); }
  Vector relevance(const Eigen::Ref<const Vector>& x) const;
  Matrix relevance_all() const { return net_.forward(*data_); }
  Index most_relevant_member(const Eigen::Ref<const Vector>& x) const;

  const FssnNetwork& network() const { return net_; }
  const LodaEnsemble& ensemble() const { return ensemble_; }
  const Matrix& member_score_matrix() const { return member_scores_; }
  const PrimeReport& prime_report() const { return prime_; }
  const std::vector<HistoryRecord>& history() const { return history_; }
  const std::vector<GladLabel>& labeled() const { return labeled_; }
  Index spent() const { return labeled_.size(); }
  Index budget_remaining() const { return budget_ - labeled_.size(); }
  Index anomalies_found() const;

  /// Current tau-quantile anchor over D.
  GladAnchor anchor() const;

 private:
  void retrain(const GladAnchor& anchor);

  const Matrix* data_;
  LodaEnsemble ensemble_;
  Matrix member_scores_;
  GladParams params_;
  Index budget_;
  std::mt19937_64 rng_;
  FssnNetwork net_;
  PrimeReport prime_;
  std::vector<bool> is_labeled_;
  std::vector<GladLabel> labeled_;
  std::optional<Index> pending_;
  std::vector<HistoryRecord> history_;
  Vector velocity_;
};

}  // namespace aad
