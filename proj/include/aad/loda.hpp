#pragma once

#include <random>
#include <vector>

#include <json.hpp>

#include "aad/types.hpp"

namespace aad {

/// Sparse random projection with a one-dimensional histogram density.
struct LodaProjection {
  Vector beta;          // d entries, ceil(sqrt(d)) of them nonzero
  double low = 0.0;     // left edge of the first bin
  double width = 1.0;   // bin width
  Vector probability;   // per bin, Laplace-smoothed, sums to 1

  Index bins() const { return static_cast<Index>(probability.size()); }
  Index bin_of(double projected) const;
  double density(double projected) const;

  nlohmann::json to_json() const;
  static LodaProjection from_json(const nlohmann::json& j);
};

class LodaEnsemble {
 public:
  LodaEnsemble() = default;
  explicit LodaEnsemble(std::vector<LodaProjection> projections) : projections_(std::move(projections)) {}

  Index size() const { return projections_.size(); }
  const LodaProjection& operator[](Index m) const { return projections_[m]; }
  const std::vector<LodaProjection>& projections() const { return projections_; }

  nlohmann::json to_json() const;
  static LodaEnsemble from_json(const nlohmann::json& j);

 private:
  std::vector<LodaProjection> projections_;
};

/// Sturges' rule: ceil(1 + log2(n)).
Index sturges_bins(Index n);

/// Histogram over the projected data: `bins` equal-width bins spanning
/// [min, max], widened by one bin on each side, add-one smoothed.
LodaProjection fit_projection(const Matrix& data, Vector beta, Index bins);

/// M projections; bins == 0 selects Sturges' rule.
LodaEnsemble fit_loda(const Matrix& data, Index projections, Index bins, std::mt19937_64& rng);
LodaEnsemble fit_loda(const Matrix& data, const std::vector<Vector>& betas, Index bins);

/// s_m(x) = -log f_m(x).
double member_score(const LodaProjection& proj, const Eigen::Ref<const Vector>& x);
/// Member scores s_1..s_M for each row of `data` (n x M).
Matrix member_scores(const LodaEnsemble& ens, const Matrix& data);
/// Mean of member scores.
double loda_score(const LodaEnsemble& ens, const Eigen::Ref<const Vector>& x);

}  // namespace aad
