#include "aad/loda.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aad {

Index LodaProjection::bin_of(double projected) const {
  // Edge bins take everything outside the fitted range [lo, hi]; the
  // interior bins are [lo + k w, lo + (k+1) w) with hi folded into the last.
  const Index inner = bins() - 2;
  const double lo = low + width;
  const double hi = lo + width * static_cast<double>(inner);
  const double slack = 1e-9 * width;
  if (projected < lo - slack) return 0;
  if (projected > hi + slack) return bins() - 1;
  const auto k = static_cast<Index>(std::max(0.0, std::floor((projected - lo) / width)));
  return 1 + std::min(k, inner - 1);
}

double LodaProjection::density(double projected) const {
  return probability[static_cast<Eigen::Index>(bin_of(projected))] / width;
}

nlohmann::json LodaProjection::to_json() const {
  return {{"beta", std::vector<double>(beta.begin(), beta.end())},
          {"low", low},
          {"width", width},
          {"probability", std::vector<double>(probability.begin(), probability.end())}};
}

LodaProjection LodaProjection::from_json(const nlohmann::json& j) {
  LodaProjection p;
  const auto beta = j.at("beta").get<std::vector<double>>();
  const auto prob = j.at("probability").get<std::vector<double>>();
  p.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  p.probability = Eigen::Map<const Vector>(prob.data(), static_cast<Eigen::Index>(prob.size()));
  p.low = j.at("low").get<double>();
  p.width = j.at("width").get<double>();
  return p;
}

nlohmann::json LodaEnsemble::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& p : projections_) arr.push_back(p.to_json());
  return {{"format", "aad-loda"}, {"version", 1}, {"projections", std::move(arr)}};
}

LodaEnsemble LodaEnsemble::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "aad-loda") throw std::runtime_error("LodaEnsemble::from_json: unsupported format");
  std::vector<LodaProjection> ps;
  for (const auto& p : j.at("projections")) ps.push_back(LodaProjection::from_json(p));
  return LodaEnsemble(std::move(ps));
}

Index sturges_bins(Index n) {
  return static_cast<Index>(std::ceil(1.0 + std::log2(static_cast<double>(std::max<Index>(n, 1)))));
}

LodaProjection fit_projection(const Matrix& data, Vector beta, Index bins) {
  if (bins < 2) throw ContractViolation("fit_projection: need at least two bins");
  if (data.rows() == 0) throw ContractViolation("fit_projection: empty data");
  const Vector proj = data * beta;
  double lo = proj.minCoeff(), hi = proj.maxCoeff();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  LodaProjection p;
  p.beta = std::move(beta);
  p.width = (hi - lo) / static_cast<double>(bins);
  p.low = lo - p.width;
  const Index total = bins + 2;
  Vector counts = Vector::Ones(static_cast<Eigen::Index>(total));
  for (const double v : proj) counts[static_cast<Eigen::Index>(p.bin_of(v))] += 1.0;
  p.probability = counts / counts.sum();
  return p;
}

LodaEnsemble fit_loda(const Matrix& data, const std::vector<Vector>& betas, Index bins) {
  if (betas.empty()) throw ContractViolation("fit_loda: need at least one projection");
  const Index b = bins == 0 ? sturges_bins(static_cast<Index>(data.rows())) : bins;
  std::vector<LodaProjection> ps;
  for (const auto& beta : betas) ps.push_back(fit_projection(data, beta, b));
  return LodaEnsemble(std::move(ps));
}

LodaEnsemble fit_loda(const Matrix& data, Index projections, Index bins, std::mt19937_64& rng) {
  if (projections < 1) throw ContractViolation("fit_loda: need at least one projection");
  const auto d = static_cast<Index>(data.cols());
  const auto nonzero = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(d))));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> betas;
  for (Index m = 0; m < projections; ++m) {
    std::vector<Index> dims(d);
    std::iota(dims.begin(), dims.end(), Index{0});
    for (Index i = 0; i < nonzero; ++i) {
      std::uniform_int_distribution<Index> pick(i, d - 1);
      std::swap(dims[i], dims[pick(rng)]);
    }
    Vector beta = Vector::Zero(static_cast<Eigen::Index>(d));
    for (Index i = 0; i < nonzero; ++i) {
      double v = 0.0;
      while (v == 0.0) v = normal(rng);
      beta[static_cast<Eigen::Index>(dims[i])] = v;
    }
    betas.push_back(std::move(beta));
  }
  return fit_loda(data, betas, bins);
}

double member_score(const LodaProjection& proj, const Eigen::Ref<const Vector>& x) {
  return -std::log(proj.density(proj.beta.dot(x)));
}

Matrix member_scores(const LodaEnsemble& ens, const Matrix& data) {
  Matrix s(data.rows(), static_cast<Eigen::Index>(ens.size()));
  for (Index m = 0; m < ens.size(); ++m) {
    const auto& p = ens[m];
    const Vector proj = data * p.beta;
    for (Eigen::Index i = 0; i < data.rows(); ++i) s(i, static_cast<Eigen::Index>(m)) = -std::log(p.density(proj[i]));
  }
  return s;
}

double loda_score(const LodaEnsemble& ens, const Eigen::Ref<const Vector>& x) {
  double sum = 0.0;
  for (const auto& p : ens.projections()) sum += member_score(p, x);
  return sum / static_cast<double>(ens.size());
}

}  // namespace aad
