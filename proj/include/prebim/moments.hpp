#pragma once

#include "prebim/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>

namespace prebim {

// Row/column positions inside the (g+3) x (g+3) population covariance over
// (G_1..G_g, U, X, Y).
struct PopulationLayout {
  std::size_t variants;
  [[nodiscard]] std::size_t u() const { return variants; }
  [[nodiscard]] std::size_t x() const { return variants + 1; }
  [[nodiscard]] std::size_t y() const { return variants + 2; }
  [[nodiscard]] std::size_t size() const { return variants + 3; }
};

/// Genotype covariance implied by the variances and the dependency list.
/// Dependencies are applied in order; each target's covariance with every
/// other variant is coefficient * (source's covariance).
inline Eigen::MatrixXd genotype_covariance(const ModelParams& params) {
  const auto g = params.variants();
  Eigen::MatrixXd cov = params.variant_variances.asDiagonal();
  for (const auto& dep : params.dependencies) {
    const double c = dep.coefficient;
    const double noise = params.variant_variances(dep.target) - c * c * cov(dep.source, dep.source);
    if (noise <= 0.0)
      throw InvalidInput("dependent variant variance must exceed coefficient^2 * source variance");
    for (std::size_t i = 0; i < g; ++i) {
      if (i == dep.target) continue;
      cov(dep.target, i) = c * cov(dep.source, i);
      cov(i, dep.target) = cov(dep.target, i);
    }
    cov(dep.target, dep.target) = c * c * cov(dep.source, dep.source) + noise;
  }
  return cov;
}

/// Exact covariance of (G, U, X, Y) from the reduced form
///   X = D (P + beta_yx Q),  Y = D (beta_xy P + Q),  D = 1/(1 - beta_xy beta_yx)
/// with P = G'gamma_x + gamma_xu U + e2 and Q = G'gamma_y + gamma_yu U + e3.
inline Eigen::MatrixXd population_moments(const ModelParams& params) {
  params.validate();
  const auto g = params.variants();
  const double delta = params.reduction_factor();
  const PopulationLayout at{g};

  // Sources: (G_1..G_g, e1, e2, e3).
  const auto s = g + 3;
  Eigen::MatrixXd source_cov = Eigen::MatrixXd::Zero(s, s);
  source_cov.topLeftCorner(g, g) = genotype_covariance(params);
  source_cov.bottomRightCorner(3, 3) = params.noise_variances.asDiagonal();

  Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(at.size(), s);
  mix.topLeftCorner(g, g).setIdentity();

  Eigen::RowVectorXd u = Eigen::RowVectorXd::Zero(s);
  u.head(g) = params.gamma_u.transpose();
  u(g) = 1.0;

  Eigen::RowVectorXd p = params.gamma_xu * u;
  p.head(g) += params.gamma_x.transpose();
  p(g + 1) += 1.0;

  Eigen::RowVectorXd q = params.gamma_yu * u;
  q.head(g) += params.gamma_y.transpose();
  q(g + 2) += 1.0;

  mix.row(at.u()) = u;
  mix.row(at.x()) = delta * (p + params.beta_yx * q);
  mix.row(at.y()) = delta * (params.beta_xy * p + q);

  Eigen::MatrixXd cov = mix * source_cov * mix.transpose();
  return 0.5 * (cov + cov.transpose());
}

// Variance ordering: beta_xy^2 Var(X) < Var(Y) and beta_yx^2 Var(Y) <= Var(X).
inline bool satisfies_direction_assumption(const ModelParams& params, const Eigen::MatrixXd& moments) {
  const PopulationLayout at{params.variants()};
  const double vx = moments(at.x(), at.x());
  const double vy = moments(at.y(), at.y());
  return params.beta_xy * params.beta_xy * vx < vy && params.beta_yx * params.beta_yx * vy <= vx;
}

inline bool satisfies_direction_assumption(const ModelParams& params) {
  return satisfies_direction_assumption(params, population_moments(params));
}

/// Second moments over (G_1..G_g, X, Y), either empirical (divided by n) or
/// exact population values. Every TSLS / pseudo-residual quantity used by the
/// search is a rational function of these entries, so once built each query
/// costs O(|subset|^3) independent of the sample size.
class CrossMoments {
 public:
  static CrossMoments from_dataset(const Dataset& data) {
    const auto n = data.samples();
    const auto g = data.variants();
    Eigen::MatrixXd joined(n, g + 2);
    joined.leftCols(g) = data.genotypes();
    joined.col(g) = data.x();
    joined.col(g + 1) = data.y();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g + 2, g + 2);
    m.selfadjointView<Eigen::Lower>().rankUpdate(joined.transpose(), 1.0 / static_cast<double>(n));
    m = m.selfadjointView<Eigen::Lower>();
    return CrossMoments(std::move(m), n);
  }

  // Drops the confounder row/column from a population_moments matrix.
  static CrossMoments from_population(const Eigen::MatrixXd& population) {
    const auto total = static_cast<std::size_t>(population.rows());
    if (total < 4 || population.cols() != population.rows())
      throw InvalidInput("population moment matrix must be square with at least one variant");
    const auto g = total - 3;
    Eigen::MatrixXd m(g + 2, g + 2);
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < g; ++i) keep.push_back(static_cast<Eigen::Index>(i));
    keep.push_back(static_cast<Eigen::Index>(g + 1));
    keep.push_back(static_cast<Eigen::Index>(g + 2));
    m = population(keep, keep);
    return CrossMoments(std::move(m), 0);
  }

  [[nodiscard]] std::size_t variants() const { return static_cast<std::size_t>(m_.rows()) - 2; }
  // 0 for population moments.
  [[nodiscard]] std::size_t samples() const { return n_; }
  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return m_; }

  [[nodiscard]] Eigen::Index x() const { return m_.rows() - 2; }
  [[nodiscard]] Eigen::Index y() const { return m_.rows() - 1; }

  // Moments with X and Y exchanged.
  [[nodiscard]] CrossMoments swapped() const {
    std::vector<Eigen::Index> order;
    for (Eigen::Index i = 0; i < x(); ++i) order.push_back(i);
    order.push_back(y());
    order.push_back(x());
    return CrossMoments(m_(order, order), n_);
  }

  /// TSLS slope of Y on X instrumented by `subset`:
  ///   (s_GX' A^-1 s_GY) / (s_GX' A^-1 s_GX),  A = G_S'G_S.
  [[nodiscard]] double tsls(const IndexSet& subset, double tolerance = 1e-10) const {
    if (subset.empty()) throw InvalidInput("TSLS needs a nonempty instrument set");
    const auto idx = to_index(subset);
    const Eigen::MatrixXd a = m_(idx, idx);
    const Eigen::VectorXd s_gx = m_(idx, x());
    const Eigen::VectorXd s_gy = m_(idx, y());

    const Eigen::VectorXd scale = a.diagonal().cwiseSqrt();
    if ((scale.array() <= 0.0).any())
      throw SingularInstruments("instrument column with zero variance");
    const Eigen::MatrixXd normalized = scale.cwiseInverse().asDiagonal() * a * scale.cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normalized, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < 1e-10)
      throw SingularInstruments("instrument columns are linearly dependent");

    const Eigen::LDLT<Eigen::MatrixXd> solver(a);
    const Eigen::VectorXd first_stage = solver.solve(s_gx);
    const double signal = s_gx.dot(first_stage);
    const double sxx = m_(x(), x());
    if (!(sxx > 0.0) || std::abs(signal) / sxx < tolerance)
      throw WeakInstruments("first-stage signal below tolerance");
    return first_stage.dot(s_gy) / signal;
  }

  // Cov(Y - omega X, G_j) with omega = tsls(subset).
  [[nodiscard]] double residual_cov(const IndexSet& subset, std::size_t j, double tolerance = 1e-10) const {
    return residual_cov_with(tsls(subset, tolerance), j);
  }

  [[nodiscard]] double residual_cov_with(double omega, std::size_t j) const {
    const auto jj = static_cast<Eigen::Index>(j);
    return m_(jj, y()) - omega * m_(jj, x());
  }

  // corr(Y - omega X, G_j) with omega = tsls(subset).
  [[nodiscard]] double residual_corr(const IndexSet& subset, std::size_t j, double tolerance = 1e-10) const {
    return residual_corr_with(tsls(subset, tolerance), j);
  }

  [[nodiscard]] double residual_corr_with(double omega, std::size_t j) const {
    const auto jj = static_cast<Eigen::Index>(j);
    const double var_pr = m_(y(), y()) - 2.0 * omega * m_(x(), y()) + omega * omega * m_(x(), x());
    const double var_g = m_(jj, jj);
    if (!(var_pr > 0.0) || !(var_g > 0.0)) return 0.0;
    const double r = residual_cov_with(omega, j) / std::sqrt(var_pr * var_g);
    return std::clamp(r, -1.0, 1.0);
  }

  /// Null-variance inflation of corr(Y - omega_S X, G_j) caused by estimating
  /// omega_S from the same sample (delta method). Writing e_k for the sample
  /// covariance of the true residual with G_k, the numerator is
  ///   e_j - w'e_S,  w = C_jX A^-1 s_SX / (s_SX' A^-1 s_SX),
  /// so its variance relative to Var(e_j) is
  ///   1 - 2 w'C_Sj / C_jj + C_jX^2 / (C_jj s_SX' A^-1 s_SX).
  /// Equals 1 + R^2_j / R^2_S for mutually independent variants.
  [[nodiscard]] double residual_variance_inflation(const IndexSet& subset, std::size_t j) const {
    const auto idx = to_index(subset);
    const auto jj = static_cast<Eigen::Index>(j);
    const Eigen::MatrixXd a = m_(idx, idx);
    const Eigen::VectorXd s_gx = m_(idx, x());
    const Eigen::VectorXd c_sj = m_(idx, jj);
    const Eigen::VectorXd b = a.ldlt().solve(s_gx);
    const double signal = s_gx.dot(b);
    const double c_jj = m_(jj, jj);
    const double c_jx = m_(jj, x());
    if (!(signal > 0.0) || !(c_jj > 0.0)) return 1.0;
    const double kappa = 1.0 - 2.0 * c_jx * b.dot(c_sj) / (signal * c_jj) + c_jx * c_jx / (signal * c_jj);
    return std::max(kappa, 1e-12);
  }

  [[nodiscard]] double corr_with_x(std::size_t j) const { return corr(static_cast<Eigen::Index>(j), x()); }
  [[nodiscard]] double corr_with_y(std::size_t j) const { return corr(static_cast<Eigen::Index>(j), y()); }

 private:
  CrossMoments(Eigen::MatrixXd m, std::size_t n) : m_(std::move(m)), n_(n) {}

  static std::vector<Eigen::Index> to_index(const IndexSet& subset) {
    return {subset.begin(), subset.end()};
  }

  [[nodiscard]] double corr(Eigen::Index a, Eigen::Index b) const {
    const double denom = std::sqrt(m_(a, a) * m_(b, b));
    return denom > 0.0 ? m_(a, b) / denom : 0.0;
  }

  Eigen::MatrixXd m_;
  std::size_t n_;
};

}  // namespace prebim
