#pragma once

#include "prebim/moments.hpp"
#include "prebim/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace prebim {

// Pearson correlation test with the Fisher transformation.
struct CorrelationTest {
  double r = 0.0;
  double z_stat = 0.0;
  double p_value = 1.0;
  bool reject = false;
};

namespace detail {

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& genotypes, const IndexSet& subset) {
  for (auto j : subset)
    if (j >= static_cast<std::size_t>(genotypes.cols()))
      throw InvalidInput("instrument index " + std::to_string(j) + " out of range");
  const std::vector<Eigen::Index> cols(subset.begin(), subset.end());
  return genotypes(Eigen::all, cols);
}

inline void require_same_length(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::Index min_len) {
  if (a.size() != b.size()) throw InvalidInput("sequences must have the same length");
  if (a.size() < min_len) throw InvalidInput("sequences too short");
}

}  // namespace detail

/// Least-squares slope of y on x (the NAIVE baseline): Cov(x,y) / Var(x).
inline double ols_estimate(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  detail::require_same_length(x, y, 2);
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double sxx = xc.squaredNorm();
  if (!(sxx > 0.0)) throw ZeroVariance("x is constant");
  return xc.dot(yc) / sxx;
}

/// Two-stage least squares: regress x on the selected genotype columns, then
/// y on the fitted values, i.e. [x'Px]^-1 x'Py with P the projection onto the
/// span of the selected columns. Columns are used as given (no intercept);
/// Dataset centers them on construction.
inline double tsls_estimate(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& genotypes, const IndexSet& subset,
                            double tolerance = 1e-10) {
  if (subset.empty()) throw InvalidInput("TSLS needs a nonempty instrument set");
  detail::require_same_length(x, y, 2);
  if (genotypes.rows() != x.size()) throw InvalidInput("genotype rows must match sample size");

  const Eigen::MatrixXd z = detail::select_columns(genotypes, subset);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  qr.setThreshold(1e-10);
  if (qr.rank() < z.cols()) throw SingularInstruments("instrument columns are linearly dependent");

  const Eigen::VectorXd fitted = z * qr.solve(x);
  const double signal = fitted.dot(x);
  const double sxx = x.squaredNorm();
  if (!(sxx > 0.0) || std::abs(signal) / sxx < tolerance)
    throw WeakInstruments("first-stage signal below tolerance");
  return fitted.dot(y) / signal;
}

inline double tsls_estimate(const Dataset& data, const IndexSet& subset, double tolerance = 1e-10) {
  return tsls_estimate(data.x(), data.y(), data.genotypes(), subset, tolerance);
}

/// TSLS limit from a population_moments matrix over (G, U, X, Y).
inline double tsls_population(const Eigen::MatrixXd& moments, const IndexSet& subset,
                              double tolerance = 1e-10) {
  return CrossMoments::from_population(moments).tsls(subset, tolerance);
}

/// Pseudo-residual y - x * omega, omega = TSLS(x, y, subset).
inline Eigen::VectorXd pseudo_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                       const Eigen::MatrixXd& genotypes, const IndexSet& subset,
                                       double tolerance = 1e-10) {
  const double omega = tsls_estimate(x, y, genotypes, subset, tolerance);
  return y - omega * x;
}

inline Eigen::VectorXd pseudo_residual(const Dataset& data, const IndexSet& subset, double tolerance = 1e-10) {
  return pseudo_residual(data.x(), data.y(), data.genotypes(), subset, tolerance);
}

inline double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  detail::require_same_length(a, b, 2);
  const Eigen::VectorXd ac = a.array() - a.mean();
  const Eigen::VectorXd bc = b.array() - b.mean();
  const double saa = ac.squaredNorm();
  const double sbb = bc.squaredNorm();
  if (!(saa > 0.0) || !(sbb > 0.0)) throw ZeroVariance("correlation of a constant sequence");
  return std::clamp(ac.dot(bc) / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Two-sided test of corr = 0: z = atanh(r) sqrt(n - 3) against N(0, 1).
inline CorrelationTest fisher_z_test(double r, std::size_t n, double alpha) {
  if (n <= 3) throw InvalidInput("Fisher z test needs n > 3");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
  if (!(std::abs(r) < 1.0)) throw SaturatedCorrelation("|r| = 1 gives an infinite Fisher z statistic");
  CorrelationTest t;
  t.r = r;
  t.z_stat = std::atanh(r) * std::sqrt(static_cast<double>(n) - 3.0);
  t.p_value = std::erfc(std::abs(t.z_stat) / std::sqrt(2.0));
  t.reject = t.p_value < alpha;
  return t;
}

/// One Fisher-z test per member j of `subset`, on
/// corr(Y - X * TSLS(subset \ {j}), G_j).
inline std::vector<CorrelationTest> leave_one_out_tests(const CrossMoments& moments, const IndexSet& subset,
                                                        double alpha, double tolerance = 1e-10,
                                                        bool slope_correction = false) {
  if (subset.size() < 2) throw InvalidInput("validity test needs at least two variants");
  if (moments.samples() <= 3) throw InvalidInput("validity test needs sample moments with n > 3");
  std::vector<CorrelationTest> out;
  out.reserve(subset.size());
  for (auto j : subset) {
    const auto rest = without(subset, j);
    const double r = moments.residual_corr(rest, j, tolerance);
    auto t = fisher_z_test(r, moments.samples(), alpha);
    if (slope_correction) {
      t.z_stat /= std::sqrt(moments.residual_variance_inflation(rest, j));
      t.p_value = std::erfc(std::abs(t.z_stat) / std::sqrt(2.0));
      t.reject = t.p_value < alpha;
    }
    out.push_back(t);
  }
  return out;
}

/// True iff no leave-one-out pseudo-residual correlation is significant at
/// `alpha`; a single rejection marks the set invalid.
inline bool valid_set_test(const CrossMoments& moments, const IndexSet& subset, double alpha,
                           double tolerance = 1e-10, bool slope_correction = false) {
  for (const auto& t : leave_one_out_tests(moments, subset, alpha, tolerance, slope_correction))
    if (t.reject) return false;
  return true;
}

inline bool valid_set_test(const Dataset& data, const IndexSet& subset, double alpha, double tolerance = 1e-10,
                           bool slope_correction = false) {
  return valid_set_test(CrossMoments::from_dataset(data), subset, alpha, tolerance, slope_correction);
}

// Settings shared by every validity decision inside the search.
struct ValidityTest {
  double alpha = 0.05;
  double tolerance = 1e-10;
  bool slope_correction = true;
};

}  // namespace prebim
