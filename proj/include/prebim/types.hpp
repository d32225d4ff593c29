#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prebim {

// Sorted, duplicate-free list of variant (column) indices.
using IndexSet = std::vector<std::size_t>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: wrong shapes, too few samples or variants.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Selected instrument columns do not have full column rank.
class SingularInstruments : public Error {
 public:
  using Error::Error;
};

// First-stage signal too small for a stable TSLS ratio.
class WeakInstruments : public Error {
 public:
  using Error::Error;
};

// A sequence that must vary has zero variance.
class ZeroVariance : public Error {
 public:
  using Error::Error;
};

// |r| == 1 makes the Fisher transform infinite.
class SaturatedCorrelation : public Error {
 public:
  using Error::Error;
};

// Variant with |corr(G_j, X)| below tolerance in the direction test.
class IrrelevantInstrument : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Index-set helpers
// ---------------------------------------------------------------------------

inline IndexSet make_index_set(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline IndexSet set_union(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline IndexSet set_difference(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline IndexSet set_intersection(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline IndexSet without(const IndexSet& a, std::size_t j) {
  IndexSet out;
  out.reserve(a.size());
  for (auto i : a)
    if (i != j) out.push_back(i);
  return out;
}

inline IndexSet with(const IndexSet& a, std::size_t j) { return set_union(a, IndexSet{j}); }

inline bool contains(const IndexSet& a, std::size_t j) {
  return std::binary_search(a.begin(), a.end(), j);
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Observations of two phenotypes and a genotype matrix (n x g, one column per
/// variant). Immutable once built; the factory centers every column unless
/// told otherwise so downstream covariance formulas can drop intercepts.
class Dataset {
 public:
  static constexpr std::size_t kMinSamples = 4;
  static constexpr std::size_t kMinVariants = 2;

  static Dataset create(Eigen::VectorXd x, Eigen::VectorXd y, Eigen::MatrixXd genotypes,
                        std::vector<std::string> variant_names = {}, bool center = true) {
    const auto n = static_cast<std::size_t>(x.size());
    if (static_cast<std::size_t>(y.size()) != n || static_cast<std::size_t>(genotypes.rows()) != n)
      throw InvalidInput("x, y and genotypes must have the same number of rows");
    if (n < kMinSamples)
      throw InvalidInput("need at least 4 observations (Fisher z requires n > 3), got " +
                         std::to_string(n));
    const auto g = static_cast<std::size_t>(genotypes.cols());
    if (g < kMinVariants)
      throw InvalidInput("need at least two candidate variants (at least two valid IVs are "
                         "required per direction), got " +
                         std::to_string(g));
    if (variant_names.empty()) {
      variant_names.reserve(g);
      for (std::size_t j = 0; j < g; ++j) variant_names.push_back("G_" + std::to_string(j + 1));
    }
    if (variant_names.size() != g) throw InvalidInput("variant_names length must equal column count");
    if (!x.allFinite() || !y.allFinite() || !genotypes.allFinite())
      throw InvalidInput("non-finite value in dataset");

    if (center) {
      x.array() -= x.mean();
      y.array() -= y.mean();
      genotypes.rowwise() -= genotypes.colwise().mean();
    }
    return Dataset(std::move(x), std::move(y), std::move(genotypes), std::move(variant_names));
  }

  [[nodiscard]] std::size_t samples() const { return static_cast<std::size_t>(x_.size()); }
  [[nodiscard]] std::size_t variants() const { return static_cast<std::size_t>(genotypes_.cols()); }
  [[nodiscard]] const Eigen::VectorXd& x() const { return x_; }
  [[nodiscard]] const Eigen::VectorXd& y() const { return y_; }
  [[nodiscard]] const Eigen::MatrixXd& genotypes() const { return genotypes_; }
  [[nodiscard]] const std::vector<std::string>& variant_names() const { return names_; }

  [[nodiscard]] IndexSet all_variants() const {
    IndexSet all(variants());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    return all;
  }

  // Same observations with the two phenotypes exchanged.
  [[nodiscard]] Dataset swapped() const { return Dataset(y_, x_, genotypes_, names_); }

 private:
  Dataset(Eigen::VectorXd x, Eigen::VectorXd y, Eigen::MatrixXd g, std::vector<std::string> names)
      : x_(std::move(x)), y_(std::move(y)), genotypes_(std::move(g)), names_(std::move(names)) {}

  Eigen::VectorXd x_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd genotypes_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Structural model parameters
// ---------------------------------------------------------------------------

// G_target = coefficient * G_source + independent noise. The noise variance is
// implied by the target's total variance in ModelParams::variant_variances.
struct VariantDependence {
  std::size_t source = 0;
  std::size_t target = 0;
  double coefficient = 0.0;
};

/// Ground-truth coefficients of the bi-directional linear model
///   U = G'gamma_u + e1
///   X = beta_yx Y + G'gamma_x + gamma_xu U + e2
///   Y = beta_xy X + G'gamma_y + gamma_yu U + e3
struct ModelParams {
  double beta_xy = 0.0;
  double beta_yx = 0.0;
  Eigen::VectorXd gamma_x;
  Eigen::VectorXd gamma_y;
  Eigen::VectorXd gamma_u;
  double gamma_xu = 0.0;
  double gamma_yu = 0.0;
  Eigen::VectorXd variant_variances;
  Eigen::Vector3d noise_variances = Eigen::Vector3d::Ones();
  // Binomial(2, maf) genotypes when set; Gaussian otherwise.
  std::vector<double> allele_freqs;
  std::vector<VariantDependence> dependencies;

  [[nodiscard]] std::size_t variants() const { return static_cast<std::size_t>(gamma_x.size()); }

  [[nodiscard]] double feedback_gain() const { return beta_xy * beta_yx; }

  // 1 / (1 - beta_xy beta_yx)
  [[nodiscard]] double reduction_factor() const {
    const double d = 1.0 - feedback_gain();
    if (std::abs(d) <= 1e-6) throw InvalidInput("beta_xy * beta_yx must differ from 1");
    return 1.0 / d;
  }

  void validate() const {
    const auto g = variants();
    if (g < 1) throw InvalidInput("model needs at least one variant");
    if (static_cast<std::size_t>(gamma_y.size()) != g || static_cast<std::size_t>(gamma_u.size()) != g ||
        static_cast<std::size_t>(variant_variances.size()) != g)
      throw InvalidInput("gamma_x, gamma_y, gamma_u and variant_variances must have equal length");
    if ((variant_variances.array() <= 0.0).any()) throw InvalidInput("variant variances must be positive");
    if ((noise_variances.array() <= 0.0).any()) throw InvalidInput("noise variances must be positive");
    if (!allele_freqs.empty() && allele_freqs.size() != g)
      throw InvalidInput("allele_freqs must be empty or have one entry per variant");
    for (const auto& d : dependencies) {
      if (d.source >= g || d.target >= g || d.source == d.target)
        throw InvalidInput("dependency indices out of range");
    }
    (void)reduction_factor();
  }
};

// True valid instruments per direction.
struct ValidityLabels {
  IndexSet valid_for_xy;
  IndexSet valid_for_yx;
};

struct IVSetCollection {
  std::vector<IndexSet> sets;

  [[nodiscard]] bool empty() const { return sets.empty(); }
  [[nodiscard]] IndexSet all() const {
    IndexSet out;
    for (const auto& s : sets) out = set_union(out, s);
    return out;
  }
};

struct EffectEstimates {
  std::optional<double> beta_hat_xy;
  std::optional<double> beta_hat_yx;
  IndexSet assigned_xy;
  IndexSet assigned_yx;
  // Variants dropped because corr(G_j, X) was numerically zero.
  IndexSet dropped;
  // Discovered sets whose members were split across both directions.
  std::vector<std::size_t> split_sets;
};

struct DiscoveryConfig {
  double alpha = 0.05;
  // Maximum set size W; 0 selects min(g, 10).
  std::size_t max_set_size = 0;
  bool merge_same_direction = true;
  double tolerance = 1e-10;
  // Rescale each leave-one-out statistic by the variance the estimated slope
  // adds to the pseudo-residual correlation.
  bool slope_correction = true;

  [[nodiscard]] std::size_t effective_max_set_size(std::size_t g) const {
    return max_set_size == 0 ? std::min<std::size_t>(g, 10) : max_set_size;
  }

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
    if (max_set_size != 0 && max_set_size < 2) throw InvalidInput("max set size W must be >= 2");
    if (!(tolerance >= 0.0)) throw InvalidInput("tolerance must be nonnegative");
  }
};

}  // namespace prebim
