#pragma once

#include "prebim/moments.hpp"
#include "prebim/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace prebim {

using Rng = std::mt19937_64;

/// S(a, b, g) plus sample size and mode flags.
struct ScenarioSpec {
  std::size_t n_valid_xy = 2;
  std::size_t n_valid_yx = 2;
  std::size_t n_total = 6;
  std::size_t sample_size = 5000;
  bool bidirectional = true;
  bool correlated_valid = false;
  std::uint64_t seed = 0;
  // Minimum |a_i b_j - b_i a_j| between variants that are not valid for the
  // same direction. Pairs closer than this to proportional cannot be told
  // apart from a valid pair at a few thousand samples.
  double identifiability_margin = 0.1;

  void validate() const {
    if (n_total < 2) throw InvalidInput("scenario needs at least two variants");
    if (n_valid_xy + n_valid_yx > n_total) throw InvalidInput("a + b must not exceed g");
    if (sample_size < 4) throw InvalidInput("scenario sample size must be at least 4");
    if (!(identifiability_margin >= 0.0)) throw InvalidInput("identifiability margin must be nonnegative");
    if (!bidirectional && n_valid_yx > 0)
      throw InvalidInput("one-directional scenario cannot have Y -> X instruments");
    if (correlated_valid && n_valid_xy < 2 && n_valid_yx < 2)
      throw InvalidInput("correlated-valid mode needs two valid variants in one direction");
  }

  [[nodiscard]] std::string name() const {
    return "S(" + std::to_string(n_valid_xy) + "," + std::to_string(n_valid_yx) + "," + std::to_string(n_total) + ")";
  }
};

struct ScenarioDraw {
  ModelParams params;
  ValidityLabels labels;
  std::size_t attempts = 0;
};

// Everything drawn while generating one dataset, before centering.
struct Simulation {
  Eigen::MatrixXd raw_genotypes;
  Eigen::VectorXd u;
  Eigen::VectorXd e1;
  Eigen::VectorXd e2;
  Eigen::VectorXd e3;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Dataset dataset;
};

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return mix_seed(mix_seed(master ^ mix_seed(stream)) ^ index);
}

// Uniform on [-1, -0.5] U [0.5, 1].
inline double draw_signed_effect(Rng& rng) {
  std::uniform_real_distribution<double> magnitude(0.5, 1.0);
  std::bernoulli_distribution negative(0.5);
  const double m = magnitude(rng);
  return negative(rng) ? -m : m;
}

namespace detail {

constexpr std::size_t kRejectionBudget = 10000;

inline int direction_class(const ValidityLabels& labels, std::size_t j) {
  if (contains(labels.valid_for_xy, j)) return 1;
  if (contains(labels.valid_for_yx, j)) return 2;
  return 0;
}

// |a_i b_j - b_i a_j| >= margin for every pair that is not valid for the
// same direction, with a, b the confounder-adjusted loadings on X and Y.
inline bool generically_identifiable(const ModelParams& p, const ValidityLabels& labels, double margin) {
  const auto g = p.variants();
  const Eigen::VectorXd a = p.gamma_x + p.gamma_xu * p.gamma_u;
  const Eigen::VectorXd b = p.gamma_y + p.gamma_yu * p.gamma_u;
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = i + 1; j < g; ++j) {
      const int ci = direction_class(labels, i);
      if (ci != 0 && ci == direction_class(labels, j)) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      if (std::abs(a(ii) * b(jj) - b(ii) * a(jj)) < margin) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Draws ground-truth coefficients for a scenario. Variants 0..a-1 are valid
/// for X -> Y, the next b for Y -> X, the rest are invalid through a direct
/// path to Y, a path to the confounder, or both. Loadings are redrawn until
/// the feedback gain differs from 1, the variance-ordering assumption holds
/// and the generic identifiability guard passes.
inline ScenarioDraw draw_scenario_params(const ScenarioSpec& spec, Rng& rng) {
  spec.validate();
  const auto g = spec.n_total;
  const auto a = spec.n_valid_xy;
  const auto b = spec.n_valid_yx;

  ScenarioDraw draw;
  for (std::size_t v = 0; v < a; ++v) draw.labels.valid_for_xy.push_back(v);
  for (std::size_t v = a; v < a + b; ++v) draw.labels.valid_for_yx.push_back(v);

  std::uniform_real_distribution<double> maf_dist(0.1, 0.5);
  std::uniform_int_distribution<int> violation(0, 2);

  // Effects are drawn once so their law is exactly the stated uniform one;
  // only the loadings are redrawn on rejection.
  const double beta_xy = draw_signed_effect(rng);
  const double beta_yx = spec.bidirectional ? draw_signed_effect(rng) : 0.0;

  for (std::size_t attempt = 1; attempt <= detail::kRejectionBudget; ++attempt) {
    ModelParams p;
    p.gamma_x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g));
    p.gamma_y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g));
    p.gamma_u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g));
    p.variant_variances.resize(static_cast<Eigen::Index>(g));
    p.allele_freqs.resize(g);
    for (std::size_t j = 0; j < g; ++j) {
      const double maf = maf_dist(rng);
      p.allele_freqs[j] = maf;
      p.variant_variances(static_cast<Eigen::Index>(j)) = 2.0 * maf * (1.0 - maf);
    }
    p.beta_xy = beta_xy;
    p.beta_yx = beta_yx;
    p.gamma_xu = draw_signed_effect(rng);
    p.gamma_yu = draw_signed_effect(rng);

    for (std::size_t j = 0; j < g; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (j < a) {
        p.gamma_x(jj) = draw_signed_effect(rng);
      } else if (j < a + b) {
        p.gamma_y(jj) = draw_signed_effect(rng);
      } else {
        p.gamma_x(jj) = draw_signed_effect(rng);
        const int kind = violation(rng);
        if (kind != 1) p.gamma_y(jj) = draw_signed_effect(rng);
        if (kind != 0) p.gamma_u(jj) = draw_signed_effect(rng);
      }
    }

    if (spec.correlated_valid) {
      const std::size_t source = a >= 2 ? 0 : a;
      const std::size_t target = source + 1;
      const double c = draw_signed_effect(rng);
      const auto s = static_cast<Eigen::Index>(source);
      const auto t = static_cast<Eigen::Index>(target);
      // Independent part has the source's variance.
      p.variant_variances(t) = (c * c + 1.0) * p.variant_variances(s);
      p.dependencies.push_back({source, target, c});
    }

    draw.attempts = attempt;
    if (std::abs(p.feedback_gain() - 1.0) <= 1e-6) continue;
    if (!satisfies_direction_assumption(p)) continue;
    if (!detail::generically_identifiable(p, draw.labels, spec.identifiability_margin)) continue;
    draw.params = std::move(p);
    return draw;
  }
  throw Error("rejection budget exhausted while drawing parameters for " + spec.name());
}

/// Draws n observations from the structural model. X and Y are solved from the
/// reduced form; genotypes are Binomial(2, maf) when allele frequencies are
/// set and Gaussian otherwise, dependent variants are overwritten with
/// coefficient * source + noise. The returned dataset is centered.
inline Simulation simulate(const ModelParams& params, std::size_t n, Rng& rng) {
  params.validate();
  if (n < Dataset::kMinSamples) throw InvalidInput("sample size must be at least 4");
  const auto g = params.variants();
  const auto rows = static_cast<Eigen::Index>(n);
  const double delta = params.reduction_factor();

  Eigen::MatrixXd genotypes(rows, static_cast<Eigen::Index>(g));
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (std::size_t j = 0; j < g; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (!params.allele_freqs.empty()) {
      std::binomial_distribution<int> allele(2, params.allele_freqs[j]);
      for (Eigen::Index i = 0; i < rows; ++i) genotypes(i, jj) = allele(rng);
    } else {
      const double sd = std::sqrt(params.variant_variances(jj));
      for (Eigen::Index i = 0; i < rows; ++i) genotypes(i, jj) = sd * std_normal(rng);
    }
  }
  const Eigen::MatrixXd cov = genotype_covariance(params);
  for (const auto& dep : params.dependencies) {
    const auto s = static_cast<Eigen::Index>(dep.source);
    const auto t = static_cast<Eigen::Index>(dep.target);
    const double sd = std::sqrt(params.variant_variances(t) - dep.coefficient * dep.coefficient * cov(s, s));
    for (Eigen::Index i = 0; i < rows; ++i) genotypes(i, t) = dep.coefficient * genotypes(i, s) + sd * std_normal(rng);
  }

  auto noise = [&](double variance) {
    Eigen::VectorXd e(rows);
    const double sd = std::sqrt(variance);
    for (Eigen::Index i = 0; i < rows; ++i) e(i) = sd * std_normal(rng);
    return e;
  };
  Eigen::VectorXd e1 = noise(params.noise_variances(0));
  Eigen::VectorXd e2 = noise(params.noise_variances(1));
  Eigen::VectorXd e3 = noise(params.noise_variances(2));

  Eigen::VectorXd u = genotypes * params.gamma_u + e1;
  const Eigen::VectorXd own_x = genotypes * params.gamma_x + params.gamma_xu * u + e2;
  const Eigen::VectorXd own_y = genotypes * params.gamma_y + params.gamma_yu * u + e3;
  Eigen::VectorXd x = delta * (own_x + params.beta_yx * own_y);
  Eigen::VectorXd y = delta * (params.beta_xy * own_x + own_y);

  auto dataset = Dataset::create(x, y, genotypes);
  return Simulation{std::move(genotypes), std::move(u), std::move(e1), std::move(e2), std::move(e3),
                    std::move(x),         std::move(y), std::move(dataset)};
}

inline Dataset generate_dataset(const ModelParams& params, const ScenarioSpec& spec, Rng& rng) {
  return simulate(params, spec.sample_size, rng).dataset;
}

/// The two-variant-per-direction example with known coefficients:
/// beta = 0.6 both ways, gamma_X = (1, 1, 1, 1.8, 1.2), gamma_Y = (0, 0.5, 0, 0.6, 0.3),
/// unit-variance Gaussian variants, a confounder loading 1 on both phenotypes.
/// G_1 and G_3 are the valid X -> Y instruments.
inline ModelParams motivating_example_params() {
  ModelParams p;
  p.beta_xy = 0.6;
  p.beta_yx = 0.6;
  p.gamma_x = (Eigen::VectorXd(5) << 1.0, 1.0, 1.0, 1.8, 1.2).finished();
  p.gamma_y = (Eigen::VectorXd(5) << 0.0, 0.5, 0.0, 0.6, 0.3).finished();
  p.gamma_u = Eigen::VectorXd::Zero(5);
  p.gamma_xu = 1.0;
  p.gamma_yu = 1.0;
  p.variant_variances = Eigen::VectorXd::Ones(5);
  return p;
}

}  // namespace prebim
