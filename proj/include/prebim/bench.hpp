#pragma once

#include "prebim/estimators.hpp"
#include "prebim/pipeline.hpp"
#include "prebim/simulator.hpp"
#include "prebim/types.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace prebim {

enum class Direction { XtoY, YtoX };

inline const char* to_string(Direction d) { return d == Direction::XtoY ? "X->Y" : "Y->X"; }

/// Correct-selecting rate as per-direction classification accuracy over all
/// g variants: selected true-valid plus unselected not-valid, divided by g.
inline double csr(const IndexSet& selected, const ValidityLabels& labels, Direction direction, std::size_t g) {
  if (g == 0) throw InvalidInput("csr needs g > 0");
  const IndexSet& valid = direction == Direction::XtoY ? labels.valid_for_xy : labels.valid_for_yx;
  for (auto j : selected)
    if (j >= g) throw InvalidInput("selected index out of range");
  const auto hits = set_intersection(selected, valid).size();
  const auto false_pos = selected.size() - hits;
  const auto negatives = g - valid.size();
  return static_cast<double>(hits + (negatives - false_pos)) / static_cast<double>(g);
}

// Correctly selected valid variants over g (caps at |valid| / g).
inline double csr_verbatim(const IndexSet& selected, const ValidityLabels& labels, Direction direction,
                           std::size_t g) {
  if (g == 0) throw InvalidInput("csr needs g > 0");
  const IndexSet& valid = direction == Direction::XtoY ? labels.valid_for_xy : labels.valid_for_yx;
  return static_cast<double>(set_intersection(selected, valid).size()) / static_cast<double>(g);
}

/// Mean of (estimate - truth)^2; absent estimates count as `missing_penalty`.
inline double mse(const std::vector<std::optional<double>>& estimates, double truth, double missing_penalty = 0.0) {
  if (estimates.empty()) throw InvalidInput("mse needs at least one estimate");
  double total = 0.0;
  for (const auto& e : estimates) {
    const double d = e.value_or(missing_penalty) - truth;
    total += d * d;
  }
  return total / static_cast<double>(estimates.size());
}

inline double mse(const std::vector<double>& estimates, double truth) {
  return mse(std::vector<std::optional<double>>(estimates.begin(), estimates.end()), truth);
}

struct DirectionMetrics {
  double csr = 0.0;
  double csr_verbatim = 0.0;
  double mse = 0.0;
  double naive_mse = 0.0;
};

struct BenchmarkReport {
  ScenarioSpec scenario;
  std::size_t replications = 0;
  DirectionMetrics xy;
  DirectionMetrics yx;
  std::size_t failures = 0;
  double wall_time = 0.0;
};

// Outcome of one simulated replication.
struct Replication {
  double beta_xy = 0.0;
  double beta_yx = 0.0;
  std::optional<double> beta_hat_xy;
  std::optional<double> beta_hat_yx;
  double naive_xy = 0.0;
  double naive_yx = 0.0;
  double csr_xy = 0.0;
  double csr_yx = 0.0;
  double csr_verbatim_xy = 0.0;
  double csr_verbatim_yx = 0.0;
  bool failed = false;
};

struct BenchmarkOptions {
  double missing_penalty = 0.0;
  // 0 picks std::thread::hardware_concurrency().
  std::size_t threads = 0;
};

// Seed stream shared by every sample size of the same scenario shape, so the
// n-sweep reuses the same parameter draws replication by replication.
inline std::uint64_t scenario_stream(const ScenarioSpec& s) {
  std::uint64_t h = mix_seed(s.seed);
  for (std::uint64_t v : {static_cast<std::uint64_t>(s.n_valid_xy), static_cast<std::uint64_t>(s.n_valid_yx),
                          static_cast<std::uint64_t>(s.n_total), static_cast<std::uint64_t>(s.bidirectional),
                          static_cast<std::uint64_t>(s.correlated_valid)})
    h = mix_seed(h ^ v);
  return h;
}

inline Replication run_replication(const ScenarioSpec& spec, const DiscoveryConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const auto draw = draw_scenario_params(spec, rng);
  const auto data = generate_dataset(draw.params, spec, rng);
  const auto g = spec.n_total;

  Replication rep;
  rep.beta_xy = draw.params.beta_xy;
  rep.beta_yx = draw.params.beta_yx;
  rep.naive_xy = ols_estimate(data.x(), data.y());
  rep.naive_yx = ols_estimate(data.y(), data.x());

  EffectEstimates effects;
  try {
    effects = run_prebim(data, config).effects;
  } catch (const Error&) {
    rep.failed = true;
  }
  rep.beta_hat_xy = effects.beta_hat_xy;
  rep.beta_hat_yx = effects.beta_hat_yx;
  rep.csr_xy = csr(effects.assigned_xy, draw.labels, Direction::XtoY, g);
  rep.csr_yx = csr(effects.assigned_yx, draw.labels, Direction::YtoX, g);
  rep.csr_verbatim_xy = csr_verbatim(effects.assigned_xy, draw.labels, Direction::XtoY, g);
  rep.csr_verbatim_yx = csr_verbatim(effects.assigned_yx, draw.labels, Direction::YtoX, g);
  return rep;
}

namespace detail {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
}

inline double mean_of(const std::vector<Replication>& reps, double Replication::*field) {
  double total = 0.0;
  for (const auto& r : reps) total += r.*field;
  return total / static_cast<double>(reps.size());
}

inline double squared_error(const std::vector<Replication>& reps, double Replication::*estimate,
                            double Replication::*truth) {
  double total = 0.0;
  for (const auto& r : reps) {
    const double d = r.*estimate - r.*truth;
    total += d * d;
  }
  return total / static_cast<double>(reps.size());
}

}  // namespace detail

/// Aggregates `reps` replications of one scenario. Replications run in
/// parallel; the reduction runs in replication order so the result does not
/// depend on scheduling.
inline BenchmarkReport run_scenario(const ScenarioSpec& spec, std::size_t reps, const DiscoveryConfig& config,
                                    std::uint64_t master_seed, const BenchmarkOptions& options = {}) {
  if (reps < 1) throw InvalidInput("benchmark needs at least one replication");
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto stream = scenario_stream(spec);

  std::vector<Replication> results(reps);
  detail::parallel_for(reps, options.threads,
                       [&](std::size_t r) { results[r] = run_replication(spec, config, derive_seed(master_seed, stream, r)); });

  BenchmarkReport report;
  report.scenario = spec;
  report.replications = reps;
  std::vector<std::optional<double>> est_xy;
  std::vector<std::optional<double>> est_yx;
  for (const auto& r : results) {
    est_xy.push_back(r.beta_hat_xy);
    est_yx.push_back(r.beta_hat_yx);
    report.failures += r.failed ? 1 : 0;
  }
  // Truth varies per replication, so MSE is accumulated per draw.
  auto mse_varying = [&](const std::vector<std::optional<double>>& est, double Replication::*truth) {
    double total = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) total += mse({est[i]}, results[i].*truth, options.missing_penalty);
    return total / static_cast<double>(results.size());
  };

  report.xy.csr = detail::mean_of(results, &Replication::csr_xy);
  report.yx.csr = detail::mean_of(results, &Replication::csr_yx);
  report.xy.csr_verbatim = detail::mean_of(results, &Replication::csr_verbatim_xy);
  report.yx.csr_verbatim = detail::mean_of(results, &Replication::csr_verbatim_yx);
  report.xy.mse = mse_varying(est_xy, &Replication::beta_xy);
  report.yx.mse = mse_varying(est_yx, &Replication::beta_yx);
  report.xy.naive_mse = detail::squared_error(results, &Replication::naive_xy, &Replication::beta_xy);
  report.yx.naive_mse = detail::squared_error(results, &Replication::naive_yx, &Replication::beta_yx);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline std::vector<BenchmarkReport> run_benchmark(const std::vector<ScenarioSpec>& specs, std::size_t reps,
                                                  const DiscoveryConfig& config, std::uint64_t master_seed,
                                                  const BenchmarkOptions& options = {}) {
  std::vector<BenchmarkReport> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(run_scenario(s, reps, config, master_seed, options));
  return out;
}

}  // namespace prebim
