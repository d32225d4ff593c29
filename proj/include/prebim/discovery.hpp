#pragma once

#include "prebim/estimators.hpp"
#include "prebim/moments.hpp"
#include "prebim/types.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace prebim {

struct SeedCandidate {
  IndexSet pair;
  double score = 0.0;
  bool passed = false;
};

struct GrowthStep {
  IndexSet set;  // before the addition
  std::size_t added = 0;
  double correlation = 0.0;
};

struct FusionDecision {
  IndexSet kept;
  IndexSet incoming;
  bool merged = false;
  std::string action;  // "first", "merged", "second", "discarded"
};

// Record of every decision the valid-set search took.
struct DiscoveryTrace {
  std::vector<SeedCandidate> seed_pairs_considered;
  std::vector<GrowthStep> growth_steps;
  std::vector<FusionDecision> fusion_decisions;
};

struct DiscoveryResult {
  IVSetCollection collection;
  DiscoveryTrace trace;
};

namespace detail {

// valid_set_test, but an ill-posed TSLS on any leave-one-out subset counts
// as a failure instead of aborting the search.
inline bool passes(const CrossMoments& m, const IndexSet& subset, const ValidityTest& test) {
  try {
    return valid_set_test(m, subset, test.alpha, test.tolerance, test.slope_correction);
  } catch (const SingularInstruments&) {
    return false;
  } catch (const WeakInstruments&) {
    return false;
  } catch (const SaturatedCorrelation&) {
    return false;
  }
}

// |corr(PR_{j}, G_i)| + |corr(PR_{i}, G_j)|, infinite when either TSLS is ill-posed.
inline double pair_score(const CrossMoments& m, std::size_t i, std::size_t j, double tol) {
  try {
    return std::abs(m.residual_corr({j}, i, tol)) + std::abs(m.residual_corr({i}, j, tol));
  } catch (const SingularInstruments&) {
  } catch (const WeakInstruments&) {
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Among all pairs in `candidates` that pass the validity test, the one with
/// the smallest summed leave-one-out pseudo-residual correlation. Ties go to
/// the lexicographically smallest pair.
inline std::optional<IndexSet> seed_pair(const CrossMoments& moments, const IndexSet& candidates,
                                         const ValidityTest& test, DiscoveryTrace* trace = nullptr) {
  if (candidates.size() < 2) throw InvalidInput("seed search needs at least two candidates");
  std::optional<IndexSet> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    for (std::size_t b = a + 1; b < candidates.size(); ++b) {
      const IndexSet pair{candidates[a], candidates[b]};
      const double score = detail::pair_score(moments, pair[0], pair[1], test.tolerance);
      const bool ok = std::isfinite(score) && detail::passes(moments, pair, test);
      if (trace && std::isfinite(score)) trace->seed_pairs_considered.push_back({pair, score, ok});
      if (ok && score < best_score) {
        best_score = score;
        best = pair;
      }
    }
  }
  return best;
}

inline std::optional<IndexSet> seed_pair(const Dataset& data, const IndexSet& candidates,
                                         const ValidityTest& test = {}) {
  return seed_pair(CrossMoments::from_dataset(data), candidates, test);
}

/// Greedy growth of a valid seed: keep the candidates whose addition still
/// passes the validity test, add the one least correlated with the current
/// pseudo-residual, repeat until nothing survives or the size reaches W.
inline IndexSet grow_valid_set(const CrossMoments& moments, const IndexSet& seed, const IndexSet& candidates,
                               const ValidityTest& test, std::size_t max_size, DiscoveryTrace* trace = nullptr) {
  IndexSet current = seed;
  IndexSet pool = set_difference(candidates, seed);
  while (current.size() < max_size && !pool.empty()) {
    IndexSet survivors;
    for (auto k : pool)
      if (detail::passes(moments, with(current, k), test)) survivors.push_back(k);
    if (survivors.empty()) break;

    double omega = 0.0;
    try {
      omega = moments.tsls(current, test.tolerance);
    } catch (const Error&) {
      break;
    }
    std::size_t pick = survivors.front();
    double pick_corr = std::numeric_limits<double>::infinity();
    for (auto k : survivors) {
      const double r = std::abs(moments.residual_corr_with(omega, k));
      if (r < pick_corr) {
        pick_corr = r;
        pick = k;
      }
    }
    if (trace) trace->growth_steps.push_back({current, pick, pick_corr});
    current = with(current, pick);
    pool = without(pool, pick);
  }
  return current;
}

inline IndexSet grow_valid_set(const Dataset& data, const IndexSet& seed, const IndexSet& candidates,
                               const ValidityTest& test, std::size_t max_size) {
  return grow_valid_set(CrossMoments::from_dataset(data), seed, candidates, test, max_size);
}

/// Step I: cluster-fusion search for at most two disjoint valid IV sets.
///
/// Each round seeds a pair from the remaining pool, grows it, and fuses it
/// with the set already kept (if any). A union that still passes the
/// validity test means both sets serve the same direction: merged when
/// `merge_same_direction` is on, dropped otherwise. A failing union means the
/// new set belongs to the other direction and is kept as the second set.
/// Stops at two sets, when at most one candidate is left, or when no pair
/// in the pool passes.
inline DiscoveryResult find_valid_iv_sets(const CrossMoments& moments, const DiscoveryConfig& config) {
  config.validate();
  const auto g = moments.variants();
  const auto w = config.effective_max_set_size(g);
  const ValidityTest test{config.alpha, config.tolerance, config.slope_correction};

  DiscoveryResult result;
  auto& sets = result.collection.sets;
  IndexSet pool(g);
  for (std::size_t j = 0; j < g; ++j) pool[j] = j;

  while (sets.size() < 2 && pool.size() > 1) {
    const auto seed = seed_pair(moments, pool, test, &result.trace);
    if (!seed) break;
    const IndexSet grown = grow_valid_set(moments, *seed, pool, test, w, &result.trace);
    pool = set_difference(pool, grown);

    if (sets.empty()) {
      sets.push_back(grown);
      result.trace.fusion_decisions.push_back({{}, grown, false, "first"});
      continue;
    }
    const IndexSet fused = set_union(sets.front(), grown);
    if (!detail::passes(moments, fused, test)) {
      result.trace.fusion_decisions.push_back({sets.front(), grown, false, "second"});
      sets.push_back(grown);
    } else if (config.merge_same_direction && fused.size() <= w) {
      result.trace.fusion_decisions.push_back({sets.front(), grown, true, "merged"});
      sets.front() = fused;
    } else {
      result.trace.fusion_decisions.push_back({sets.front(), grown, false, "discarded"});
    }
  }
  return result;
}

inline DiscoveryResult find_valid_iv_sets(const Dataset& data, const DiscoveryConfig& config = {}) {
  return find_valid_iv_sets(CrossMoments::from_dataset(data), config);
}

}  // namespace prebim
