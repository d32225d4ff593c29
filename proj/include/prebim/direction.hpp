#pragma once

#include "prebim/estimators.hpp"
#include "prebim/moments.hpp"
#include "prebim/types.hpp"

#include <cmath>
#include <cstddef>
#include <map>
#include <string>

namespace prebim {

/// |corr(G_j, Y)| / |corr(G_j, X)|. Below 1 the variant instruments X -> Y,
/// otherwise Y -> X.
inline double direction_ratio(const CrossMoments& moments, std::size_t j, double tolerance = 1e-10) {
  if (j >= moments.variants()) throw InvalidInput("variant index out of range");
  const double rx = std::abs(moments.corr_with_x(j));
  if (!(rx > tolerance)) throw IrrelevantInstrument("variant " + std::to_string(j) + " is uncorrelated with X");
  return std::abs(moments.corr_with_y(j)) / rx;
}

inline double direction_ratio(const Dataset& data, std::size_t j, double tolerance = 1e-10) {
  if (j >= data.variants()) throw InvalidInput("variant index out of range");
  const Eigen::VectorXd gj = data.genotypes().col(static_cast<Eigen::Index>(j));
  const double rx = std::abs(pearson_correlation(gj, data.x()));
  if (!(rx > tolerance)) throw IrrelevantInstrument("variant " + std::to_string(j) + " is uncorrelated with X");
  return std::abs(pearson_correlation(gj, data.y())) / rx;
}

struct DirectionOptions {
  // Assign each discovered set wholesale by majority of its members' votes
  // (ties go to Y -> X). Off: every variant is assigned on its own ratio.
  bool per_set_majority = false;
  double tolerance = 1e-10;
};

/// Step II: split the discovered instruments by direction and run TSLS on
/// each side (X on Y for the reverse direction). A side with no instruments
/// has no estimate.
inline EffectEstimates infer_direction_effects(const Dataset& data, const IVSetCollection& collection,
                                               const DirectionOptions& options = {}) {
  EffectEstimates out;
  std::map<std::size_t, bool> to_xy;  // variant -> assigned to X -> Y

  for (std::size_t s = 0; s < collection.sets.size(); ++s) {
    const auto& set = collection.sets[s];
    std::size_t votes_xy = 0;
    std::size_t votes = 0;
    std::map<std::size_t, bool> local;
    for (auto j : set) {
      try {
        const bool xy = direction_ratio(data, j, options.tolerance) < 1.0;
        local[j] = xy;
        votes_xy += xy ? 1 : 0;
        ++votes;
      } catch (const IrrelevantInstrument&) {
        out.dropped.push_back(j);
      } catch (const ZeroVariance&) {
        out.dropped.push_back(j);
      }
    }
    if (votes_xy != 0 && votes_xy != votes) out.split_sets.push_back(s);
    const bool majority_xy = 2 * votes_xy > votes;
    for (auto& [j, xy] : local) to_xy[j] = options.per_set_majority ? majority_xy : xy;
  }

  for (auto& [j, xy] : to_xy) (xy ? out.assigned_xy : out.assigned_yx).push_back(j);
  out.assigned_xy = make_index_set(out.assigned_xy);
  out.assigned_yx = make_index_set(out.assigned_yx);
  out.dropped = make_index_set(out.dropped);

  if (!out.assigned_xy.empty())
    out.beta_hat_xy = tsls_estimate(data.x(), data.y(), data.genotypes(), out.assigned_xy, options.tolerance);
  if (!out.assigned_yx.empty())
    out.beta_hat_yx = tsls_estimate(data.y(), data.x(), data.genotypes(), out.assigned_yx, options.tolerance);
  return out;
}

}  // namespace prebim
