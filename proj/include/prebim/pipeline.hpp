#pragma once

#include "prebim/direction.hpp"
#include "prebim/discovery.hpp"
#include "prebim/types.hpp"

namespace prebim {

struct PipelineResult {
  DiscoveryResult discovery;
  EffectEstimates effects;
};

// Step I (valid IV sets) then Step II (directions and effects).
inline PipelineResult run_prebim(const Dataset& data, const DiscoveryConfig& config = {},
                                 const DirectionOptions& direction = {}) {
  PipelineResult out;
  out.discovery = find_valid_iv_sets(data, config);
  out.effects = infer_direction_effects(data, out.discovery.collection, direction);
  return out;
}

}  // namespace prebim
