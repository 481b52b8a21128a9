#pragma once

#include <map>
#include <vector>

#include "ceb/matching.hpp"
#include "ceb/region_graph.hpp"

namespace ceb {

// true = the boundary separates two instances; false = it lies inside one.
using boundary_labeling = std::map<boundary_key, bool>;

// Edges inside a selected candidate are false; every other edge is true.
inline boundary_labeling assign_labels(const matching_result& result, const std::vector<instance_candidate>& cands,
                                       const region_graph& g) {
  boundary_labeling out;
  for (const auto& [key, count] : g.edges()) out[key] = true;
  for (const auto& f : result.flows) {
    const auto& c = cands.at(f.col);
    for (const auto& [key, count] : g.edges())
      if (c.contains(key.lo) && c.contains(key.hi)) out[key] = false;
  }
  return out;
}

}  // namespace ceb
