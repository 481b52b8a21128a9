#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/watershed.hpp"

namespace ceb {

// Undirected graph with regions as nodes and region-region boundaries as edges.
class region_graph {
 public:
  void add_node(region_id id, std::size_t area) {
    if (id == 0) throw structural_error("region_graph: node id 0 is reserved");
    if (!area_.emplace(id, area).second) throw structural_error("region_graph: duplicate node " + std::to_string(id));
    adjacency_[id];
  }

  void add_edge(const boundary_key& key, std::size_t pixel_count) {
    if (key.lo == key.hi) throw structural_error("region_graph: self loop at " + std::to_string(key.lo));
    if (!has_node(key.lo) || !has_node(key.hi))
      throw structural_error("region_graph: boundary " + to_string(key) + " references a missing region");
    if (!edges_.emplace(key, pixel_count).second)
      throw structural_error("region_graph: duplicate edge " + to_string(key));
    adjacency_[key.lo].insert(key.hi);
    adjacency_[key.hi].insert(key.lo);
  }

  [[nodiscard]] bool has_node(region_id id) const { return area_.count(id) != 0; }
  [[nodiscard]] bool has_edge(const boundary_key& k) const { return edges_.count(k) != 0; }
  [[nodiscard]] std::size_t node_count() const { return area_.size(); }
  [[nodiscard]] std::size_t edge_count() const { return edges_.size(); }
  [[nodiscard]] std::size_t area(region_id id) const { return area_.at(id); }
  [[nodiscard]] const std::map<region_id, std::size_t>& nodes() const { return area_; }
  [[nodiscard]] const std::map<boundary_key, std::size_t>& edges() const { return edges_; }
  [[nodiscard]] const std::set<region_id>& neighbors(region_id id) const { return adjacency_.at(id); }

  // Incident edges E(r).
  [[nodiscard]] std::vector<boundary_key> incident_edges(region_id id) const {
    std::vector<boundary_key> out;
    for (region_id n : adjacency_.at(id)) out.emplace_back(id, n);
    std::sort(out.begin(), out.end());
    return out;
  }

  [[nodiscard]] std::vector<region_id> node_ids() const {
    std::vector<region_id> out;
    out.reserve(area_.size());
    for (const auto& [id, a] : area_) out.push_back(id);
    return out;
  }

  // Maximal connected node sets, each sorted, ordered by their smallest id.
  [[nodiscard]] std::vector<std::vector<region_id>> connected_components() const {
    std::vector<std::vector<region_id>> out;
    std::set<region_id> seen;
    for (const auto& [start, a] : area_) {
      if (seen.count(start)) continue;
      std::vector<region_id> comp{start};
      seen.insert(start);
      for (std::size_t i = 0; i < comp.size(); ++i)
        for (region_id n : adjacency_.at(comp[i]))
          if (seen.insert(n).second) comp.push_back(n);
      std::sort(comp.begin(), comp.end());
      out.push_back(std::move(comp));
    }
    return out;
  }

 private:
  std::map<region_id, std::size_t> area_;
  std::map<boundary_key, std::size_t> edges_;
  std::map<region_id, std::set<region_id>> adjacency_;
};

inline region_graph build_graph(const flood_result& r) {
  region_graph g;
  for (std::size_t k = 0; k < r.regions.size(); ++k) g.add_node(static_cast<region_id>(k + 1), r.regions[k].size());
  for (const auto& [key, px] : r.boundaries) g.add_edge(key, px.size());
  return g;
}

// A connected set of regions that could form one cell instance.
struct instance_candidate {
  std::vector<region_id> regions;  // sorted, non-empty

  [[nodiscard]] bool contains(region_id r) const { return std::binary_search(regions.begin(), regions.end(), r); }
  friend auto operator<=>(const instance_candidate&, const instance_candidate&) = default;
  friend bool operator==(const instance_candidate&, const instance_candidate&) = default;
};

struct enumeration_limits {
  std::size_t max_nodes = 20;
  std::size_t max_candidates = 100000;
};

namespace detail {

// ESU-style enumeration: every connected subset is produced exactly once by
// growing from its smallest member v, only ever adding vertices above v that
// are exclusive neighbours of the newly added vertex.
class connected_subset_enumerator {
 public:
  connected_subset_enumerator(const std::vector<std::uint64_t>& adj, std::size_t budget,
                              std::vector<std::uint64_t>& out)
      : adj_(adj), budget_(budget), out_(out) {}

  void run() {
    const std::size_t n = adj_.size();
    for (std::size_t v = 0; v < n; ++v) {
      const std::uint64_t above = v + 1 >= 64 ? 0 : ~((std::uint64_t{2} << v) - 1);
      above_ = above;
      const std::uint64_t self = std::uint64_t{1} << v;
      extend(self, adj_[v] & above_, self | adj_[v]);
    }
  }

 private:
  void extend(std::uint64_t sub, std::uint64_t ext, std::uint64_t closed_nbhd) {
    if (out_.size() >= budget_) throw capacity_error("candidate enumeration exceeds max_candidates");
    out_.push_back(sub);
    while (ext) {
      const std::uint64_t wbit = ext & (~ext + 1);
      ext &= ~wbit;
      const auto w = static_cast<std::size_t>(std::countr_zero(wbit));
      const std::uint64_t next_ext = ext | (adj_[w] & ~closed_nbhd & above_);
      extend(sub | wbit, next_ext, closed_nbhd | adj_[w]);
    }
  }

  const std::vector<std::uint64_t>& adj_;
  std::size_t budget_;
  std::vector<std::uint64_t>& out_;
  std::uint64_t above_ = 0;
};

}  // namespace detail

// All connected subsets of one component (given as its sorted node list).
// `already_emitted` counts candidates produced so far toward max_candidates.
inline std::vector<instance_candidate> enumerate_component_candidates(const region_graph& g,
                                                                      const std::vector<region_id>& component,
                                                                      const enumeration_limits& limits,
                                                                      std::size_t already_emitted = 0) {
  if (component.size() > limits.max_nodes || component.size() > 64)
    throw capacity_error("component containing region " + std::to_string(component.front()) + " has " +
                         std::to_string(component.size()) + " regions (max_nodes " +
                         std::to_string(limits.max_nodes) + ")");
  std::map<region_id, std::size_t> local;
  for (std::size_t i = 0; i < component.size(); ++i) local[component[i]] = i;
  std::vector<std::uint64_t> adj(component.size(), 0);
  for (std::size_t i = 0; i < component.size(); ++i)
    for (region_id n : g.neighbors(component[i])) adj[i] |= std::uint64_t{1} << local.at(n);

  std::vector<std::uint64_t> subsets;
  const std::size_t budget =
      limits.max_candidates > already_emitted ? limits.max_candidates - already_emitted : 0;
  try {
    detail::connected_subset_enumerator(adj, budget, subsets).run();
  } catch (const capacity_error&) {
    throw capacity_error("component containing region " + std::to_string(component.front()) +
                         " exceeds max_candidates (" + std::to_string(limits.max_candidates) + ")");
  }
  std::vector<instance_candidate> out;
  out.reserve(subsets.size());
  for (std::uint64_t s : subsets) {
    instance_candidate c;
    for (std::uint64_t m = s; m; m &= m - 1) c.regions.push_back(component[static_cast<std::size_t>(std::countr_zero(m))]);
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Every connected vertex subset of every component, sorted lexicographically
// by the sorted id list.
inline std::vector<instance_candidate> enumerate_candidates(const region_graph& g,
                                                            const enumeration_limits& limits = {}) {
  std::vector<instance_candidate> out;
  for (const auto& comp : g.connected_components()) {
    auto part = enumerate_component_candidates(g, comp, limits, out.size());
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// K(r): indices of the candidates containing each region.
using region_candidate_index = std::map<region_id, std::vector<std::size_t>>;

inline region_candidate_index index_candidates(const std::vector<instance_candidate>& cands) {
  region_candidate_index k;
  for (std::size_t i = 0; i < cands.size(); ++i)
    for (region_id r : cands[i].regions) k[r].push_back(i);
  return k;
}

inline std::vector<std::size_t> candidates_containing(region_id r, const std::vector<instance_candidate>& cands) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (cands[i].contains(r)) out.push_back(i);
  if (out.empty()) throw precondition_error("candidates_containing: unknown region " + std::to_string(r));
  return out;
}

// Pixels of the member regions plus every boundary whose two regions are both
// members. Boundaries to non-members (the rim) are excluded. Sorted.
inline pixel_list candidate_mask(const instance_candidate& c, const flood_result& r) {
  pixel_list out;
  for (region_id id : c.regions) {
    const auto& px = r.region(id);
    out.insert(out.end(), px.begin(), px.end());
  }
  for (const auto& [key, px] : r.boundaries)
    if (c.contains(key.lo) && c.contains(key.hi)) out.insert(out.end(), px.begin(), px.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace ceb
