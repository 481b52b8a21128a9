#pragma once

// Temporal refinement over a video. Boundaries with confident scores are fixed
// up front; the uncertain ones are resolved by matching each frame's
// not-yet-selected candidates to instances already selected in its neighbours.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ceb/classifier.hpp"
#include "ceb/error.hpp"
#include "ceb/matching.hpp"
#include "ceb/pipeline.hpp"
#include "ceb/region_graph.hpp"

namespace ceb {

struct temporal_config {
  double sigma_low = 0.1;   // score < sigma_low: false boundary
  double sigma_high = 0.9;  // score > sigma_high: true boundary
  std::size_t iterations = 10;
  enumeration_limits limits;
  solver_options solver;
  bool sweep = false;  // frames update in order, each seeing earlier frames' new state

  void validate() const {
    if (!(sigma_low >= 0.0 && sigma_low <= sigma_high && sigma_high <= 1.0))
      throw precondition_error("temporal_config: need 0 <= sigma_low <= sigma_high <= 1");
  }
};

enum class boundary_class { false_boundary, true_boundary, uncertain };

inline boundary_class classify_score(double s, const temporal_config& cfg) {
  if (s < cfg.sigma_low) return boundary_class::false_boundary;
  if (s > cfg.sigma_high) return boundary_class::true_boundary;
  return boundary_class::uncertain;
}

using region_set = std::vector<region_id>;  // sorted original region ids

struct frame_state {
  std::size_t frame = 0;
  // Regions merged over false boundaries. Node k (1-based id k+1) never changes after init.
  std::vector<region_set> nodes;
  std::set<region_id> remaining;  // node ids still in the reduced graph
  // Uncertain boundaries between two distinct nodes: node pair -> original boundaries.
  std::map<boundary_key, std::vector<boundary_key>> uncertain_edges;
  std::map<boundary_key, boundary_class> partition;  // every original boundary
  std::vector<region_set> selected;                   // in order of selection
  std::vector<instance_candidate> candidates;         // over node ids of the remaining graph

  // The reduced graph restricted to the remaining nodes.
  [[nodiscard]] region_graph reduced_graph() const {
    region_graph g;
    for (region_id n : remaining) g.add_node(n, nodes[n - 1].size());
    for (const auto& [pair, originals] : uncertain_edges)
      if (remaining.count(pair.lo) && remaining.count(pair.hi)) g.add_edge(pair, originals.size());
    return g;
  }

  [[nodiscard]] region_set regions_of(const instance_candidate& c) const {
    region_set out;
    for (region_id n : c.regions) out.insert(out.end(), nodes[n - 1].begin(), nodes[n - 1].end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

namespace detail {

inline void refresh_candidates(frame_state& s, const enumeration_limits& limits) {
  s.candidates = enumerate_candidates(s.reduced_graph(), limits);
}

}  // namespace detail

// Contract false edges, drop true edges, select the isolated nodes.
inline frame_state init_state(const region_graph& g, const boundary_scores& scores, const temporal_config& cfg,
                              std::size_t frame = 0) {
  cfg.validate();
  frame_state s;
  s.frame = frame;
  const auto ids = g.node_ids();
  std::map<region_id, std::size_t> local;
  for (std::size_t i = 0; i < ids.size(); ++i) local[ids[i]] = i;
  disjoint_set ds(ids.size());
  for (const auto& [key, count] : g.edges()) {
    auto it = scores.find(key);
    if (it == scores.end()) throw precondition_error("init_state: no score for boundary " + to_string(key));
    const auto cls = classify_score(it->second, cfg);
    s.partition[key] = cls;
    if (cls == boundary_class::false_boundary) ds.unite(local.at(key.lo), local.at(key.hi));
  }
  std::map<std::size_t, region_set> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[ds.find(i)].push_back(ids[i]);
  for (auto& [root, members] : groups) s.nodes.push_back(std::move(members));
  std::sort(s.nodes.begin(), s.nodes.end());
  std::map<region_id, region_id> node_of;
  for (std::size_t k = 0; k < s.nodes.size(); ++k)
    for (region_id r : s.nodes[k]) node_of[r] = static_cast<region_id>(k + 1);

  for (const auto& [key, cls] : s.partition) {
    if (cls != boundary_class::uncertain) continue;
    const region_id a = node_of.at(key.lo);
    const region_id b = node_of.at(key.hi);
    if (a != b) s.uncertain_edges[boundary_key(a, b)].push_back(key);
  }
  std::set<region_id> connected;
  for (const auto& [pair, originals] : s.uncertain_edges) {
    connected.insert(pair.lo);
    connected.insert(pair.hi);
  }
  for (std::size_t k = 0; k < s.nodes.size(); ++k) {
    const auto id = static_cast<region_id>(k + 1);
    if (connected.count(id))
      s.remaining.insert(id);
    else
      s.selected.push_back(s.nodes[k]);
  }
  detail::refresh_candidates(s, cfg.limits);
  return s;
}

// Geometry needed to score instances against each other across frames.
class frame_geometry {
 public:
  explicit frame_geometry(const flood_result& r) : flood_(&r) {}

  [[nodiscard]] pixel_list mask(const region_set& regions) const {
    return candidate_mask(instance_candidate{regions}, *flood_);
  }

 private:
  const flood_result* flood_;
};

inline double mask_iou(const pixel_list& a, const pixel_list& b) {
  std::size_t inter = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Per-component record of how one frame's update was decided.
struct direction_decision {
  std::size_t frame = 0;
  std::vector<region_id> component;  // node ids
  double previous_sum = 0.0;         // flows from frame w-1
  double next_sum = 0.0;             // flows from frame w+1
  bool has_previous = false;
  bool has_next = false;
  bool chose_previous = false;
  std::vector<instance_candidate> added;  // node-id candidates selected
};

namespace detail {

struct directional_flows {
  bool present = false;
  std::vector<std::pair<std::size_t, double>> matched;  // (candidate index, IoU)
};

inline directional_flows flows_from_neighbor(const frame_state& self, const frame_geometry& self_geo,
                                             const frame_state& other, const frame_geometry& other_geo,
                                             const temporal_config& cfg) {
  directional_flows out;
  out.present = true;
  std::vector<pixel_list> other_masks, self_masks;
  for (const auto& u : other.selected) other_masks.push_back(other_geo.mask(u));
  for (const auto& u : self.selected) self_masks.push_back(self_geo.mask(u));

  // SSM marks neighbour instances already explained by a selected instance here.
  score_matrix ssm(other_masks.size(), self_masks.size());
  for (std::size_t i = 0; i < other_masks.size(); ++i)
    for (std::size_t j = 0; j < self_masks.size(); ++j) ssm.set(i, j, mask_iou(other_masks[i], self_masks[j]));
  const auto occupied = solve_ssm(ssm, cfg.solver);
  const auto free_rows = unmatched_left(other_masks.size(), occupied);

  if (free_rows.empty() || self.candidates.empty()) return out;
  std::vector<pixel_list> cand_masks;
  cand_masks.reserve(self.candidates.size());
  for (const auto& c : self.candidates) cand_masks.push_back(self_geo.mask(self.regions_of(c)));
  score_matrix m(free_rows.size(), self.candidates.size());
  for (std::size_t i = 0; i < free_rows.size(); ++i)
    for (std::size_t j = 0; j < cand_masks.size(); ++j) m.set(i, j, mask_iou(other_masks[free_rows[i]], cand_masks[j]));
  const auto sum = solve_sum(free_rows.size(), self.candidates, index_candidates(self.candidates), m, cfg.solver);
  for (const auto& f : sum.flows) out.matched.emplace_back(f.col, m.get(f.row, f.col));
  std::sort(out.matched.begin(), out.matched.end());
  return out;
}

// Per connected component of the remaining graph, keep the direction whose
// matched scores sum higher (ties and single-neighbour frames as documented).
inline std::vector<direction_decision> resolve_directions(const frame_state& s, const directional_flows& prev,
                                                          const directional_flows& next) {
  std::vector<direction_decision> out;
  for (const auto& comp : s.reduced_graph().connected_components()) {
    direction_decision d;
    d.frame = s.frame;
    d.component = comp;
    d.has_previous = prev.present;
    d.has_next = next.present;
    auto inside = [&](std::size_t col) {
      return std::binary_search(comp.begin(), comp.end(), s.candidates[col].regions.front());
    };
    std::vector<instance_candidate> from_prev, from_next;
    for (const auto& [col, score] : prev.matched)
      if (inside(col)) {
        d.previous_sum += score;
        from_prev.push_back(s.candidates[col]);
      }
    for (const auto& [col, score] : next.matched)
      if (inside(col)) {
        d.next_sum += score;
        from_next.push_back(s.candidates[col]);
      }
    if (d.has_previous && d.has_next)
      d.chose_previous = d.previous_sum >= d.next_sum;
    else
      d.chose_previous = d.has_previous;
    d.added = d.chose_previous ? std::move(from_prev) : std::move(from_next);
    out.push_back(std::move(d));
  }
  return out;
}

inline void apply_decisions(frame_state& s, const std::vector<direction_decision>& decisions,
                            const temporal_config& cfg) {
  bool changed = false;
  for (const auto& d : decisions)
    for (const auto& c : d.added) {
      for (region_id n : c.regions)
        if (s.remaining.erase(n) == 0) throw structural_error("temporal: node selected twice");
      s.selected.push_back(s.regions_of(c));
      changed = true;
    }
  if (changed) refresh_candidates(s, cfg.limits);
}

inline std::vector<direction_decision> decide_frame(const std::vector<frame_state>& states,
                                                    const std::vector<frame_geometry>& geo, std::size_t w,
                                                    const temporal_config& cfg) {
  directional_flows prev, next;
  if (states[w].remaining.empty()) return {};
  if (w > 0) prev = flows_from_neighbor(states[w], geo[w], states[w - 1], geo[w - 1], cfg);
  if (w + 1 < states.size()) next = flows_from_neighbor(states[w], geo[w], states[w + 1], geo[w + 1], cfg);
  return resolve_directions(states[w], prev, next);
}

}  // namespace detail

// One SSM/SUM round over every frame. Returns the per-component decisions.
inline std::vector<direction_decision> iterate(std::vector<frame_state>& states, const std::vector<frame_geometry>& geo,
                                               const temporal_config& cfg) {
  if (geo.size() != states.size()) throw precondition_error("iterate: geometry count differs from frame count");
  std::vector<direction_decision> all;
  if (cfg.sweep) {
    for (std::size_t w = 0; w < states.size(); ++w) {
      auto d = detail::decide_frame(states, geo, w, cfg);
      detail::apply_decisions(states[w], d, cfg);
      all.insert(all.end(), d.begin(), d.end());
    }
    return all;
  }
  std::vector<std::vector<direction_decision>> per_frame(states.size());
  for (std::size_t w = 0; w < states.size(); ++w) per_frame[w] = detail::decide_frame(states, geo, w, cfg);
  for (std::size_t w = 0; w < states.size(); ++w) {
    detail::apply_decisions(states[w], per_frame[w], cfg);
    all.insert(all.end(), per_frame[w].begin(), per_frame[w].end());
  }
  return all;
}

struct final_instances {
  std::vector<region_set> pending;  // chosen at final selection
  std::vector<region_set> all;      // selected during iterations, then pending
};

// Remaining uncertain boundaries are binarized (score >= threshold is true);
// the remaining nodes merge over false ones.
inline final_instances final_selection(const frame_state& s, const boundary_scores& scores,
                                       double threshold = default_boundary_threshold) {
  final_instances out;
  const std::vector<region_id> rem(s.remaining.begin(), s.remaining.end());
  std::map<region_id, std::size_t> local;
  for (std::size_t i = 0; i < rem.size(); ++i) local[rem[i]] = i;
  disjoint_set ds(rem.size());
  for (const auto& [pair, originals] : s.uncertain_edges) {
    if (!s.remaining.count(pair.lo) || !s.remaining.count(pair.hi)) continue;
    const bool any_false = std::any_of(originals.begin(), originals.end(),
                                       [&](const boundary_key& k) { return scores.at(k) < threshold; });
    if (any_false) ds.unite(local.at(pair.lo), local.at(pair.hi));
  }
  std::map<std::size_t, instance_candidate> groups;
  for (std::size_t i = 0; i < rem.size(); ++i) groups[ds.find(i)].regions.push_back(rem[i]);
  for (const auto& [root, c] : groups) out.pending.push_back(s.regions_of(c));
  std::sort(out.pending.begin(), out.pending.end());
  out.all = s.selected;
  out.all.insert(out.all.end(), out.pending.begin(), out.pending.end());
  return out;
}

// Called after every iteration with the states before and after it.
using temporal_observer = std::function<void(std::size_t iteration, const std::vector<frame_state>& before,
                                             const std::vector<frame_state>& after,
                                             const std::vector<direction_decision>& decisions)>;

// Full temporal refinement on frames that have already been analysed and scored.
inline std::vector<final_instances> refine_video(const std::vector<frame_analysis>& frames,
                                                 const std::vector<boundary_scores>& scores,
                                                 const temporal_config& cfg,
                                                 const temporal_observer& observer = {}) {
  cfg.validate();
  if (frames.empty()) throw precondition_error("refine_video: no frames");
  if (scores.size() != frames.size()) throw precondition_error("refine_video: score count differs from frame count");
  std::vector<frame_state> states;
  std::vector<frame_geometry> geo;
  for (std::size_t w = 0; w < frames.size(); ++w) {
    if (w > 0 && !(frames[w].probabilities.shape() == frames[0].probabilities.shape()))
      throw precondition_error("refine_video: frame " + std::to_string(w) + " has different dimensions");
    states.push_back(init_state(frames[w].graph, scores[w], cfg, w));
    geo.emplace_back(frames[w].flooded);
  }
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    if (observer) {
      const auto before = states;
      const auto decisions = iterate(states, geo, cfg);
      observer(t, before, states, decisions);
    } else {
      iterate(states, geo, cfg);
    }
  }
  std::vector<final_instances> out;
  for (std::size_t w = 0; w < frames.size(); ++w) out.push_back(final_selection(states[w], scores[w]));
  return out;
}

inline std::vector<instance_candidate> as_groups(const std::vector<region_set>& instances) {
  std::vector<instance_candidate> out;
  for (const auto& r : instances) out.push_back(instance_candidate{r});
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<label_map> segment_video_scored(const std::vector<frame_analysis>& frames,
                                                   const std::vector<boundary_scores>& scores,
                                                   const temporal_config& cfg, rim_policy rim,
                                                   const temporal_observer& observer = {}) {
  const auto refined = refine_video(frames, scores, cfg, observer);
  std::vector<label_map> out;
  for (std::size_t w = 0; w < frames.size(); ++w) out.push_back(render_instances(frames[w], as_groups(refined[w].all), rim));
  return out;
}

inline std::vector<label_map> segment_video(const std::vector<prob_map>& frames, const boundary_scorer& scorer,
                                            const pipeline_config& pcfg, const temporal_config& tcfg,
                                            std::size_t jobs = 1, const temporal_observer& observer = {}) {
  if (frames.empty()) throw precondition_error("segment_video: no frames");
  pipeline_config c = pcfg;
  c.mode = pipeline_mode::ceb;
  std::vector<frame_analysis> analyses(frames.size());
  std::vector<boundary_scores> scores(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t w) {
    analyses[w] = analyze_frame(frames[w], c, w);
    scores[w] = score_boundaries(analyses[w], scorer);
  });
  return segment_video_scored(analyses, scores, tcfg, c.rim, observer);
}

// Invariant checks over one iteration; returns a description of the first
// violation, or nothing.
inline std::optional<std::string> check_iteration_invariants(const std::vector<frame_state>& before,
                                                             const std::vector<frame_state>& after,
                                                             const std::vector<direction_decision>& decisions) {
  if (before.size() != after.size()) return "frame count changed";
  for (std::size_t w = 0; w < after.size(); ++w) {
    const auto& b = before[w];
    const auto& a = after[w];
    const std::string tag = "frame " + std::to_string(w) + ": ";
    if (a.selected.size() < b.selected.size() ||
        !std::equal(b.selected.begin(), b.selected.end(), a.selected.begin()))
      return tag + "selection not monotone";
    std::vector<region_id> seen;
    for (const auto& u : a.selected) seen.insert(seen.end(), u.begin(), u.end());
    for (region_id n : a.remaining) seen.insert(seen.end(), a.nodes[n - 1].begin(), a.nodes[n - 1].end());
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
      std::vector<region_id> sel;
      for (const auto& u : a.selected) sel.insert(sel.end(), u.begin(), u.end());
      std::sort(sel.begin(), sel.end());
      if (std::adjacent_find(sel.begin(), sel.end()) != sel.end()) return tag + "region selected twice";
      return tag + "selected region still in the reduced graph";
    }
    std::vector<region_id> all;
    for (const auto& n : a.nodes) all.insert(all.end(), n.begin(), n.end());
    std::sort(all.begin(), all.end());
    if (seen != all) return tag + "regions not conserved";
  }
  for (const auto& d : decisions) {
    const double best = d.has_previous && d.has_next ? std::max(d.previous_sum, d.next_sum)
                        : d.has_previous             ? d.previous_sum
                                                     : d.next_sum;
    const double chosen = d.chose_previous ? d.previous_sum : d.next_sum;
    if (chosen != best) return "frame " + std::to_string(d.frame) + ": direction sum is not the maximum";
    if (d.has_previous && d.has_next && d.previous_sum == d.next_sum && !d.chose_previous)
      return "frame " + std::to_string(d.frame) + ": tie not given to the previous frame";
  }
  return std::nullopt;
}

}  // namespace ceb
