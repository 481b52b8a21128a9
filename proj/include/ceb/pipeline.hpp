#pragma once

// Single-frame orchestration: seeds -> flood -> region graph -> signatures ->
// scores -> merge over false boundaries -> label map. Also derives training
// labels from ground truth by GI-matching.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ceb/classifier.hpp"
#include "ceb/error.hpp"
#include "ceb/labels.hpp"
#include "ceb/matching.hpp"
#include "ceb/raster_io.hpp"
#include "ceb/region_graph.hpp"
#include "ceb/seeds.hpp"
#include "ceb/signature.hpp"
#include "ceb/watershed.hpp"

namespace ceb {

enum class pipeline_mode { ceb, ceb_wo_cls };

// What happens to watershed pixels on a true boundary (between two instances).
enum class rim_policy { higher_mean_probability, unassigned };

struct pipeline_config {
  double quantization_step = default_quantization_step;
  std::size_t min_area = default_seed_min_area;
  connectivity conn = connectivity::eight;
  float foreground_threshold = 0.5f;
  signature_config signature;
  double boundary_threshold = default_boundary_threshold;
  enumeration_limits limits;
  solver_options solver;
  pipeline_mode mode = pipeline_mode::ceb;
  rim_policy rim = rim_policy::higher_mean_probability;

  void validate() const {
    if (!(quantization_step > 0.0 && quantization_step <= 0.1))
      throw precondition_error("pipeline_config: quantization step must be in (0, 0.1]");
    if (min_area < 1) throw precondition_error("pipeline_config: min_area must be >= 1");
    if (!(foreground_threshold >= 0.0f && foreground_threshold <= 1.0f))
      throw precondition_error("pipeline_config: foreground threshold outside [0,1]");
    if (signature.canvas < 8) throw precondition_error("pipeline_config: canvas side must be >= 8");
    if (signature.branch_length < 1) throw precondition_error("pipeline_config: branch length must be >= 1");
    if (!(boundary_threshold >= 0.0 && boundary_threshold <= 1.0))
      throw precondition_error("pipeline_config: boundary threshold outside [0,1]");
    if (limits.max_nodes < 1 || limits.max_nodes > 64 || limits.max_candidates < 1)
      throw precondition_error("pipeline_config: enumeration caps out of range");
  }
};

// Everything the frame-level stages produce before scoring.
struct frame_analysis {
  std::size_t frame = 0;
  prob_map probabilities;
  std::vector<std::uint8_t> foreground;
  seed_set seeds;
  flood_result flooded;
  region_graph graph;
  boundary_codebook codebook;
  std::vector<signature_record> signatures;  // empty in ceb_wo_cls mode
};

inline frame_analysis analyze_frame(const prob_map& p, const pipeline_config& cfg, std::size_t frame = 0) {
  cfg.validate();
  frame_analysis a;
  a.frame = frame;
  a.probabilities = p;
  a.foreground = foreground_mask(p, cfg.foreground_threshold);
  const auto levels = build_threshold_list(p, cfg.quantization_step);
  if (!levels.empty()) a.seeds = extract_seeds(build_forest(p, levels, cfg.conn), cfg.min_area);
  if (a.seeds.seeds.empty()) {
    a.flooded.shape = p.shape();
    a.flooded.status.assign(p.shape().size(), pixel_status::outside);
    return a;
  }
  a.flooded = flood(p, a.foreground, a.seeds, cfg.conn);
  a.graph = build_graph(a.flooded);
  if (cfg.mode == pipeline_mode::ceb && !a.flooded.boundaries.empty()) {
    a.codebook = build_codebook(a.flooded, a.foreground);
    a.signatures = extract_signatures(a.flooded, a.codebook, cfg.signature, frame);
  }
  return a;
}

inline boundary_scores score_boundaries(const frame_analysis& a, const boundary_scorer& scorer) {
  boundary_scores out;
  for (const auto& rec : a.signatures) {
    const double s = scorer.score(rec);
    if (!(s >= 0.0 && s <= 1.0)) throw range_error("scorer returned " + std::to_string(s) + " for " + rec.id);
    out[rec.key] = s;
  }
  return out;
}

// Region groups obtained by contracting every false edge; sorted by smallest region.
inline std::vector<instance_candidate> merge_regions(const region_graph& g, const boundary_labeling& labels) {
  const auto ids = g.node_ids();
  std::map<region_id, std::size_t> local;
  for (std::size_t i = 0; i < ids.size(); ++i) local[ids[i]] = i;
  disjoint_set ds(ids.size());
  for (const auto& [key, count] : g.edges()) {
    auto it = labels.find(key);
    if (it == labels.end()) throw precondition_error("merge_regions: no label for boundary " + to_string(key));
    if (!it->second) ds.unite(local.at(key.lo), local.at(key.hi));
  }
  std::map<std::size_t, instance_candidate> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[ds.find(i)].regions.push_back(ids[i]);
  std::vector<instance_candidate> out;
  for (auto& [root, c] : groups) out.push_back(std::move(c));
  std::sort(out.begin(), out.end());
  return out;
}

// Paints each group (regions plus their internal watershed pixels) with ids
// ordered by the group's top-left pixel, then applies the rim policy to the
// watershed pixels that separate two groups.
inline label_map render_instances(const frame_analysis& a, const std::vector<instance_candidate>& groups,
                                  rim_policy rim) {
  const auto& g = a.probabilities.shape();
  label_map out(g.width, g.height);
  if (groups.empty()) return out;

  std::vector<pixel_list> masks;
  masks.reserve(groups.size());
  for (const auto& c : groups) masks.push_back(candidate_mask(c, a.flooded));
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    if (masks[l].empty() != masks[r].empty()) return masks[r].empty();
    if (masks[l].empty()) return l < r;
    return masks[l].front() < masks[r].front();
  });

  std::map<region_id, std::uint32_t> instance_of;
  std::vector<double> mean_p(groups.size() + 1, 0.0);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto id = static_cast<std::uint32_t>(rank + 1);
    const std::size_t gi = order[rank];
    for (region_id r : groups[gi].regions) {
      if (!instance_of.emplace(r, id).second)
        throw precondition_error("render_instances: region " + std::to_string(r) + " is in two groups");
    }
    double sum = 0.0;
    for (pixel_index px : masks[gi]) {
      if (out[px] != 0) throw precondition_error("render_instances: overlapping groups");
      out.set(px, id);
      sum += a.probabilities[px];
    }
    mean_p[id] = masks[gi].empty() ? 0.0 : sum / static_cast<double>(masks[gi].size());
  }
  if (rim == rim_policy::unassigned) return out;

  std::vector<std::pair<pixel_index, std::uint32_t>> assigned;
  for (const auto& [key, px] : a.flooded.boundaries) {
    auto lo = instance_of.find(key.lo);
    auto hi = instance_of.find(key.hi);
    if (lo == instance_of.end() || hi == instance_of.end() || lo->second == hi->second) continue;
    for (pixel_index p : px) {
      bool touch_lo = false, touch_hi = false;
      for_each_neighbor(g, p, connectivity::eight, [&](pixel_index n) {
        touch_lo = touch_lo || out[n] == lo->second;
        touch_hi = touch_hi || out[n] == hi->second;
      });
      std::uint32_t pick = 0;
      if (touch_lo && touch_hi) {
        const std::uint32_t a_id = std::min(lo->second, hi->second);
        const std::uint32_t b_id = std::max(lo->second, hi->second);
        pick = mean_p[b_id] > mean_p[a_id] ? b_id : a_id;
      } else if (touch_lo) {
        pick = lo->second;
      } else if (touch_hi) {
        pick = hi->second;
      }
      if (pick != 0) assigned.emplace_back(p, pick);
    }
  }
  // Decided against the pre-rim masks so the result does not depend on visiting order.
  for (const auto& [p, id] : assigned) out.set(p, id);
  return out;
}

inline label_map segment_analyzed(const frame_analysis& a, const boundary_labeling& labels, rim_policy rim) {
  return render_instances(a, merge_regions(a.graph, labels), rim);
}

inline label_map segment_frame(const prob_map& p, const boundary_scorer& scorer, const pipeline_config& cfg,
                               std::size_t frame = 0) {
  if (cfg.mode == pipeline_mode::ceb_wo_cls) {
    const auto a = analyze_frame(p, cfg, frame);
    boundary_labeling all_true;
    for (const auto& [key, count] : a.graph.edges()) all_true[key] = true;
    return segment_analyzed(a, all_true, cfg.rim);
  }
  const auto a = analyze_frame(p, cfg, frame);
  return segment_analyzed(a, binarize(score_boundaries(a, scorer), cfg.boundary_threshold), cfg.rim);
}

// Every region-region boundary taken as a true boundary.
inline label_map segment_frame_wo_cls(const prob_map& p, const pipeline_config& cfg, std::size_t frame = 0) {
  pipeline_config c = cfg;
  c.mode = pipeline_mode::ceb_wo_cls;
  return segment_frame(p, constant_scorer(1.0), c, frame);
}

// ---------------------------------------------------------------------------
// Training labels.

struct training_set {
  std::vector<signature_record> records;  // labelled; skipped components excluded
  boundary_labeling labels;               // every graph edge (skipped ones stay true)
  std::vector<std::string> warnings;
  matching_result matching;
  std::vector<instance_candidate> candidates;
  score_matrix gi_scores;  // ground-truth rows x candidate columns, for model dumps
};

namespace detail {

// Per-GT overlap counts of each region and each boundary, so candidate IoUs
// can be summed instead of rasterized.
struct overlap_table {
  std::vector<std::uint32_t> gt_ids;
  std::vector<std::size_t> gt_area;
  std::map<region_id, std::map<std::size_t, std::size_t>> region_hits;
  std::map<boundary_key, std::map<std::size_t, std::size_t>> boundary_hits;
};

inline overlap_table tabulate_overlap(const flood_result& r, const label_map& gt) {
  overlap_table t;
  t.gt_ids = gt.instance_ids();
  std::map<std::uint32_t, std::size_t> row;
  for (std::size_t i = 0; i < t.gt_ids.size(); ++i) row[t.gt_ids[i]] = i;
  t.gt_area.assign(t.gt_ids.size(), 0);
  for (std::uint32_t v : gt.labels())
    if (v != 0) ++t.gt_area[row.at(v)];
  for (std::size_t k = 0; k < r.regions.size(); ++k)
    for (pixel_index p : r.regions[k])
      if (gt[p] != 0) ++t.region_hits[static_cast<region_id>(k + 1)][row.at(gt[p])];
  for (const auto& [key, px] : r.boundaries)
    for (pixel_index p : px)
      if (gt[p] != 0) ++t.boundary_hits[key][row.at(gt[p])];
  return t;
}

}  // namespace detail

inline training_set make_training_set(const prob_map& p, const label_map& gt, const pipeline_config& cfg,
                                      std::size_t frame = 0) {
  if (gt.shape() != p.shape()) throw precondition_error("make_training_set: ground truth dimensions differ");
  pipeline_config c = cfg;
  c.mode = pipeline_mode::ceb;
  const auto a = analyze_frame(p, c, frame);
  training_set ts;

  std::vector<instance_candidate> cands;
  std::set<region_id> skipped;
  for (const auto& comp : a.graph.connected_components()) {
    try {
      auto part = enumerate_component_candidates(a.graph, comp, c.limits, cands.size());
      cands.insert(cands.end(), part.begin(), part.end());
    } catch (const capacity_error& e) {
      ts.warnings.push_back(std::string("frame ") + std::to_string(frame) + ": " + e.what() +
                            "; component skipped for training labels");
      skipped.insert(comp.begin(), comp.end());
    }
  }
  std::sort(cands.begin(), cands.end());

  const auto table = detail::tabulate_overlap(a.flooded, gt);
  score_matrix m(table.gt_ids.size(), cands.size());
  for (std::size_t j = 0; j < cands.size(); ++j) {
    const auto& cand = cands[j];
    std::size_t area = 0;
    std::map<std::size_t, std::size_t> inter;
    for (region_id r : cand.regions) {
      area += a.graph.area(r);
      auto it = table.region_hits.find(r);
      if (it != table.region_hits.end())
        for (const auto& [row, n] : it->second) inter[row] += n;
    }
    for (const auto& [key, px] : a.flooded.boundaries) {
      if (!cand.contains(key.lo) || !cand.contains(key.hi)) continue;
      area += px.size();
      auto it = table.boundary_hits.find(key);
      if (it != table.boundary_hits.end())
        for (const auto& [row, n] : it->second) inter[row] += n;
    }
    for (const auto& [row, n] : inter) {
      const double iou = static_cast<double>(n) / static_cast<double>(table.gt_area[row] + area - n);
      m.set(row, j, iou);
    }
  }
  ts.matching = solve_gi(table.gt_ids.size(), cands, index_candidates(cands), m, c.solver);
  ts.gi_scores = m;
  ts.labels = assign_labels(ts.matching, cands, a.graph);
  ts.candidates = std::move(cands);
  for (auto rec : a.signatures) {
    if (skipped.count(rec.key.lo)) continue;
    rec.label = ts.labels.at(rec.key);
    ts.records.push_back(std::move(rec));
  }
  return ts;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are
// rethrown from the lowest failing index.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  const std::size_t workers = std::min(jobs, n);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ceb
