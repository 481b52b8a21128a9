#pragma once

// Random instance generators shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "ceb/ceb.hpp"
#include "oracles/matching_oracle.hpp"
#include "support.hpp"

namespace cases {

struct flood_case {
  ceb::prob_map p;
  std::vector<std::uint8_t> fg;
  ceb::seed_set seeds;
  ceb::connectivity conn = ceb::connectivity::eight;
};

// w x h map with values on a coarse grid (so equal-probability buckets are
// common), foreground p >= 0.3 plus forced seed pixels, and 2-4 seeds of 1-3 pixels.
inline flood_case random_flood(std::mt19937_64& rng, int w = 16, int h = 16) {
  flood_case c;
  const int levels = 4 + static_cast<int>(rng() % 12);
  std::vector<float> v(static_cast<std::size_t>(w * h));
  for (auto& x : v) x = static_cast<float>(static_cast<int>(unit(rng) * levels)) / static_cast<float>(levels);
  c.p = ceb::prob_map(w, h, v);
  c.fg.assign(v.size(), 0);
  const bool everything = rng() % 4 == 0;
  for (std::size_t i = 0; i < v.size(); ++i) c.fg[i] = everything || v[i] >= 0.3f;
  c.conn = rng() % 3 == 0 ? ceb::connectivity::four : ceb::connectivity::eight;
  const int count = 2 + static_cast<int>(rng() % 3);
  std::vector<char> taken(v.size(), 0);
  while (static_cast<int>(c.seeds.size()) < count) {
    const int x = static_cast<int>(rng() % static_cast<unsigned>(w));
    const int y = static_cast<int>(rng() % static_cast<unsigned>(h));
    const int len = 1 + static_cast<int>(rng() % 3);
    ceb::pixel_list seed;
    for (int k = 0; k < len && x + k < w; ++k) {
      const int i = y * w + x + k;
      if (taken[static_cast<std::size_t>(i)]) break;
      seed.push_back(i);
    }
    if (seed.empty()) continue;
    for (int i : seed) {
      taken[static_cast<std::size_t>(i)] = 1;
      c.fg[static_cast<std::size_t>(i)] = 1;
    }
    c.seeds.seeds.push_back(seed);
  }
  return c;
}

// A packing instance in both the library's and the oracle's shape.
struct packing_case {
  std::size_t rows = 0;
  std::vector<ceb::instance_candidate> cands;  // empty for SSM
  ceb::score_matrix scores;
  oracle::packing_instance brute;
};

// Scores are multiples of 1/64 so sums are exact in binary floating point.
inline double dyadic_score(std::mt19937_64& rng, double density) {
  if (unit(rng) >= density) return 0.0;
  return static_cast<double>(1 + rng() % 64) / 64.0;
}

inline packing_case random_region_packing(std::mt19937_64& rng) {
  packing_case c;
  c.rows = 1 + rng() % 6;
  const std::uint32_t regions = 2 + static_cast<std::uint32_t>(rng() % 7);
  const std::size_t want = 1 + rng() % 12;
  std::set<std::vector<ceb::region_id>> seen;
  for (std::size_t tries = 0; c.cands.size() < want && tries < 200; ++tries) {
    std::vector<ceb::region_id> r;
    for (ceb::region_id id = 1; id <= regions; ++id)
      if (unit(rng) < 0.3) r.push_back(id);
    if (r.empty()) r.push_back(1 + static_cast<ceb::region_id>(rng() % regions));
    if (seen.insert(r).second) c.cands.push_back({r});
  }
  std::sort(c.cands.begin(), c.cands.end());
  const double density = 0.3 + 0.7 * unit(rng);
  c.scores = ceb::score_matrix(c.rows, c.cands.size());
  c.brute.rows = c.rows;
  c.brute.score.assign(c.rows, std::vector<double>(c.cands.size(), 0.0));
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < c.cands.size(); ++j) {
      const double s = dyadic_score(rng, density);
      if (s > 0) c.scores.set(i, j, s);
      c.brute.score[i][j] = s;
    }
  for (const auto& cand : c.cands) {
    std::vector<std::size_t> res;
    for (ceb::region_id r : cand.regions) res.push_back(r - 1);
    c.brute.col_resources.push_back(res);
  }
  return c;
}

inline packing_case random_ssm(std::mt19937_64& rng) {
  packing_case c;
  c.rows = 1 + rng() % 6;
  const std::size_t cols = 1 + rng() % 6;
  const double density = 0.3 + 0.7 * unit(rng);
  c.scores = ceb::score_matrix(c.rows, cols);
  c.brute.rows = c.rows;
  c.brute.score.assign(c.rows, std::vector<double>(cols, 0.0));
  for (std::size_t j = 0; j < cols; ++j) c.brute.col_resources.push_back({j});
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double s = dyadic_score(rng, density);
      if (s > 0) c.scores.set(i, j, s);
      c.brute.score[i][j] = s;
    }
  return c;
}

// Empty string when every packing constraint holds: flows only on scored pairs,
// at most one flow per row, per column, and per resource (region).
inline std::string packing_violation(const packing_case& c, const ceb::matching_result& r) {
  std::set<std::size_t> rows, cols, res;
  double total = 0.0;
  for (const auto& f : r.flows) {
    if (f.row >= c.rows || f.col >= c.brute.col_resources.size()) return "flow index out of range";
    if (!(c.scores.get(f.row, f.col) > 0.0)) return "flow on an unscored pair";
    if (!rows.insert(f.row).second) return "row used twice";
    if (!cols.insert(f.col).second) return "column used twice";
    for (std::size_t x : c.brute.col_resources[f.col])
      if (!res.insert(x).second) return "region covered twice";
    total += c.scores.get(f.row, f.col);
  }
  if (total != r.objective) return "objective does not equal the flow sum";
  return {};
}

// Random simple graph on nodes 1..n.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> random_edges(std::mt19937_64& rng, std::uint32_t n) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
  const double density = 0.15 + 0.6 * unit(rng);
  for (std::uint32_t a = 1; a <= n; ++a)
    for (std::uint32_t b = a + 1; b <= n; ++b)
      if (unit(rng) < density) e.emplace_back(a, b);
  return e;
}

inline ceb::region_graph graph_of(std::uint32_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  ceb::region_graph g;
  for (std::uint32_t v = 1; v <= n; ++v) g.add_node(v, 1);
  for (const auto& [a, b] : edges) g.add_edge(ceb::boundary_key(a, b), 1);
  return g;
}

// Connected 8-neighbour pixel set grown by random accretion inside a w x h box.
inline ceb::pixel_list random_connected_pixels(std::mt19937_64& rng, const ceb::grid_shape& g, std::size_t size) {
  std::set<ceb::pixel_index> set{g.index(g.width / 2, g.height / 2)};
  std::vector<ceb::pixel_index> frontier(set.begin(), set.end());
  while (set.size() < size) {
    const auto from = frontier[rng() % frontier.size()];
    const auto& off = ceb::neighbor_offsets[rng() % 8];
    const int x = g.x_of(from) + off.dx, y = g.y_of(from) + off.dy;
    if (!g.contains(x, y)) continue;
    if (set.insert(g.index(x, y)).second) frontier.push_back(g.index(x, y));
  }
  return {set.begin(), set.end()};
}

// 64x64 "X" or "T" drawings with jittered size, position and stroke width.
inline ceb::signature_record xt_sample(std::mt19937_64& rng, bool is_x, std::size_t index) {
  ceb::signature_record rec;
  rec.id = "xt" + std::to_string(index);
  rec.key = ceb::boundary_key(1, 2 + static_cast<ceb::region_id>(index));
  rec.raster = ceb::binary_raster(64);
  rec.label = is_x;
  const int half = 10 + static_cast<int>(rng() % 12);
  const int cx = 20 + static_cast<int>(rng() % 24), cy = 20 + static_cast<int>(rng() % 24);
  const int thick = 1 + static_cast<int>(rng() % 2);
  auto dot = [&](int x, int y) {
    for (int t = 0; t < thick; ++t)
      if (x + t >= 0 && x + t < 64 && y >= 0 && y < 64) rec.raster.set(x + t, y);
  };
  for (int k = -half; k <= half; ++k) {
    if (is_x) {
      dot(cx + k, cy + k);
      dot(cx + k, cy - k);
    } else {
      dot(cx + k, cy - half);
      dot(cx, cy + k);
    }
  }
  return rec;
}

inline std::vector<ceb::signature_record> xt_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ceb::signature_record> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(xt_sample(rng, i % 2 == 0, i));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic end-to-end material.

inline ceb::synth_spec image_spec(std::size_t i) {
  ceb::synth_spec s;
  s.seed = 1000 + i;
  s.cells = 10 + (i * 7) % 21;  // 10..30
  return s;
}

inline ceb::synth_spec video_spec(std::size_t v) {
  ceb::synth_spec s;
  s.seed = 5000 + v;
  s.cells = 15;
  s.frames = 5;
  s.drift = 1.5;
  return s;
}

// Oracle scores (1 = true boundary, 0 = false) from GI-matching against ground truth.
inline ceb::boundary_scores oracle_scores(const ceb::training_set& ts) {
  ceb::boundary_scores s;
  for (const auto& [k, v] : ts.labels) s[k] = v ? 1.0 : 0.0;
  return s;
}

// Moves round(fraction * n) (at least one) randomly chosen boundaries to the
// wrong side of 0.5 while keeping them in the uncertain band: 1 -> 0.4, 0 -> 0.6.
inline std::size_t corrupt_scores(ceb::boundary_scores& s, double fraction, std::uint64_t seed) {
  std::vector<ceb::boundary_key> keys;
  for (const auto& [k, v] : s) keys.push_back(k);
  if (keys.empty()) return 0;
  std::mt19937_64 rng(seed);
  for (std::size_t i = keys.size(); i > 1; --i) std::swap(keys[i - 1], keys[rng() % i]);
  const std::size_t n = std::min(keys.size(), std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(keys.size())))));
  for (std::size_t i = 0; i < n; ++i) s[keys[i]] = s[keys[i]] >= 0.5 ? 0.4 : 0.6;
  return n;
}

// Analysed frames of a synthetic video with per-frame oracle scores.
struct video_material {
  std::vector<ceb::synth_frame> frames;
  std::vector<ceb::frame_analysis> analyses;
  std::vector<ceb::boundary_scores> oracle;
};

inline video_material make_video(const ceb::synth_spec& spec, const ceb::pipeline_config& cfg = {}) {
  video_material v;
  v.frames = ceb::synth_video(spec);
  for (std::size_t w = 0; w < v.frames.size(); ++w) {
    v.analyses.push_back(ceb::analyze_frame(v.frames[w].probabilities, cfg, w));
    v.oracle.push_back(oracle_scores(ceb::make_training_set(v.frames[w].probabilities, v.frames[w].truth, cfg, w)));
  }
  return v;
}

// Per-frame segmentation of already scored frames (binarized at the default threshold).
inline std::vector<ceb::label_map> per_frame(const std::vector<ceb::frame_analysis>& a,
                                             const std::vector<ceb::boundary_scores>& scores,
                                             ceb::rim_policy rim = ceb::rim_policy::higher_mean_probability) {
  std::vector<ceb::label_map> out;
  for (std::size_t w = 0; w < a.size(); ++w) out.push_back(ceb::segment_analyzed(a[w], ceb::binarize(scores[w]), rim));
  return out;
}

}  // namespace cases
