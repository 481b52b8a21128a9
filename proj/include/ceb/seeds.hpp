#pragma once

// Seed generation from an instance candidate forest: thresholding the
// probability map at every distinct (merged) value above 0.5 yields nested
// connected components; the deepest ones become watershed seeds.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/grid.hpp"
#include "ceb/raster_io.hpp"

namespace ceb {

inline constexpr double default_quantization_step = 1.0 / 255.0;
inline constexpr float seed_probability_floor = 0.5f;

// Ascending thresholds, all strictly above 0.5.
struct threshold_list {
  std::vector<float> values;
  [[nodiscard]] bool empty() const { return values.empty(); }
};

// Distinct probability values above 0.5, merged greedily: each threshold
// opens a bin [v, v + step) that absorbs all larger values falling inside it,
// so consecutive thresholds differ by at least `step`. Each threshold is an
// actual pixel value.
inline threshold_list build_threshold_list(const prob_map& p, double step = default_quantization_step) {
  if (!(step > 0.0 && step <= 0.1)) throw precondition_error("build_threshold_list: step must be in (0, 0.1]");
  std::vector<float> v;
  for (float x : p.values())
    if (x > seed_probability_floor) v.push_back(x);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  threshold_list out;
  for (float x : v) {
    if (out.values.empty() || static_cast<double>(x) >= static_cast<double>(out.values.back()) + step)
      out.values.push_back(x);
  }
  return out;
}

struct forest_node {
  std::size_t level = 0;           // index into the threshold list
  pixel_list pixels;               // sorted linear indices
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
};

struct candidate_forest {
  grid_shape shape;
  std::vector<float> thresholds;
  std::vector<forest_node> nodes;

  [[nodiscard]] std::vector<std::size_t> roots() const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (!nodes[i].parent) r.push_back(i);
    return r;
  }
  [[nodiscard]] std::vector<std::size_t> leaves() const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].children.empty()) r.push_back(i);
    return r;
  }
};

inline candidate_forest build_forest(const prob_map& p, const threshold_list& thresholds,
                                     connectivity conn = connectivity::eight) {
  if (thresholds.empty()) throw precondition_error("build_forest: empty threshold list");
  candidate_forest f;
  f.shape = p.shape();
  f.thresholds = thresholds.values;
  const std::size_t n = p.shape().size();
  std::vector<std::uint8_t> mask(n);
  // node index of each pixel at the previous level (or -1)
  std::vector<std::int64_t> prev_node(n, -1);
  std::vector<std::int64_t> cur_node(n, -1);
  for (std::size_t level = 0; level < thresholds.values.size(); ++level) {
    const float t = thresholds.values[level];
    for (std::size_t i = 0; i < n; ++i) mask[i] = p.values()[i] >= t ? 1 : 0;
    const auto cc = label_components(p.shape(), mask, conn);
    const std::size_t base = f.nodes.size();
    f.nodes.resize(base + static_cast<std::size_t>(cc.count));
    std::fill(cur_node.begin(), cur_node.end(), -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (cc.labels[i] == 0) continue;
      const std::size_t node = base + static_cast<std::size_t>(cc.labels[i] - 1);
      auto& nd = f.nodes[node];
      if (nd.pixels.empty()) {
        nd.level = level;
        if (level > 0) {
          // Nesting guarantees the whole component sits inside one parent.
          const auto parent = static_cast<std::size_t>(prev_node[i]);
          nd.parent = parent;
          f.nodes[parent].children.push_back(node);
        }
      }
      nd.pixels.push_back(static_cast<pixel_index>(i));
      cur_node[i] = static_cast<std::int64_t>(node);
    }
    std::swap(prev_node, cur_node);
  }
  return f;
}

struct seed_set {
  // seeds[k] carries seed id k + 1
  std::vector<pixel_list> seeds;
  [[nodiscard]] std::size_t size() const { return seeds.size(); }
  [[nodiscard]] bool empty() const { return seeds.empty(); }
};

inline constexpr std::size_t default_seed_min_area = 3;

// Nodes smaller than `min_area` are pruned (area never grows with depth, so the
// kept set is closed under ancestors); every kept node without a kept child is
// a seed. Ids follow the row-major position of each seed's first pixel.
inline seed_set extract_seeds(const candidate_forest& f, std::size_t min_area = default_seed_min_area) {
  std::vector<char> kept(f.nodes.size());
  for (std::size_t i = 0; i < f.nodes.size(); ++i) kept[i] = f.nodes[i].pixels.size() >= min_area;
  std::vector<const pixel_list*> picked;
  for (std::size_t i = 0; i < f.nodes.size(); ++i) {
    if (!kept[i]) continue;
    const auto& ch = f.nodes[i].children;
    const bool has_kept_child = std::any_of(ch.begin(), ch.end(), [&](std::size_t c) { return kept[c] != 0; });
    if (!has_kept_child) picked.push_back(&f.nodes[i].pixels);
  }
  std::sort(picked.begin(), picked.end(),
            [](const pixel_list* a, const pixel_list* b) { return a->front() < b->front(); });
  seed_set out;
  out.seeds.reserve(picked.size());
  for (const auto* px : picked) out.seeds.push_back(*px);
  return out;
}

// Seeds rendered as a label map (debug dump).
inline label_map seeds_to_labelmap(const grid_shape& g, const seed_set& s) {
  label_map m(g.width, g.height);
  for (std::size_t k = 0; k < s.seeds.size(); ++k)
    for (pixel_index px : s.seeds[k]) m.set(px, static_cast<std::uint32_t>(k + 1));
  return m;
}

}  // namespace ceb
