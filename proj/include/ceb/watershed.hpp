#pragma once

// Seeded flooding over a probability map that produces disjoint regions and
// the watershed-line pixels separating each pair of adjacent regions.
//
// Pixels are visited level by level in descending probability. At each level
// every pixel is first marked MASK, and those touching an already labelled
// region are queued (row-major). The queue is then drained FIFO: a pixel takes
// the label of the first labelled neighbour it sees and becomes a watershed
// pixel (WSHD) as soon as it sees a second, different label; a queued pixel
// whose first decisive neighbour is a watershed pixel joins that pixel's
// boundary. MASK neighbours of every dequeued pixel are queued in turn.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/grid.hpp"
#include "ceb/raster_io.hpp"
#include "ceb/seeds.hpp"

namespace ceb {

using region_id = std::uint32_t;

// Unordered region pair stored as (lo, hi).
struct boundary_key {
  region_id lo = 0;
  region_id hi = 0;

  boundary_key() = default;
  boundary_key(region_id a, region_id b) : lo(std::min(a, b)), hi(std::max(a, b)) {}

  [[nodiscard]] bool contains(region_id r) const { return r == lo || r == hi; }
  [[nodiscard]] region_id other(region_id r) const { return r == lo ? hi : lo; }

  friend auto operator<=>(const boundary_key&, const boundary_key&) = default;
  friend bool operator==(const boundary_key&, const boundary_key&) = default;
};

inline std::string to_string(const boundary_key& k) {
  return "{" + std::to_string(k.lo) + "," + std::to_string(k.hi) + "}";
}

namespace pixel_status {
inline constexpr std::int32_t outside = -4;  // not part of the foreground set
inline constexpr std::int32_t mask = -3;
inline constexpr std::int32_t in_queue = -2;
inline constexpr std::int32_t unvisited = -1;
inline constexpr std::int32_t watershed = 0;
}  // namespace pixel_status

struct flood_result {
  grid_shape shape;
  // regions[k] holds the sorted pixels of region id k + 1 (seed id k + 1).
  std::vector<pixel_list> regions;
  // Sorted watershed pixels per region pair.
  std::map<boundary_key, pixel_list> boundaries;
  // Final status per pixel (region id > 0, 0 = watershed, negative otherwise).
  std::vector<std::int32_t> status;
  // Foreground pixels never reached by any seed.
  pixel_list unreached;

  [[nodiscard]] std::size_t region_count() const { return regions.size(); }
  [[nodiscard]] const pixel_list& region(region_id id) const { return regions.at(id - 1); }
};

inline std::vector<std::uint8_t> foreground_mask(const prob_map& p, float threshold = 0.5f) {
  std::vector<std::uint8_t> m(p.shape().size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = p.values()[i] >= threshold ? 1 : 0;
  return m;
}

inline flood_result flood(const prob_map& p, std::span<const std::uint8_t> foreground, const seed_set& seeds,
                          connectivity conn = connectivity::eight) {
  namespace st = pixel_status;
  const grid_shape& g = p.shape();
  if (foreground.size() != g.size()) throw precondition_error("flood: foreground mask size mismatch");
  if (seeds.empty()) throw precondition_error("flood: no seeds");

  flood_result out;
  out.shape = g;
  auto& f = out.status;
  f.assign(g.size(), st::outside);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (foreground[i]) f[i] = st::unvisited;

  for (std::size_t k = 0; k < seeds.seeds.size(); ++k) {
    if (seeds.seeds[k].empty()) throw precondition_error("flood: empty seed");
    for (pixel_index px : seeds.seeds[k]) {
      if (px < 0 || static_cast<std::size_t>(px) >= g.size()) throw precondition_error("flood: seed pixel out of grid");
      if (f[static_cast<std::size_t>(px)] != st::unvisited)
        throw precondition_error(f[static_cast<std::size_t>(px)] == st::outside ? "flood: seed pixel outside foreground"
                                                                                 : "flood: seeds overlap");
      f[static_cast<std::size_t>(px)] = static_cast<std::int32_t>(k + 1);
    }
  }

  // Non-seed foreground pixels, grouped by exact probability, descending; each
  // group keeps row-major order.
  std::vector<pixel_index> order;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (f[i] == st::unvisited) order.push_back(static_cast<pixel_index>(i));
  std::stable_sort(order.begin(), order.end(), [&](pixel_index a, pixel_index b) { return p[a] > p[b]; });

  std::vector<boundary_key> keys;                 // boundary slot -> key
  std::map<boundary_key, std::size_t> slot_of;    // key -> slot
  std::vector<std::int32_t> pixel_slot(g.size(), -1);
  std::vector<pixel_list> boundary_pixels;
  auto add_to_boundary = [&](const boundary_key& key, pixel_index px) {
    auto [it, inserted] = slot_of.try_emplace(key, keys.size());
    if (inserted) {
      keys.push_back(key);
      boundary_pixels.emplace_back();
    }
    boundary_pixels[it->second].push_back(px);
    pixel_slot[static_cast<std::size_t>(px)] = static_cast<std::int32_t>(it->second);
  };

  std::vector<pixel_index> queue;
  std::size_t head = 0;
  std::size_t begin = 0;
  while (begin < order.size()) {
    std::size_t end = begin;
    while (end < order.size() && p[order[end]] == p[order[begin]]) ++end;

    for (std::size_t k = begin; k < end; ++k) {
      const pixel_index px = order[k];
      f[static_cast<std::size_t>(px)] = st::mask;
      const int x = g.x_of(px);
      const int y = g.y_of(px);
      for (std::size_t n = 0; n < neighbor_count(conn); ++n) {
        const int nx = x + neighbor_offsets[n].dx;
        const int ny = y + neighbor_offsets[n].dy;
        if (!g.contains(nx, ny)) continue;
        if (f[static_cast<std::size_t>(g.index(nx, ny))] > 0) {
          queue.push_back(px);
          f[static_cast<std::size_t>(px)] = st::in_queue;
          break;
        }
      }
    }

    while (head < queue.size()) {
      const pixel_index px = queue[head++];
      auto& fp = f[static_cast<std::size_t>(px)];
      for_each_neighbor(g, px, conn, [&](pixel_index q) {
        auto& fq = f[static_cast<std::size_t>(q)];
        if (fq > 0) {
          if (fp == st::in_queue) {
            fp = fq;
          } else if (fp > 0 && fp != fq) {
            add_to_boundary(boundary_key(static_cast<region_id>(fp), static_cast<region_id>(fq)), px);
            fp = st::watershed;
          }
        } else if (fq == st::watershed) {
          if (fp == st::in_queue) {
            add_to_boundary(keys[static_cast<std::size_t>(pixel_slot[static_cast<std::size_t>(q)])], px);
            fp = st::watershed;
          }
        } else if (fq == st::mask) {
          fq = st::in_queue;
          queue.push_back(q);
        }
      });
    }
    queue.clear();
    head = 0;
    begin = end;
  }

  out.regions.assign(seeds.size(), {});
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (f[i] > 0) {
      out.regions[static_cast<std::size_t>(f[i] - 1)].push_back(static_cast<pixel_index>(i));
    } else if (f[i] == st::mask || f[i] == st::unvisited || f[i] == st::in_queue) {
      out.unreached.push_back(static_cast<pixel_index>(i));
    }
  }
  for (std::size_t s = 0; s < keys.size(); ++s) {
    auto& px = boundary_pixels[s];
    std::sort(px.begin(), px.end());
    out.boundaries.emplace(keys[s], std::move(px));
  }
  return out;
}

// Region ids as a label map with watershed pixels rendered as 65535 (debug dump).
inline label_map flood_to_labelmap(const flood_result& r) {
  label_map m(r.shape.width, r.shape.height);
  for (std::size_t i = 0; i < r.status.size(); ++i) {
    if (r.status[i] > 0) m.set(static_cast<pixel_index>(i), static_cast<std::uint32_t>(r.status[i]));
    else if (r.status[i] == pixel_status::watershed) m.set(static_cast<pixel_index>(i), 65535);
  }
  return m;
}

}  // namespace ceb
