#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ceb/error.hpp"

namespace ceb {

using pixel_index = std::int32_t;
using pixel_list = std::vector<pixel_index>;

enum class connectivity : int { four = 4, eight = 8 };

struct offset {
  int dx;
  int dy;
};

// Fixed neighbour order E, W, S, N, SE, SW, NE, NW (y grows downwards).
// The first four entries form the 4-neighbourhood.
inline constexpr std::array<offset, 8> neighbor_offsets{{
    {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}}};

inline constexpr std::size_t neighbor_count(connectivity c) {
  return c == connectivity::four ? 4 : 8;
}

struct grid_shape {
  int width = 0;
  int height = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  [[nodiscard]] bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  [[nodiscard]] pixel_index index(int x, int y) const { return y * width + x; }
  [[nodiscard]] int x_of(pixel_index i) const { return i % width; }
  [[nodiscard]] int y_of(pixel_index i) const { return i / width; }

  friend bool operator==(const grid_shape&, const grid_shape&) = default;
};

// Calls fn(neighbor_index) for each in-bounds neighbour of `p`, in the fixed order.
template <typename Fn>
void for_each_neighbor(const grid_shape& g, pixel_index p, connectivity c, Fn&& fn) {
  const int x = g.x_of(p);
  const int y = g.y_of(p);
  const std::size_t n = neighbor_count(c);
  for (std::size_t k = 0; k < n; ++k) {
    const int nx = x + neighbor_offsets[k].dx;
    const int ny = y + neighbor_offsets[k].dy;
    if (g.contains(nx, ny)) fn(g.index(nx, ny));
  }
}

// Union-find with path halving and union by size.
class disjoint_set {
 public:
  explicit disjoint_set(std::size_t n = 0) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

  [[nodiscard]] std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

// Connected-component labelling of a binary mask. Labels are 1..n in order of
// each component's first pixel in row-major scan; background stays 0.
struct component_labels {
  std::vector<std::int32_t> labels;
  std::int32_t count = 0;
};

inline component_labels label_components(const grid_shape& g, std::span<const std::uint8_t> mask,
                                         connectivity c) {
  if (mask.size() != g.size()) throw precondition_error("label_components: mask size mismatch");
  component_labels out;
  out.labels.assign(g.size(), 0);
  std::vector<pixel_index> stack;
  for (pixel_index start = 0; start < static_cast<pixel_index>(g.size()); ++start) {
    if (!mask[start] || out.labels[start] != 0) continue;
    const std::int32_t id = ++out.count;
    out.labels[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const pixel_index p = stack.back();
      stack.pop_back();
      for_each_neighbor(g, p, c, [&](pixel_index q) {
        if (mask[q] && out.labels[q] == 0) {
          out.labels[q] = id;
          stack.push_back(q);
        }
      });
    }
  }
  return out;
}

}  // namespace ceb
