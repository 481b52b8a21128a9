#pragma once

// Boundary signatures: for every region-region boundary, the two endpoints
// (geodesically farthest pixel pair) are located, each endpoint gets a fork
// made of the boundary itself and the two nearest other boundaries from the
// codebook, and pixels sampled along the six branches are rasterised onto a
// fixed-size binary canvas.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/grid.hpp"
#include "ceb/labels.hpp"
#include "ceb/raster_io.hpp"
#include "ceb/watershed.hpp"

namespace ceb {

// ---------------------------------------------------------------------------
// Border following (topological structural analysis of binary images).

struct traced_contour {
  bool hole = false;
  pixel_list pixels;  // in tracing order; a pixel may repeat on 1-px wide parts
};

namespace detail {

// Clockwise on screen (y down): E, SE, S, SW, W, NW, N, NE.
inline constexpr std::array<offset, 8> trace_dirs{{
    {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

inline int trace_dir_of(int dx, int dy) {
  for (int d = 0; d < 8; ++d)
    if (trace_dirs[static_cast<std::size_t>(d)].dx == dx && trace_dirs[static_cast<std::size_t>(d)].dy == dy) return d;
  return -1;
}

}  // namespace detail

// Traces every outer and hole border of the 8-connected foreground of `mask`.
// The image is treated as surrounded by background.
inline std::vector<traced_contour> follow_borders(const grid_shape& g, std::span<const std::uint8_t> mask) {
  const int pw = g.width + 2;
  const int ph = g.height + 2;
  std::vector<int> f(static_cast<std::size_t>(pw) * static_cast<std::size_t>(ph), 0);
  auto at = [&](int x, int y) -> int& { return f[static_cast<std::size_t>(y * pw + x)]; };
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) at(x + 1, y + 1) = mask[static_cast<std::size_t>(g.index(x, y))] ? 1 : 0;

  std::vector<traced_contour> out;
  int nbd = 1;
  for (int y = 1; y < ph - 1; ++y) {
    for (int x = 1; x < pw - 1; ++x) {
      const int v = at(x, y);
      if (v == 0) continue;
      int x2 = 0;
      bool hole = false;
      if (v == 1 && at(x - 1, y) == 0) {
        x2 = x - 1;
      } else if (v >= 1 && at(x + 1, y) == 0) {
        x2 = x + 1;
        hole = true;
      } else {
        continue;
      }
      ++nbd;
      traced_contour c;
      c.hole = hole;
      auto push = [&](int px, int py) { c.pixels.push_back(g.index(px - 1, py - 1)); };

      // Clockwise search around (x, y) starting at (x2, y).
      const int d2 = detail::trace_dir_of(x2 - x, 0);
      int d1 = -1;
      for (int k = 0; k < 8; ++k) {
        const int d = (d2 + k) % 8;
        const auto& o = detail::trace_dirs[static_cast<std::size_t>(d)];
        if (at(x + o.dx, y + o.dy) != 0) {
          d1 = d;
          break;
        }
      }
      if (d1 < 0) {
        at(x, y) = -nbd;
        push(x, y);
        out.push_back(std::move(c));
        continue;
      }
      const int x1 = x + detail::trace_dirs[static_cast<std::size_t>(d1)].dx;
      const int y1 = y + detail::trace_dirs[static_cast<std::size_t>(d1)].dy;
      int px2 = x1, py2 = y1;
      int x3 = x, y3 = y;
      while (true) {
        push(x3, y3);
        const int dprev = detail::trace_dir_of(px2 - x3, py2 - y3);
        bool east_zero_examined = false;
        int x4 = 0, y4 = 0;
        for (int k = 1; k <= 8; ++k) {
          const int d = ((dprev - k) % 8 + 8) % 8;
          const auto& o = detail::trace_dirs[static_cast<std::size_t>(d)];
          if (at(x3 + o.dx, y3 + o.dy) != 0) {
            x4 = x3 + o.dx;
            y4 = y3 + o.dy;
            break;
          }
          if (d == 0) east_zero_examined = true;
        }
        if (east_zero_examined) at(x3, y3) = -nbd;
        else if (at(x3, y3) == 1) at(x3, y3) = nbd;
        if (x4 == x && y4 == y && x3 == x1 && y3 == y1) break;
        px2 = x3;
        py2 = y3;
        x3 = x4;
        y3 = y4;
      }
      out.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundary codebook.

struct codebook_key {
  enum class kind : std::uint8_t { region_region = 0, foreground_background = 1 };
  kind type = kind::region_region;
  std::uint32_t a = 0;  // region lo, or background component
  std::uint32_t b = 0;  // region hi, or region

  static codebook_key region_pair(const boundary_key& k) { return {kind::region_region, k.lo, k.hi}; }
  static codebook_key fg_bg(std::uint32_t background, region_id region) {
    return {kind::foreground_background, background, region};
  }
  friend auto operator<=>(const codebook_key&, const codebook_key&) = default;
  friend bool operator==(const codebook_key&, const codebook_key&) = default;
};

struct codebook_entry {
  codebook_key key;
  pixel_list pixels;  // non-empty; fg-bg segments keep tracing order
};

struct boundary_codebook {
  grid_shape shape;
  std::vector<codebook_entry> entries;  // sorted by key

  [[nodiscard]] const codebook_entry* find(const codebook_key& k) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), k,
                               [](const codebook_entry& e, const codebook_key& key) { return e.key < key; });
    return it != entries.end() && it->key == k ? &*it : nullptr;
  }
  [[nodiscard]] std::size_t count(codebook_key::kind t) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const codebook_entry& e) { return e.key.type == t; }));
  }
};

// Background components (4-connected, image surround included). The component
// touching the image border is 0; the others are numbered 1.. in scan order.
inline std::vector<std::int32_t> label_background(const grid_shape& g, std::span<const std::uint8_t> foreground) {
  const grid_shape padded{g.width + 2, g.height + 2};
  std::vector<std::uint8_t> bg(padded.size(), 1);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      bg[static_cast<std::size_t>(padded.index(x + 1, y + 1))] = foreground[static_cast<std::size_t>(g.index(x, y))] ? 0 : 1;
  const auto cc = label_components(padded, bg, connectivity::four);
  std::vector<std::int32_t> out(g.size(), -1);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const std::int32_t l = cc.labels[static_cast<std::size_t>(padded.index(x + 1, y + 1))];
      if (l > 0) out[static_cast<std::size_t>(g.index(x, y))] = l - 1;  // frame is label 1
    }
  return out;
}

inline boundary_codebook build_codebook(const flood_result& r, std::span<const std::uint8_t> foreground) {
  const grid_shape& g = r.shape;
  const auto bg = label_background(g, foreground);
  std::map<codebook_key, pixel_list> segs;
  std::map<codebook_key, std::vector<char>> seen;
  for (const auto& contour : follow_borders(g, foreground)) {
    for (pixel_index px : contour.pixels) {
      const std::int32_t region = r.status[static_cast<std::size_t>(px)];
      if (region <= 0) continue;  // watershed or unreached pixels belong to no segment
      const int x = g.x_of(px);
      const int y = g.y_of(px);
      std::int32_t comp = -1;
      for (std::size_t k = 0; k < 8 && comp < 0; ++k) {
        const int nx = x + neighbor_offsets[k].dx;
        const int ny = y + neighbor_offsets[k].dy;
        if (!g.contains(nx, ny)) comp = 0;
        else if (!foreground[static_cast<std::size_t>(g.index(nx, ny))]) comp = bg[static_cast<std::size_t>(g.index(nx, ny))];
      }
      if (comp < 0) comp = 0;
      const auto key = codebook_key::fg_bg(static_cast<std::uint32_t>(comp), static_cast<region_id>(region));
      auto& mark = seen[key];
      if (mark.empty()) mark.assign(g.size(), 0);
      if (mark[static_cast<std::size_t>(px)]) continue;
      mark[static_cast<std::size_t>(px)] = 1;
      segs[key].push_back(px);
    }
  }
  boundary_codebook cb;
  cb.shape = g;
  for (const auto& [key, px] : r.boundaries)
    if (!px.empty()) segs.emplace(codebook_key::region_pair(key), px);
  for (auto& [key, px] : segs) cb.entries.push_back({key, std::move(px)});
  return cb;
}

// ---------------------------------------------------------------------------
// Geodesic helpers over 8-connected pixel sets (axis step 1, diagonal sqrt 2).

// Path length a + b*sqrt(2) kept as integers so comparisons are exact.
struct geodesic_length {
  std::int64_t axis = 0;
  std::int64_t diagonal = 0;
  [[nodiscard]] double value() const { return static_cast<double>(axis) + static_cast<double>(diagonal) * std::sqrt(2.0); }
};

namespace detail {

class pixel_set_graph {
 public:
  pixel_set_graph(const grid_shape& g, const pixel_list& pixels) : g_(g), pixels_(pixels) {
    std::sort(pixels_.begin(), pixels_.end());
    pixels_.erase(std::unique(pixels_.begin(), pixels_.end()), pixels_.end());
    for (std::size_t i = 0; i < pixels_.size(); ++i) local_[pixels_[i]] = i;
  }

  [[nodiscard]] std::size_t size() const { return pixels_.size(); }
  [[nodiscard]] pixel_index pixel(std::size_t i) const { return pixels_[i]; }
  [[nodiscard]] std::optional<std::size_t> local(pixel_index p) const {
    auto it = local_.find(p);
    if (it == local_.end()) return std::nullopt;
    return it->second;
  }

  template <typename Fn>
  void for_each_adjacent(std::size_t i, Fn&& fn) const {
    const int x = g_.x_of(pixels_[i]);
    const int y = g_.y_of(pixels_[i]);
    for (std::size_t k = 0; k < 8; ++k) {
      const int nx = x + neighbor_offsets[k].dx;
      const int ny = y + neighbor_offsets[k].dy;
      if (!g_.contains(nx, ny)) continue;
      if (auto j = local(g_.index(nx, ny))) fn(*j, k >= 4);
    }
  }

  // Single-source shortest paths; unreachable nodes keep axis = -1.
  // `order` receives nodes in settle order: by (distance, pixel index).
  std::vector<geodesic_length> distances_from(std::size_t src, std::vector<std::size_t>* order = nullptr) const {
    std::vector<geodesic_length> dist(size(), {-1, 0});
    std::vector<char> done(size(), 0);
    using item = std::tuple<double, pixel_index, std::size_t>;
    std::priority_queue<item, std::vector<item>, std::greater<>> pq;
    dist[src] = {0, 0};
    pq.emplace(0.0, pixels_[src], src);
    while (!pq.empty()) {
      const auto [d, px, u] = pq.top();
      pq.pop();
      if (done[u]) continue;
      done[u] = 1;
      if (order) order->push_back(u);
      for_each_adjacent(u, [&](std::size_t v, bool diag) {
        if (done[v]) return;
        geodesic_length cand = dist[u];
        (diag ? cand.diagonal : cand.axis) += 1;
        if (dist[v].axis < 0 || cand.value() < dist[v].value()) {
          dist[v] = cand;
          pq.emplace(cand.value(), pixels_[v], v);
        }
      });
    }
    return dist;
  }

  // Nodes of the largest 8-connected piece (ties: the piece holding the
  // smallest pixel), plus the number of pieces.
  std::pair<std::vector<std::size_t>, std::size_t> largest_piece() const {
    std::vector<int> comp(size(), -1);
    std::vector<std::vector<std::size_t>> pieces;
    for (std::size_t s = 0; s < size(); ++s) {
      if (comp[s] >= 0) continue;
      const int id = static_cast<int>(pieces.size());
      pieces.emplace_back();
      std::vector<std::size_t> stack{s};
      comp[s] = id;
      while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        pieces.back().push_back(u);
        for_each_adjacent(u, [&](std::size_t v, bool) {
          if (comp[v] < 0) {
            comp[v] = id;
            stack.push_back(v);
          }
        });
      }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < pieces.size(); ++i)
      if (pieces[i].size() > pieces[best].size()) best = i;
    auto out = pieces.empty() ? std::vector<std::size_t>{} : pieces[best];
    std::sort(out.begin(), out.end());
    return {out, pieces.size()};
  }

 private:
  grid_shape g_;
  pixel_list pixels_;
  std::unordered_map<pixel_index, std::size_t> local_;
};

}  // namespace detail

struct endpoints {
  pixel_index first = 0;   // smaller pixel index of the pair
  pixel_index second = 0;
  bool disconnected = false;  // boundary had several pieces; the largest was used
};

// The pixel pair with the largest shortest-path distance inside the boundary.
// Ties go to the lexicographically smallest (first, second) by pixel index.
inline endpoints find_endpoints(const grid_shape& g, const pixel_list& boundary) {
  if (boundary.empty()) throw precondition_error("find_endpoints: empty boundary");
  const detail::pixel_set_graph graph(g, boundary);
  const auto [piece, pieces] = graph.largest_piece();
  endpoints best{graph.pixel(piece.front()), graph.pixel(piece.front()), pieces > 1};
  double best_len = 0.0;
  for (std::size_t u : piece) {
    const auto dist = graph.distances_from(u);
    for (std::size_t v : piece) {
      if (v <= u) continue;  // local order follows pixel index order
      const double len = dist[v].value();
      if (len > best_len) {
        best_len = len;
        best.first = graph.pixel(u);
        best.second = graph.pixel(v);
      }
    }
  }
  return best;
}

struct fork_pair {
  const codebook_entry* first = nullptr;
  const codebook_entry* second = nullptr;
  bool degenerate = false;
};

inline std::int64_t squared_distance(const grid_shape& g, pixel_index a, pixel_index b) {
  const std::int64_t dx = g.x_of(a) - g.x_of(b);
  const std::int64_t dy = g.y_of(a) - g.y_of(b);
  return dx * dx + dy * dy;
}

// The two codebook entries other than `self` closest (Euclidean, to their
// nearest pixel) to `endpoint`; ties by key. Missing slots are padded with
// `self` and flagged.
inline fork_pair nearest_boundaries(pixel_index endpoint, const boundary_codebook& cb, const codebook_entry& self) {
  std::vector<std::pair<std::int64_t, const codebook_entry*>> ranked;
  for (const auto& e : cb.entries) {
    if (e.key == self.key) continue;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (pixel_index px : e.pixels) best = std::min(best, squared_distance(cb.shape, endpoint, px));
    ranked.emplace_back(best, &e);
  }
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(2, ranked.size())),
                    ranked.end(), [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return a.second->key < b.second->key;
                    });
  fork_pair out;
  out.first = ranked.size() > 0 ? ranked[0].second : &self;
  out.second = ranked.size() > 1 ? ranked[1].second : &self;
  out.degenerate = ranked.size() < 2;
  return out;
}

struct signature_config {
  int canvas = 64;
  std::size_t branch_length = 20;
};

struct signature_record {
  std::string id;
  std::size_t frame = 0;
  boundary_key key;
  binary_raster raster;
  std::optional<bool> label;
  bool degenerate_fork = false;
  bool disconnected = false;
};

inline std::string signature_id(std::size_t frame, const boundary_key& k) {
  return "f" + std::to_string(frame) + "_" + std::to_string(k.lo) + "_" + std::to_string(k.hi);
}

// Up to `count` pixels of `pixels` nearest (geodesically, inside the set) to the
// set's pixel closest to `from`.
inline pixel_list walk_branch(const grid_shape& g, const pixel_list& pixels, pixel_index from, std::size_t count) {
  const detail::pixel_set_graph graph(g, pixels);
  std::size_t start = 0;
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto d = squared_distance(g, from, graph.pixel(i));
    if (d < best) {
      best = d;
      start = i;
    }
  }
  std::vector<std::size_t> order;
  graph.distances_from(start, &order);
  pixel_list out;
  for (std::size_t i = 0; i < order.size() && out.size() < count; ++i) out.push_back(graph.pixel(order[i]));
  return out;
}

// Centres the point set's bounding box on the canvas; sets larger than the
// canvas are first scaled down uniformly with nearest-neighbour rounding.
inline binary_raster rasterize_points(const grid_shape& g, const pixel_list& points, int canvas) {
  binary_raster r(canvas);
  if (points.empty()) return r;
  int minx = std::numeric_limits<int>::max(), miny = minx, maxx = std::numeric_limits<int>::min(), maxy = maxx;
  for (pixel_index p : points) {
    minx = std::min(minx, g.x_of(p));
    maxx = std::max(maxx, g.x_of(p));
    miny = std::min(miny, g.y_of(p));
    maxy = std::max(maxy, g.y_of(p));
  }
  const int bw = maxx - minx + 1;
  const int bh = maxy - miny + 1;
  const int extent = std::max(bw, bh);
  double scale = 1.0;
  int sw = bw, sh = bh;
  if (extent > canvas) {
    scale = static_cast<double>(canvas - 1) / static_cast<double>(extent - 1);
    sw = static_cast<int>(std::lround((bw - 1) * scale)) + 1;
    sh = static_cast<int>(std::lround((bh - 1) * scale)) + 1;
  }
  const int ox = (canvas - sw) / 2;
  const int oy = (canvas - sh) / 2;
  for (pixel_index p : points) {
    const int u = static_cast<int>(std::lround((g.x_of(p) - minx) * scale)) + ox;
    const int v = static_cast<int>(std::lround((g.y_of(p) - miny) * scale)) + oy;
    r.set(u, v);
  }
  return r;
}

inline signature_record extract_signature(const boundary_key& key, const boundary_codebook& cb,
                                          const signature_config& cfg, std::size_t frame = 0) {
  const codebook_entry* self = cb.find(codebook_key::region_pair(key));
  if (!self) throw precondition_error("extract_signature: boundary " + to_string(key) + " not in codebook");
  const auto ends = find_endpoints(cb.shape, self->pixels);
  signature_record rec;
  rec.id = signature_id(frame, key);
  rec.frame = frame;
  rec.key = key;
  rec.disconnected = ends.disconnected;
  pixel_list points;
  for (pixel_index n : {ends.first, ends.second}) {
    const auto fork = nearest_boundaries(n, cb, *self);
    rec.degenerate_fork = rec.degenerate_fork || fork.degenerate;
    for (const codebook_entry* branch : {self, fork.first, fork.second}) {
      const auto px = walk_branch(cb.shape, branch->pixels, n, cfg.branch_length);
      points.insert(points.end(), px.begin(), px.end());
    }
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  rec.raster = rasterize_points(cb.shape, points, cfg.canvas);
  return rec;
}

// One record per region-region boundary, in key order.
inline std::vector<signature_record> extract_signatures(const flood_result& r, const boundary_codebook& cb,
                                                        const signature_config& cfg, std::size_t frame = 0) {
  std::vector<signature_record> out;
  out.reserve(r.boundaries.size());
  for (const auto& [key, px] : r.boundaries) out.push_back(extract_signature(key, cb, cfg, frame));
  return out;
}

inline void attach_labels(std::vector<signature_record>& records, const boundary_labeling& labels) {
  for (auto& rec : records) {
    auto it = labels.find(rec.key);
    if (it != labels.end()) rec.label = it->second;
  }
}

// ---------------------------------------------------------------------------
// Signature export: one 8-bit PGM per record plus a manifest CSV
// `signature_id,frame,region_a,region_b,label,path` (paths relative to the
// manifest; label empty when unknown).

inline void write_signature_set(const std::vector<signature_record>& records, const std::filesystem::path& dir,
                                const std::string& manifest_name = "manifest.csv") {
  std::error_code ec;
  std::filesystem::create_directories(dir / "signatures", ec);
  if (ec) throw io_error("cannot create '" + (dir / "signatures").string() + "': " + ec.message());
  std::ofstream m(dir / manifest_name, std::ios::trunc);
  if (!m) throw io_error("cannot open '" + (dir / manifest_name).string() + "' for writing");
  m << "signature_id,frame,region_a,region_b,label,path\n";
  for (const auto& rec : records) {
    const std::string rel = "signatures/" + rec.id + ".pgm";
    write_binary_raster(rec.raster, dir / rel);
    m << rec.id << ',' << rec.frame << ',' << rec.key.lo << ',' << rec.key.hi << ','
      << (rec.label ? (*rec.label ? "1" : "0") : "") << ',' << rel << '\n';
  }
  if (!m) throw io_error("write failed for '" + (dir / manifest_name).string() + "'");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<signature_record> read_signature_set(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw io_error("cannot open '" + manifest.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"signature_id", "frame", "region_a",
                                                                                  "region_b", "label", "path"})
    throw format_error(manifest.string() + ": unexpected manifest header");
  std::vector<signature_record> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw format_error(manifest.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    signature_record rec;
    try {
      rec.id = f[0];
      rec.frame = std::stoul(f[1]);
      rec.key = boundary_key(static_cast<region_id>(std::stoul(f[2])), static_cast<region_id>(std::stoul(f[3])));
    } catch (const std::exception&) {
      throw format_error(manifest.string() + ":" + std::to_string(lineno) + ": bad numeric field");
    }
    if (f[4] == "1") rec.label = true;
    else if (f[4] == "0") rec.label = false;
    else if (!f[4].empty()) throw format_error(manifest.string() + ":" + std::to_string(lineno) + ": bad label");
    rec.raster = read_binary_raster(manifest.parent_path() / f[5]);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace ceb
