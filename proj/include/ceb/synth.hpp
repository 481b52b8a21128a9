#pragma once

// Synthetic probability maps with known instances: dome-shaped disks on a
// dark background, blurred and noised. Some disks are placed touching an
// earlier one so clusters (and hence cell-cell boundaries) appear.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/raster_io.hpp"

namespace ceb {

struct synth_spec {
  int width = 128;
  int height = 128;
  std::size_t cells = 20;
  double radius_min = 7.0;
  double radius_max = 11.0;
  double blur_sigma = 1.0;
  double noise = 0.02;  // standard deviation of the additive Gaussian noise
  std::uint64_t seed = 1;
  std::size_t frames = 1;
  double drift = 0.0;  // pixels per frame
  double cluster_fraction = 0.4;
  double peak = 0.95;
  double rim = 0.8;
  double background = 0.05;
  std::size_t max_attempts = 20000;

  void validate() const {
    if (width < 1 || height < 1) throw precondition_error("synth_spec: size must be positive");
    if (!(radius_min >= 1.0 && radius_min <= radius_max))
      throw precondition_error("synth_spec: need 1 <= radius_min <= radius_max");
    if (!(blur_sigma >= 0.0) || !(noise >= 0.0) || !(drift >= 0.0))
      throw precondition_error("synth_spec: blur, noise and drift must be >= 0");
    if (!(cluster_fraction >= 0.0 && cluster_fraction <= 1.0))
      throw precondition_error("synth_spec: cluster_fraction outside [0,1]");
    for (double v : {peak, rim, background})
      if (!(v >= 0.0 && v <= 1.0)) throw precondition_error("synth_spec: intensity outside [0,1]");
    if (frames < 1) throw precondition_error("synth_spec: frames must be >= 1");
  }
};

struct synth_cell {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

struct synth_frame {
  prob_map probabilities;
  label_map truth;  // cell k has id k + 1 in every frame
  std::vector<synth_cell> cells;
};

namespace detail {

// Uniform in [0,1) straight from the engine bits, so results do not depend on
// the standard library's distribution implementations.
class synth_rng {
 public:
  explicit synth_rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

inline bool fits(const synth_spec& s, const synth_cell& c) {
  return c.cx - c.radius >= 1.0 && c.cy - c.radius >= 1.0 && c.cx + c.radius <= s.width - 2.0 &&
         c.cy + c.radius <= s.height - 2.0;
}

// Disks (closed, pixel-centre test) stay at least one pixel apart.
inline bool clear_of(const synth_cell& c, const std::vector<synth_cell>& others, std::size_t skip) {
  for (std::size_t k = 0; k < others.size(); ++k) {
    if (k == skip) continue;
    const double d = std::hypot(c.cx - others[k].cx, c.cy - others[k].cy);
    if (d < c.radius + others[k].radius + 1.0) return false;
  }
  return true;
}

inline std::vector<synth_cell> place_cells(const synth_spec& s, synth_rng& rng) {
  std::vector<synth_cell> cells;
  for (std::size_t k = 0; k < s.cells; ++k) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < s.max_attempts && !placed; ++attempt) {
      synth_cell c;
      c.radius = rng.uniform(s.radius_min, s.radius_max);
      const bool touching = !cells.empty() && rng.uniform() < s.cluster_fraction;
      if (touching) {
        const auto& host = cells[static_cast<std::size_t>(rng.uniform() * static_cast<double>(cells.size()))];
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double d = host.radius + c.radius + rng.uniform(1.0, 1.5);
        c.cx = host.cx + d * std::cos(angle);
        c.cy = host.cy + d * std::sin(angle);
      } else {
        c.cx = rng.uniform(c.radius + 1.0, s.width - 2.0 - c.radius);
        c.cy = rng.uniform(c.radius + 1.0, s.height - 2.0 - c.radius);
      }
      if (fits(s, c) && clear_of(c, cells, cells.size())) {
        cells.push_back(c);
        placed = true;
      }
    }
    if (!placed)
      throw precondition_error("synth: could not place cell " + std::to_string(k + 1) + " of " +
                               std::to_string(s.cells) + " after " + std::to_string(s.max_attempts) + " attempts");
  }
  return cells;
}

inline std::vector<double> gaussian_blur(const std::vector<double>& in, int w, int h, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= total;
  auto at = [](const std::vector<double>& v, int w_, int x, int y) { return v[static_cast<std::size_t>(y * w_ + x)]; };
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * at(in, w, std::clamp(x + i, 0, w - 1), y);
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * at(tmp, w, x, std::clamp(y + i, 0, h - 1));
      out[static_cast<std::size_t>(y * w + x)] = acc;
    }
  return out;
}

inline synth_frame render_cells(const synth_spec& s, const std::vector<synth_cell>& cells) {
  const std::size_t n = static_cast<std::size_t>(s.width) * static_cast<std::size_t>(s.height);
  std::vector<double> img(n, s.background);
  std::vector<std::uint32_t> truth(n, 0);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& c = cells[k];
    const int x0 = std::max(0, static_cast<int>(std::floor(c.cx - c.radius)));
    const int x1 = std::min(s.width - 1, static_cast<int>(std::ceil(c.cx + c.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.cy - c.radius)));
    const int y1 = std::min(s.height - 1, static_cast<int>(std::ceil(c.cy + c.radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - c.cx) * (x - c.cx) + (y - c.cy) * (y - c.cy);
        if (d2 > c.radius * c.radius) continue;
        const auto i = static_cast<std::size_t>(y * s.width + x);
        truth[i] = static_cast<std::uint32_t>(k + 1);
        img[i] = s.rim + (s.peak - s.rim) * (1.0 - d2 / (c.radius * c.radius));
      }
  }
  img = gaussian_blur(img, s.width, s.height, s.blur_sigma);
  // The noise field depends only on the seed, so a still scene renders identically in every frame.
  synth_rng noise(s.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = img[i] + s.noise * noise.gaussian();
    values[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  synth_frame f{prob_map(s.width, s.height, std::move(values)), label_map(s.width, s.height, std::move(truth)), cells};
  return f;
}

}  // namespace detail

inline synth_frame synth_image(const synth_spec& s) {
  s.validate();
  detail::synth_rng rng(s.seed);
  return detail::render_cells(s, detail::place_cells(s, rng));
}

// Each cell drifts along its own random heading; a step that would leave the
// image or collide with another cell is skipped for that frame.
inline std::vector<synth_frame> synth_video(const synth_spec& s) {
  s.validate();
  detail::synth_rng rng(s.seed);
  auto cells = detail::place_cells(s, rng);
  detail::synth_rng headings(s.seed + 0x632be59bd9b4e019ULL);
  std::vector<double> angle(cells.size());
  for (double& a : angle) a = headings.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<synth_frame> out;
  out.push_back(detail::render_cells(s, cells));
  for (std::size_t f = 1; f < s.frames; ++f) {
    for (std::size_t k = 0; k < cells.size() && s.drift > 0.0; ++k) {
      synth_cell moved = cells[k];
      moved.cx += s.drift * std::cos(angle[k]);
      moved.cy += s.drift * std::sin(angle[k]);
      if (detail::fits(s, moved) && detail::clear_of(moved, cells, k)) cells[k] = moved;
    }
    out.push_back(detail::render_cells(s, cells));
  }
  return out;
}

}  // namespace ceb
