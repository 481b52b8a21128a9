#pragma once

// Boundary scoring. A scorer maps a signature record to Prob(b) in [0,1]
// (higher = more likely a true boundary). Three kinds are provided:
//
//   model_scorer     a small built-in network (OR-pooled raster -> tanh hidden
//                    layer -> sigmoid) trained with focal loss;
//   oracle_scorer    ground-truth passthrough (1 for true, 0 for false);
//   external_scorer  scores read from a `signature_id,score` CSV, which lets
//                    any external classifier plug in.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/labels.hpp"
#include "ceb/raster_io.hpp"
#include "ceb/signature.hpp"

namespace ceb {

inline constexpr double probability_clamp = 1e-7;

// -log-likelihood down-weighted by (1-p_t)^gamma and class weight alpha.
inline double focal_loss(double p, int y, double gamma, double alpha) {
  p = std::clamp(p, probability_clamp, 1.0 - probability_clamp);
  if (y == 1) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

// d focal_loss / d p (zero inside the clamped tails).
inline double focal_loss_grad(double p, int y, double gamma, double alpha) {
  if (p <= probability_clamp || p >= 1.0 - probability_clamp) return 0.0;
  if (y == 1) {
    const double q = 1.0 - p;
    const double dq = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0) * std::log(p);
    return alpha * (dq - std::pow(q, gamma) / p);
  }
  const double dp = gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p);
  return -(1.0 - alpha) * (dp - std::pow(p, gamma) / (1.0 - p));
}

struct classifier_config {
  int input_side = 32;
  int hidden = 64;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch = 8;
  int epochs = 100;
  double gamma = 2.0;
  double alpha = 0.25;
  std::uint64_t seed = 1;

  void validate() const {
    if (input_side < 1 || hidden < 1 || batch < 1 || epochs < 0)
      throw precondition_error("classifier_config: sizes must be positive");
    if (!(gamma >= 0.0)) throw precondition_error("classifier_config: gamma must be >= 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw precondition_error("classifier_config: alpha must be in (0,1)");
    if (!(learning_rate > 0.0)) throw precondition_error("classifier_config: learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw precondition_error("classifier_config: momentum must be in [0,1)");
  }

  friend bool operator==(const classifier_config&, const classifier_config&) = default;
};

// OR-pools a square raster down to side x side (side must divide the raster).
inline std::vector<double> downsample(const binary_raster& r, int side) {
  if (side < 1 || r.side % side != 0)
    throw precondition_error("downsample: raster side " + std::to_string(r.side) + " is not a multiple of " +
                             std::to_string(side));
  const int block = r.side / side;
  std::vector<double> out(static_cast<std::size_t>(side) * static_cast<std::size_t>(side), 0.0);
  for (int y = 0; y < r.side; ++y)
    for (int x = 0; x < r.side; ++x)
      if (r.at(x, y)) out[static_cast<std::size_t>((y / block) * side + x / block)] = 1.0;
  return out;
}

// Parameter layout: W1 (hidden x inputs, row-major), b1 (hidden), w2 (hidden), b2.
struct network_shape {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  [[nodiscard]] std::size_t parameter_count() const { return hidden * inputs + 2 * hidden + 1; }
};

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

template <typename Param>
double network_forward(const network_shape& s, std::span<const Param> w, std::span<const double> x,
                       std::vector<double>* hidden_out = nullptr) {
  const std::size_t b1 = s.hidden * s.inputs;
  const std::size_t w2 = b1 + s.hidden;
  const std::size_t b2 = w2 + s.hidden;
  double z = static_cast<double>(w[b2]);
  if (hidden_out) hidden_out->resize(s.hidden);
  for (std::size_t h = 0; h < s.hidden; ++h) {
    double a = static_cast<double>(w[b1 + h]);
    const Param* row = w.data() + h * s.inputs;
    for (std::size_t i = 0; i < s.inputs; ++i)
      if (x[i] != 0.0) a += static_cast<double>(row[i]) * x[i];
    const double t = std::tanh(a);
    if (hidden_out) (*hidden_out)[h] = t;
    z += static_cast<double>(w[w2 + h]) * t;
  }
  return sigmoid(z);
}

// Focal loss of one example and its gradient w.r.t. every parameter
// (accumulated into `grad`).
inline double network_loss_and_gradient(const network_shape& s, std::span<const double> w, std::span<const double> x,
                                        int y, double gamma, double alpha, std::span<double> grad) {
  std::vector<double> hid;
  const double p = network_forward<double>(s, w, x, &hid);
  const double loss = focal_loss(p, y, gamma, alpha);
  const double dz = focal_loss_grad(p, y, gamma, alpha) * p * (1.0 - p);
  const std::size_t b1 = s.hidden * s.inputs;
  const std::size_t w2 = b1 + s.hidden;
  const std::size_t b2 = w2 + s.hidden;
  grad[b2] += dz;
  for (std::size_t h = 0; h < s.hidden; ++h) {
    grad[w2 + h] += dz * hid[h];
    const double da = dz * w[w2 + h] * (1.0 - hid[h] * hid[h]);
    grad[b1 + h] += da;
    double* row = grad.data() + h * s.inputs;
    for (std::size_t i = 0; i < s.inputs; ++i)
      if (x[i] != 0.0) row[i] += da * x[i];
  }
  return loss;
}

struct scorer_model {
  classifier_config config;
  std::vector<float> weights;
  std::vector<float> loss_curve;  // mean training loss before training, then after each epoch

  [[nodiscard]] network_shape shape() const {
    return {static_cast<std::size_t>(config.input_side) * static_cast<std::size_t>(config.input_side),
            static_cast<std::size_t>(config.hidden)};
  }

  [[nodiscard]] double predict(const binary_raster& r) const {
    const auto x = downsample(r, config.input_side);
    return network_forward<float>(shape(), weights, x);
  }

  friend bool operator==(const scorer_model&, const scorer_model&) = default;
};

namespace detail {

// Deterministic uniform in [0,1) from the raw 64-bit engine output.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

inline scorer_model train(const std::vector<signature_record>& records, const classifier_config& cfg) {
  cfg.validate();
  std::size_t pos = 0, neg = 0;
  for (const auto& r : records) {
    if (!r.label) throw precondition_error("train: record " + r.id + " has no label");
    (*r.label ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw precondition_error("train: degenerate training set (single class)");

  scorer_model model;
  model.config = cfg;
  const auto s = model.shape();
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  xs.reserve(records.size());
  for (const auto& r : records) {
    xs.push_back(downsample(r.raster, cfg.input_side));
    ys.push_back(*r.label ? 1 : 0);
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> w(s.parameter_count(), 0.0);
  const double a1 = std::sqrt(6.0 / static_cast<double>(s.inputs + s.hidden));
  const double a2 = std::sqrt(6.0 / static_cast<double>(s.hidden + 1));
  for (std::size_t i = 0; i < s.hidden * s.inputs; ++i) w[i] = (2.0 * detail::unit_uniform(rng) - 1.0) * a1;
  for (std::size_t h = 0; h < s.hidden; ++h) w[s.hidden * s.inputs + s.hidden + h] = (2.0 * detail::unit_uniform(rng) - 1.0) * a2;

  auto mean_loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      total += focal_loss(network_forward<double>(s, w, xs[i]), ys[i], cfg.gamma, cfg.alpha);
    return total / static_cast<double>(xs.size());
  };
  model.loss_curve.push_back(static_cast<float>(mean_loss()));

  std::vector<double> velocity(w.size(), 0.0);
  std::vector<double> grad(w.size(), 0.0);
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k)
        network_loss_and_gradient(s, w, xs[order[k]], ys[order[k]], cfg.gamma, cfg.alpha, grad);
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = 0; i < w.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * grad[i] * inv;
        w[i] += velocity[i];
      }
    }
    model.loss_curve.push_back(static_cast<float>(mean_loss()));
  }
  model.weights.assign(w.begin(), w.end());
  return model;
}

// ---------------------------------------------------------------------------
// Model file: "CEBM", u32 version, config block, loss curve, float32 weights.
// All multi-byte fields little-endian.

namespace detail {

class le_writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buf.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<unsigned char> buf;
};

class le_reader {
 public:
  le_reader(const std::vector<unsigned char>& b, std::string ctx) : b_(b), ctx_(std::move(ctx)) {}
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw format_error(ctx_ + ": truncated model file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * k);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  [[nodiscard]] bool at_end() const { return pos_ == b_.size(); }

 private:
  const std::vector<unsigned char>& b_;
  std::string ctx_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_model(const scorer_model& m, const std::filesystem::path& path) {
  detail::le_writer w;
  w.bytes("CEBM", 4);
  w.u32(1);
  const auto& c = m.config;
  w.u32(static_cast<std::uint32_t>(c.input_side));
  w.u32(static_cast<std::uint32_t>(c.hidden));
  w.u32(static_cast<std::uint32_t>(c.batch));
  w.u32(static_cast<std::uint32_t>(c.epochs));
  w.u64(c.seed);
  w.f64(c.learning_rate);
  w.f64(c.momentum);
  w.f64(c.gamma);
  w.f64(c.alpha);
  w.u32(static_cast<std::uint32_t>(m.loss_curve.size()));
  for (float v : m.loss_curve) w.f32(v);
  w.u32(static_cast<std::uint32_t>(m.weights.size()));
  for (float v : m.weights) w.f32(v);
  detail::write_file_bytes(path, w.buf);
}

inline scorer_model load_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::string ctx = path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "CEBM", 4) != 0) throw format_error(ctx + ": not a CEBM model");
  const std::vector<unsigned char> body(bytes.begin() + 4, bytes.end());
  detail::le_reader r(body, ctx);
  if (r.u32() != 1) throw format_error(ctx + ": unsupported model version");
  scorer_model m;
  auto& c = m.config;
  c.input_side = static_cast<int>(r.u32());
  c.hidden = static_cast<int>(r.u32());
  c.batch = static_cast<int>(r.u32());
  c.epochs = static_cast<int>(r.u32());
  c.seed = r.u64();
  c.learning_rate = r.f64();
  c.momentum = r.f64();
  c.gamma = r.f64();
  c.alpha = r.f64();
  const std::uint32_t curve = r.u32();
  r.need(static_cast<std::size_t>(curve) * 4);
  for (std::uint32_t i = 0; i < curve; ++i) m.loss_curve.push_back(r.f32());
  const std::uint32_t n = r.u32();
  if (n != m.shape().parameter_count()) throw format_error(ctx + ": weight count does not match config");
  r.need(static_cast<std::size_t>(n) * 4);
  for (std::uint32_t i = 0; i < n; ++i) m.weights.push_back(r.f32());
  if (!r.at_end()) throw format_error(ctx + ": trailing bytes");
  c.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Scorers.

class boundary_scorer {
 public:
  virtual ~boundary_scorer() = default;
  [[nodiscard]] virtual double score(const signature_record& rec) const = 0;
};

class model_scorer final : public boundary_scorer {
 public:
  explicit model_scorer(scorer_model m) : model_(std::move(m)) {}
  [[nodiscard]] double score(const signature_record& rec) const override { return model_.predict(rec.raster); }
  [[nodiscard]] const scorer_model& model() const { return model_; }

 private:
  scorer_model model_;
};

class constant_scorer final : public boundary_scorer {
 public:
  explicit constant_scorer(double v) : value_(v) {
    if (!(v >= 0.0 && v <= 1.0)) throw range_error("constant_scorer: value outside [0,1]");
  }
  [[nodiscard]] double score(const signature_record&) const override { return value_; }

 private:
  double value_;
};

// Ground-truth labels keyed by (frame, boundary).
class oracle_scorer final : public boundary_scorer {
 public:
  oracle_scorer() = default;
  void add_frame(std::size_t frame, const boundary_labeling& labels) {
    for (const auto& [k, v] : labels) labels_[{frame, k}] = v;
  }
  [[nodiscard]] double score(const signature_record& rec) const override {
    auto it = labels_.find({rec.frame, rec.key});
    if (it == labels_.end()) throw precondition_error("oracle_scorer: no label for " + rec.id);
    return it->second ? 1.0 : 0.0;
  }

 private:
  std::map<std::pair<std::size_t, boundary_key>, bool> labels_;
};

class external_scorer final : public boundary_scorer {
 public:
  explicit external_scorer(std::map<std::string, double> scores) : scores_(std::move(scores)) {}
  [[nodiscard]] double score(const signature_record& rec) const override {
    auto it = scores_.find(rec.id);
    if (it == scores_.end()) throw precondition_error("external scores: missing score for signature id " + rec.id);
    return it->second;
  }

 private:
  std::map<std::string, double> scores_;
};

// `signature_id,score` CSV; an optional header line is skipped.
inline std::map<std::string, double> read_external_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
  std::map<std::string, double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (lineno == 1 && f.size() == 2 && f[0] == "signature_id") continue;
    if (f.size() != 2) throw format_error(path.string() + ":" + std::to_string(lineno) + ": expected 2 fields");
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": bad score '" + f[1] + "'");
    }
    if (!(v >= 0.0 && v <= 1.0)) throw range_error(path.string() + ":" + std::to_string(lineno) + ": score outside [0,1]");
    out[f[0]] = v;
  }
  return out;
}

inline void write_scores(const std::filesystem::path& path, const std::vector<signature_record>& records,
                         const std::vector<double>& scores) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
  out << "signature_id,score\n";
  out.precision(17);
  for (std::size_t i = 0; i < records.size(); ++i) out << records[i].id << ',' << scores.at(i) << '\n';
  if (!out) throw io_error("write failed for '" + path.string() + "'");
}

using boundary_scores = std::map<boundary_key, double>;

inline constexpr double default_boundary_threshold = 0.5;

// true iff score >= threshold.
inline boundary_labeling binarize(const boundary_scores& scores, double threshold = default_boundary_threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw precondition_error("binarize: threshold outside [0,1]");
  boundary_labeling out;
  for (const auto& [k, s] : scores) out[k] = s >= threshold;
  return out;
}

}  // namespace ceb
