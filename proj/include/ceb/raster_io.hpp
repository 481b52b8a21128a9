#pragma once

// Grid data types and their on-disk formats.
//
//   CEBP  "CEBP <width> <height>\n" followed by width*height little-endian
//         IEEE-754 float32 values, row-major, top-left origin.
//   PGM   binary P5. Probability maps and label maps use maxval 65535 with
//         big-endian 16-bit samples; signature rasters use maxval 255 with
//         samples in {0, 255}.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/grid.hpp"

namespace ceb {

class prob_map {
 public:
  prob_map() = default;
  prob_map(int width, int height, std::vector<float> values)
      : shape_{width, height}, values_(std::move(values)) {
    if (width < 1 || height < 1) throw format_error("prob_map: dimensions must be positive");
    if (values_.size() != shape_.size()) throw format_error("prob_map: value count does not match dimensions");
    for (float v : values_) {
      if (!(v >= 0.0f && v <= 1.0f)) throw range_error("prob_map: value outside [0,1]");
    }
  }

  [[nodiscard]] const grid_shape& shape() const { return shape_; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] const std::vector<float>& values() const { return values_; }
  [[nodiscard]] float operator[](pixel_index i) const { return values_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] float at(int x, int y) const { return values_[static_cast<std::size_t>(shape_.index(x, y))]; }

  friend bool operator==(const prob_map&, const prob_map&) = default;

 private:
  grid_shape shape_;
  std::vector<float> values_;
};

// Instance labels; 0 is background.
class label_map {
 public:
  label_map() = default;
  label_map(int width, int height) : label_map(width, height, std::vector<std::uint32_t>(
                                                                  static_cast<std::size_t>(std::max(width, 0)) *
                                                                  static_cast<std::size_t>(std::max(height, 0)))) {}
  label_map(int width, int height, std::vector<std::uint32_t> labels)
      : shape_{width, height}, labels_(std::move(labels)) {
    if (width < 1 || height < 1) throw format_error("label_map: dimensions must be positive");
    if (labels_.size() != shape_.size()) throw format_error("label_map: label count does not match dimensions");
  }

  [[nodiscard]] const grid_shape& shape() const { return shape_; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] const std::vector<std::uint32_t>& labels() const { return labels_; }
  [[nodiscard]] std::uint32_t operator[](pixel_index i) const { return labels_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] std::uint32_t at(int x, int y) const { return labels_[static_cast<std::size_t>(shape_.index(x, y))]; }
  void set(pixel_index i, std::uint32_t id) { labels_[static_cast<std::size_t>(i)] = id; }

  // Sorted set of instance ids present (0 excluded).
  [[nodiscard]] std::vector<std::uint32_t> instance_ids() const {
    std::set<std::uint32_t> ids(labels_.begin(), labels_.end());
    ids.erase(0);
    return {ids.begin(), ids.end()};
  }

  friend bool operator==(const label_map&, const label_map&) = default;

 private:
  grid_shape shape_;
  std::vector<std::uint32_t> labels_;
};

struct binary_raster {
  int side = 0;
  std::vector<std::uint8_t> bits;  // row-major, values in {0,1}

  binary_raster() = default;
  explicit binary_raster(int s) : side(s), bits(static_cast<std::size_t>(s) * static_cast<std::size_t>(s), 0) {}

  [[nodiscard]] std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y * side + x)]; }
  void set(int x, int y) { bits[static_cast<std::size_t>(y * side + x)] = 1; }
  [[nodiscard]] std::size_t popcount() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }

  friend bool operator==(const binary_raster&, const binary_raster&) = default;
};

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed for '" + path.string() + "'");
}

// Cursor over a PNM/CEBP header: whitespace-separated tokens, '#' comments.
class header_reader {
 public:
  header_reader(const std::vector<unsigned char>& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  std::string token() {
    skip_space_and_comments();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) out.push_back(static_cast<char>(bytes_[pos_++]));
    if (out.empty()) fail("truncated header");
    return out;
  }

  long number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }) || t.size() > 9)
      fail("bad header field '" + t + "'");
    return std::stol(t);
  }

  // Consumes exactly one whitespace byte separating header and payload.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing header terminator");
    ++pos_;
  }

  [[nodiscard]] std::size_t position() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const { throw format_error(context_ + ": " + what); }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

struct pgm_image {
  int width = 0;
  int height = 0;
  long maxval = 0;
  std::vector<std::uint16_t> samples;
};

inline pgm_image decode_pgm(const std::vector<unsigned char>& bytes, const std::string& context) {
  header_reader h(bytes, context);
  if (h.token() != "P5") h.fail("not a binary PGM (P5)");
  pgm_image img;
  img.width = static_cast<int>(h.number());
  img.height = static_cast<int>(h.number());
  img.maxval = h.number();
  h.end_of_header();
  if (img.width < 1 || img.height < 1) h.fail("zero dimension");
  if (img.maxval < 1 || img.maxval > 65535) h.fail("maxval out of range");
  const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  const std::size_t bytes_per = img.maxval > 255 ? 2 : 1;
  if (bytes.size() - h.position() < n * bytes_per) h.fail("truncated pixel data");
  img.samples.resize(n);
  const unsigned char* data = bytes.data() + h.position();
  for (std::size_t i = 0; i < n; ++i) {
    img.samples[i] = bytes_per == 2 ? static_cast<std::uint16_t>((data[2 * i] << 8) | data[2 * i + 1]) : data[i];
    if (img.samples[i] > img.maxval) h.fail("sample exceeds maxval");
  }
  return img;
}

inline std::vector<unsigned char> encode_pgm(int width, int height, long maxval,
                                             const std::vector<std::uint16_t>& samples) {
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + samples.size() * 2);
  for (std::uint16_t s : samples) {
    if (maxval > 255) out.push_back(static_cast<unsigned char>(s >> 8));
    out.push_back(static_cast<unsigned char>(s & 0xFF));
  }
  return out;
}

}  // namespace detail

inline prob_map read_probmap(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::string ctx = path.string();
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "CEBP", 4) == 0) {
    detail::header_reader h(bytes, ctx);
    h.token();
    const long w = h.number();
    const long hgt = h.number();
    h.end_of_header();
    if (w < 1 || hgt < 1) h.fail("zero dimension");
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(hgt);
    if (bytes.size() - h.position() != n * 4) h.fail("payload size does not match dimensions");
    std::vector<float> values(n);
    const unsigned char* data = bytes.data() + h.position();
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t u = static_cast<std::uint32_t>(data[4 * i]) | (static_cast<std::uint32_t>(data[4 * i + 1]) << 8) |
                              (static_cast<std::uint32_t>(data[4 * i + 2]) << 16) |
                              (static_cast<std::uint32_t>(data[4 * i + 3]) << 24);
      values[i] = std::bit_cast<float>(u);
      if (!(values[i] >= 0.0f && values[i] <= 1.0f)) throw range_error(ctx + ": value outside [0,1] at index " + std::to_string(i));
    }
    return {static_cast<int>(w), static_cast<int>(hgt), std::move(values)};
  }
  const auto img = detail::decode_pgm(bytes, ctx);
  if (img.maxval != 65535) throw format_error(ctx + ": probability PGM must be 16-bit (maxval 65535)");
  std::vector<float> values(img.samples.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(img.samples[i] / 65535.0);
  return {img.width, img.height, std::move(values)};
}

inline void write_probmap(const prob_map& m, const std::filesystem::path& path) {
  const std::string header = "CEBP " + std::to_string(m.width()) + " " + std::to_string(m.height()) + "\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + m.values().size() * 4);
  for (float v : m.values()) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<unsigned char>((u >> (8 * k)) & 0xFF));
  }
  detail::write_file_bytes(path, bytes);
}

// 16-bit PGM rendering of a probability map (values scaled by 65535, rounded).
inline void write_probmap_pgm(const prob_map& m, const std::filesystem::path& path) {
  std::vector<std::uint16_t> samples(m.values().size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i] = static_cast<std::uint16_t>(std::lround(static_cast<double>(m.values()[i]) * 65535.0));
  detail::write_file_bytes(path, detail::encode_pgm(m.width(), m.height(), 65535, samples));
}

inline label_map read_labelmap(const std::filesystem::path& path) {
  const auto img = detail::decode_pgm(detail::read_file_bytes(path), path.string());
  if (img.maxval != 65535) throw format_error(path.string() + ": label map must be 16-bit PGM (maxval 65535)");
  return {img.width, img.height, std::vector<std::uint32_t>(img.samples.begin(), img.samples.end())};
}

inline void write_labelmap(const label_map& m, const std::filesystem::path& path) {
  std::vector<std::uint16_t> samples(m.labels().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (m.labels()[i] > 65535) throw range_error(path.string() + ": label id exceeds 65535");
    samples[i] = static_cast<std::uint16_t>(m.labels()[i]);
  }
  detail::write_file_bytes(path, detail::encode_pgm(m.width(), m.height(), 65535, samples));
}

inline void write_binary_raster(const binary_raster& r, const std::filesystem::path& path) {
  std::vector<std::uint16_t> samples(r.bits.size());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = r.bits[i] ? 255 : 0;
  detail::write_file_bytes(path, detail::encode_pgm(r.side, r.side, 255, samples));
}

inline binary_raster read_binary_raster(const std::filesystem::path& path) {
  const auto img = detail::decode_pgm(detail::read_file_bytes(path), path.string());
  if (img.width != img.height) throw format_error(path.string() + ": signature raster must be square");
  if (img.maxval != 255) throw format_error(path.string() + ": signature raster must be 8-bit");
  binary_raster r(img.width);
  for (std::size_t i = 0; i < r.bits.size(); ++i) {
    if (img.samples[i] != 0 && img.samples[i] != 255) throw format_error(path.string() + ": non-binary sample");
    r.bits[i] = img.samples[i] ? 1 : 0;
  }
  return r;
}

}  // namespace ceb
