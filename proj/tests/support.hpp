#pragma once

// Small helpers shared by the test programs.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "ceb/raster_io.hpp"

// Scratch directory under the system temp dir, removed on destruction.
class test_dir {
 public:
  explicit test_dir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("ceb_test_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~test_dir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  test_dir(const test_dir&) = delete;
  test_dir& operator=(const test_dir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

// Row-major map from a list of rows.
inline ceb::prob_map map_of(const std::vector<std::vector<float>>& rows) {
  std::vector<float> v;
  for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
  return {static_cast<int>(rows.front().size()), static_cast<int>(rows.size()), v};
}

inline ceb::label_map labels_of(const std::vector<std::vector<std::uint32_t>>& rows) {
  std::vector<std::uint32_t> v;
  for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
  return {static_cast<int>(rows.front().size()), static_cast<int>(rows.size()), v};
}

// Uniform double in [0,1) from a 64-bit engine, independent of the library's distributions.
inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
