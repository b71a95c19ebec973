#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "hgit/image.hpp"

namespace hgit::testing {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("hgit_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline BinaryMask random_mask(int h, int w, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution d(p);
  BinaryMask m(h, w);
  for (auto& v : m.labels()) v = d(rng) ? 1 : 0;
  return m;
}

/// Image whose pixels are exact 8-bit levels.
inline GrayImage random_byte_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 255);
  GrayImage img(h, w);
  for (auto& v : img.pixels()) v = static_cast<float>(d(rng) / 255.0);
  return img;
}

}  // namespace hgit::testing
