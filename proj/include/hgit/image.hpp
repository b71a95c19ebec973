#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hgit {

inline constexpr int kMinImageSide = 8;
inline constexpr int kHistogramBins = 256;

/// Grayscale image with intensities normalized to [0,1], row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int height, int width, float fill = 0.0f);
  GrayImage(int height, int width, std::vector<float> pixels);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  float operator()(int y, int x) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  float& operator()(int y, int x) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const float> pixels() const noexcept { return pixels_; }
  std::span<float> pixels() noexcept { return pixels_; }

  double mean() const;
  bool same_shape(const GrayImage& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Clamp every pixel into [0,1]; NaN becomes 0.
  void clip();

  /// Throws ArgumentError if dimensions or values break the image invariants.
  void validate() const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// Per-pixel metal-line labels, 1 = foreground.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0);
  BinaryMask(int height, int width, std::vector<std::uint8_t> labels);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::uint8_t operator()(int y, int x) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& operator()(int y, int x) { return labels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const std::uint8_t> labels() const noexcept { return labels_; }
  std::span<std::uint8_t> labels() noexcept { return labels_; }

  std::size_t foreground_count() const;
  double foreground_fraction() const;
  BinaryMask complement() const;

  bool matches(const GrayImage& img) const noexcept {
    return height_ == img.height() && width_ == img.width();
  }
  bool same_shape(const BinaryMask& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool operator==(const BinaryMask&) const = default;

  void validate() const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// 256-bin normalized intensity distribution. Bin b covers [b/256, (b+1)/256),
/// the last bin is closed above.
class Histogram {
 public:
  using Bins = std::array<double, kHistogramBins>;

  Histogram();
  /// Takes already-normalized bins; throws ArgumentError otherwise.
  Histogram(const Bins& bins, std::int64_t pixel_count);

  const Bins& bins() const noexcept { return bins_; }
  double operator[](int b) const { return bins_[static_cast<std::size_t>(b)]; }
  std::int64_t pixel_count() const noexcept { return pixel_count_; }

  /// CDF(b) = sum of bins[0..b].
  Bins cdf() const;

  bool is_normalized(double tol = 1e-9) const;

  static int bin_of(float intensity);
  static Histogram delta(int bin, std::int64_t pixel_count = 1);

 private:
  Bins bins_{};
  std::int64_t pixel_count_ = 0;
};

Histogram compute_histogram(const GrayImage& img);

/// Per-bin arithmetic mean; pixel_count is the sum of the inputs' counts.
Histogram mean_histogram(std::span<const Histogram> hists);

enum class SplitRole { SourceTrain, SourceTest, TargetTrain, TargetTest };

std::string_view to_string(SplitRole role);
SplitRole split_role_from_string(std::string_view s);
inline bool is_test_role(SplitRole r) { return r == SplitRole::SourceTest || r == SplitRole::TargetTest; }

struct DatasetSplit {
  SplitRole role = SplitRole::SourceTrain;
  std::vector<std::string> ids;
  std::vector<GrayImage> images;
  std::optional<std::vector<BinaryMask>> masks;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  bool has_masks() const noexcept { return masks.has_value(); }

  /// Ids unique, sizes aligned, masks shaped like their images.
  void validate() const;

  /// Subset by positions, preserving the given order.
  DatasetSplit select(std::span<const std::size_t> positions) const;
};

}  // namespace hgit
