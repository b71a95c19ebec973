#include "hgit/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "hgit/errors.hpp"

namespace hgit {

namespace {

void check_dims(int height, int width, std::string_view what) {
  if (height < kMinImageSide || width < kMinImageSide) {
    throw ArgumentError(std::string(what) + " must be at least 8x8, got " + std::to_string(height) +
                        "x" + std::to_string(width));
  }
}

}  // namespace

GrayImage::GrayImage(int height, int width, float fill)
    : height_(height), width_(width) {
  check_dims(height, width, "image");
  pixels_.assign(static_cast<std::size_t>(height) * width, fill);
}

GrayImage::GrayImage(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  check_dims(height, width, "image");
  if (pixels_.size() != static_cast<std::size_t>(height) * width) {
    throw ArgumentError("pixel buffer does not match image dimensions");
  }
}

double GrayImage::mean() const {
  if (pixels_.empty()) return 0.0;
  double s = 0.0;
  for (float v : pixels_) s += v;
  return s / static_cast<double>(pixels_.size());
}

void GrayImage::clip() {
  for (float& v : pixels_) {
    if (!(v >= 0.0f)) v = 0.0f;
    else if (v > 1.0f) v = 1.0f;
  }
}

void GrayImage::validate() const {
  check_dims(height_, width_, "image");
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ArgumentError("image pixel outside [0,1]");
  }
}

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
  check_dims(height, width, "mask");
  if (fill > 1) throw ArgumentError("mask fill must be 0 or 1");
  labels_.assign(static_cast<std::size_t>(height) * width, fill);
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  check_dims(height, width, "mask");
  if (labels_.size() != static_cast<std::size_t>(height) * width) {
    throw ArgumentError("label buffer does not match mask dimensions");
  }
  validate();
}

std::size_t BinaryMask::foreground_count() const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), std::uint8_t{1}));
}

double BinaryMask::foreground_fraction() const {
  return labels_.empty() ? 0.0 : static_cast<double>(foreground_count()) / labels_.size();
}

BinaryMask BinaryMask::complement() const {
  BinaryMask out = *this;
  for (auto& v : out.labels_) v = static_cast<std::uint8_t>(1 - v);
  return out;
}

void BinaryMask::validate() const {
  for (auto v : labels_) {
    if (v > 1) throw ArgumentError("mask label outside {0,1}");
  }
}

Histogram::Histogram() { bins_.fill(0.0); }

Histogram::Histogram(const Bins& bins, std::int64_t pixel_count)
    : bins_(bins), pixel_count_(pixel_count) {
  if (pixel_count <= 0) throw ArgumentError("histogram pixel_count must be positive");
  for (double b : bins_) {
    if (!(b >= 0.0)) throw ArgumentError("histogram bin negative or NaN");
  }
  if (!is_normalized()) throw ArgumentError("histogram bins do not sum to 1");
}

Histogram::Bins Histogram::cdf() const {
  Bins c{};
  double acc = 0.0;
  for (int b = 0; b < kHistogramBins; ++b) {
    acc += bins_[b];
    c[b] = acc;
  }
  return c;
}

bool Histogram::is_normalized(double tol) const {
  double s = std::accumulate(bins_.begin(), bins_.end(), 0.0);
  return std::abs(s - 1.0) <= tol;
}

int Histogram::bin_of(float intensity) {
  if (!(intensity > 0.0f)) return 0;
  int b = static_cast<int>(std::floor(static_cast<double>(intensity) * kHistogramBins));
  return std::min(b, kHistogramBins - 1);
}

Histogram Histogram::delta(int bin, std::int64_t pixel_count) {
  if (bin < 0 || bin >= kHistogramBins) throw ArgumentError("delta bin out of range");
  Bins b{};
  b[bin] = 1.0;
  return Histogram(b, pixel_count);
}

Histogram compute_histogram(const GrayImage& img) {
  if (img.empty()) throw ArgumentError("cannot histogram an empty image");
  std::array<std::int64_t, kHistogramBins> counts{};
  for (float v : img.pixels()) ++counts[Histogram::bin_of(v)];
  const auto n = static_cast<std::int64_t>(img.size());
  Histogram::Bins bins{};
  for (int b = 0; b < kHistogramBins; ++b) bins[b] = static_cast<double>(counts[b]) / n;
  return Histogram(bins, n);
}

Histogram mean_histogram(std::span<const Histogram> hists) {
  if (hists.empty()) throw ArgumentError("mean_histogram needs at least one histogram");
  Histogram::Bins acc{};
  std::int64_t count = 0;
  for (const auto& h : hists) {
    for (int b = 0; b < kHistogramBins; ++b) acc[b] += h[b];
    count += h.pixel_count();
  }
  double total = 0.0;
  for (auto& v : acc) {
    v /= static_cast<double>(hists.size());
    total += v;
  }
  for (auto& v : acc) v /= total;
  return Histogram(acc, count);
}

std::string_view to_string(SplitRole role) {
  switch (role) {
    case SplitRole::SourceTrain: return "source-train";
    case SplitRole::SourceTest: return "source-test";
    case SplitRole::TargetTrain: return "target-train";
    case SplitRole::TargetTest: return "target-test";
  }
  return "unknown";
}

SplitRole split_role_from_string(std::string_view s) {
  if (s == "source-train") return SplitRole::SourceTrain;
  if (s == "source-test") return SplitRole::SourceTest;
  if (s == "target-train") return SplitRole::TargetTrain;
  if (s == "target-test") return SplitRole::TargetTest;
  throw ArgumentError("unknown split role '" + std::string(s) + "'");
}

void DatasetSplit::validate() const {
  if (ids.size() != images.size()) throw ArgumentError("split ids and images differ in length");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw ArgumentError("duplicate id '" + id + "' in split");
  }
  if (masks) {
    if (masks->size() != images.size()) throw ArgumentError("split masks and images differ in length");
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (!(*masks)[i].matches(images[i])) {
        throw ArgumentError("mask shape differs from image shape for id '" + ids[i] + "'");
      }
    }
  }
}

DatasetSplit DatasetSplit::select(std::span<const std::size_t> positions) const {
  DatasetSplit out;
  out.role = role;
  if (masks) out.masks.emplace();
  for (auto p : positions) {
    if (p >= images.size()) throw ArgumentError("split position out of range");
    out.ids.push_back(ids[p]);
    out.images.push_back(images[p]);
    if (masks) out.masks->push_back((*masks)[p]);
  }
  return out;
}

}  // namespace hgit
