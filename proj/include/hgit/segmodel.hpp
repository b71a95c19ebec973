#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <vector>

#include "hgit/image.hpp"
#include "hgit/nn/layers.hpp"

namespace hgit {

inline constexpr double kBceEps = 1e-7;

/// Three-level U-Net: two 3x3 conv+ReLU per level, max-pool down,
/// upsample+conv up, skip concatenation, 1x1 head. No normalization layers.
struct SegmenterArch {
  int base_channels = 16;
};

struct SegTrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double threshold = 0.5;
  /// Random square crop (same window for image and mask); 0 = full image.
  int train_crop = 0;
  /// Random horizontal/vertical flips and transposes of each pair.
  bool augment = true;
  std::uint64_t seed = 0;
  SegmenterArch arch;

  void validate() const;
  nlohmann::json to_json() const;
  static SegTrainConfig from_json(const nlohmann::json& j);
};

struct SegEpoch {
  int epoch = 0;
  double loss = 0.0;
  /// SA on the validation split, or on up to 32 training images when none
  /// was given (validation_on_train is then set).
  double validation_sa = 0.0;
  bool validation_on_train = false;
};

class SegmenterModel {
 public:
  SegmenterModel(const SegmenterArch& arch, std::uint64_t seed);
  /// Wraps any module producing logits of the input's shape.
  explicit SegmenterModel(std::unique_ptr<nn::Module> logits_net);

  SegmenterModel(SegmenterModel&&) noexcept = default;
  SegmenterModel& operator=(SegmenterModel&&) noexcept = default;

  /// Logits for an (N,1,H,W) batch.
  nn::Tensor logits(const nn::Tensor& x, nn::Tape* tape) const { return net_->forward(x, tape); }
  nn::Module& network() { return *net_; }
  const nn::Module& network() const { return *net_; }

  /// Per-pixel foreground probability, same shape as img.
  std::vector<float> probabilities(const GrayImage& img) const;

  const SegmenterArch& arch() const noexcept { return arch_; }
  std::size_t parameter_count() const { return net_->parameter_count(); }

  std::vector<SegEpoch>& training_log() { return log_; }
  const std::vector<SegEpoch>& training_log() const { return log_; }

  void save(const std::filesystem::path& path) const;
  static SegmenterModel load(const std::filesystem::path& path);

 private:
  bool custom_ = false;
  SegmenterArch arch_;
  std::unique_ptr<nn::Module> net_;
  std::vector<SegEpoch> log_;
};

/// Mean two-term binary cross-entropy with probabilities clipped to
/// [eps, 1-eps]. probs and masks are flattened in matching order.
double bce_loss(std::span<const float> probs, std::span<const BinaryMask> masks);
double bce_loss(const nn::Tensor& probs, std::span<const BinaryMask> masks);
/// d bce_loss / d probs (zero where clipping is active).
nn::Tensor bce_grad(const nn::Tensor& probs, std::span<const BinaryMask> masks);

SegmenterModel train_segmenter(const DatasetSplit& data, const SegTrainConfig& cfg,
                               const DatasetSplit* validation = nullptr,
                               const std::function<void(const SegEpoch&)>& on_epoch = {});

/// Y = 1[F(X) >= threshold], one mask per image in input order.
std::vector<BinaryMask> predict(const DatasetSplit& xt, const SegmenterModel& model, double threshold = 0.5);

}  // namespace hgit
