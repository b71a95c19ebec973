#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hgit/image.hpp"

namespace hgit {

/// Parametric rendering style of one synthetic device/layer domain.
struct DomainStyle {
  std::string name;
  double bg_level = 0.25;
  double fg_level = 0.75;
  double noise_sigma = 0.03;
  double blur_radius = 1.0;
  double texture_amp = 0.05;

  double contrast() const { return std::abs(fg_level - bg_level); }
  void validate() const;

  nlohmann::json to_json() const;
  static DomainStyle from_json(const nlohmann::json& j);
};

/// Known presets: "source", "shifted-bright", "shifted-dark-lowcontrast",
/// "textured".
DomainStyle style_preset(const std::string& name);
std::vector<std::string> style_preset_names();

struct LayoutSpec {
  int image_size = 128;
  int line_width_min = 2;
  int line_width_max = 5;
  double density = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Manhattan-routed metal-line mask; foreground fraction lands within 0.15
/// of spec.density (in practice much closer).
BinaryMask generate_layout(const LayoutSpec& spec);

/// bg/fg levels, then Gaussian edge blur, multiplicative low-frequency
/// texture, additive Gaussian noise, clip to [0,1].
GrayImage render(const BinaryMask& mask, const DomainStyle& style, std::uint64_t seed);

struct DomainPair {
  DomainStyle source_style;
  DomainStyle target_style;
  LayoutSpec spec;
  DatasetSplit source_train;
  DatasetSplit source_test;
  /// Unlabeled at pipeline level.
  DatasetSplit target_train;
  DatasetSplit target_test;
  /// Ground truth for target_train; only the supervised reference may use it.
  std::vector<BinaryMask> target_train_masks;

  DatasetSplit target_train_labeled() const;
};

DomainPair generate_domain_pair(const DomainStyle& source_style, const DomainStyle& target_style, int n_train,
                                int n_test, const LayoutSpec& spec);

/// Counts for the full-size protocol: about 1,500 128x128 images per domain
/// split 80:20.
struct ProtocolSize {
  int n_train;
  int n_test;
  int image_size;
};
ProtocolSize paper_protocol_size();

/// Writes one directory per split (source_train, source_test, target_train,
/// target_test), each with images/, masks/ and manifest.json, plus
/// target_train/labels.json (the only manifest exposing target-train masks)
/// and style.json.
void write_domain_pair(const DomainPair& pair, const std::filesystem::path& dir);

/// Deterministic 64-bit mix of a seed with stream indices.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace hgit
