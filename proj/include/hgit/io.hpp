#pragma once

#include <filesystem>
#include <string>

#include "hgit/image.hpp"

namespace hgit {

namespace fs = std::filesystem;

/// Loads an 8-bit single-channel PNG, pixels = raw / 255.
GrayImage load_image(const fs::path& path);

/// Writes pixels as round(v * 255), clamped.
void save_image(const GrayImage& img, const fs::path& path);

/// Loads a {0,255} PNG as a {0,1} mask.
BinaryMask load_mask(const fs::path& path);
void save_mask(const BinaryMask& mask, const fs::path& path);

/// Raw 8-bit grayscale buffer access, used by the plotting code.
void write_png_gray8(const fs::path& path, int height, int width, const std::uint8_t* data);
void write_png_rgb8(const fs::path& path, int height, int width, const std::uint8_t* data);

std::uint8_t to_byte(float intensity);

/// Manifest: {"role": ..., "items": [{"id", "image", "mask"|null}]}, paths
/// relative to the manifest's directory.
DatasetSplit read_manifest(const fs::path& manifest);

struct ManifestOptions {
  /// Write masks to disk but record "mask": null (unlabeled target-train).
  bool hide_masks = false;
  std::string image_dir = "images";
  std::string mask_dir = "masks";
};

/// Writes every image (and mask) of the split under `dir` plus the manifest
/// file `dir / manifest_name`. Returns the manifest path.
fs::path write_split(const DatasetSplit& split, const fs::path& dir, const std::string& manifest_name,
                     const ManifestOptions& opts = {});

/// Writes only a manifest that points at already-existing files.
struct ManifestItem {
  std::string id;
  std::string image;
  std::string mask;  // empty = null
};
void write_manifest(const fs::path& manifest, SplitRole role, const std::vector<ManifestItem>& items);

}  // namespace hgit
