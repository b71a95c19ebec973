#include "hgit/io.hpp"

#include <algorithm>
#include <png.h>

#include <array>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "hgit/errors.hpp"

namespace hgit {

namespace {

using json = nlohmann::json;

struct PngHeader {
  int bit_depth = 0;
  int color_type = 0;
};

// Bit depth and color type live at fixed offsets of the IHDR chunk, which
// must directly follow the 8-byte signature.
PngHeader read_png_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::array<unsigned char, 26> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  if (in.gcount() != static_cast<std::streamsize>(head.size()) || png_sig_cmp(head.data(), 0, 8) != 0 ||
      std::string(reinterpret_cast<const char*>(&head[12]), 4) != "IHDR") {
    throw FormatError("'" + path.string() + "' is not a PNG file");
  }
  return {head[24], head[25]};
}

std::vector<std::uint8_t> read_gray8(const fs::path& path, int& height, int& width) {
  if (!fs::exists(path)) throw IoError("no such file '" + path.string() + "'");
  const PngHeader hdr = read_png_header(path);
  if (hdr.color_type != PNG_COLOR_TYPE_GRAY) {
    throw FormatError("'" + path.string() + "' is not single-channel grayscale (PNG color type " +
                      std::to_string(hdr.color_type) + ")");
  }
  if (hdr.bit_depth != 8) {
    throw FormatError("'" + path.string() + "' has bit depth " + std::to_string(hdr.bit_depth) + ", expected 8");
  }

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError("'" + path.string() + "': " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("'" + path.string() + "': " + msg);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return buf;
}

void write_png(const fs::path& path, int height, int width, const std::uint8_t* data, bool rgb) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write '" + path.string() + "': " + msg);
  }
}

std::string generic(const fs::path& p) { return p.generic_string(); }

}  // namespace

std::uint8_t to_byte(float intensity) {
  float v = std::isnan(intensity) ? 0.0f : std::clamp(intensity, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(v * 255.0f));
}

GrayImage load_image(const fs::path& path) {
  int h = 0, w = 0;
  auto raw = read_gray8(path, h, w);
  std::vector<float> px(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) px[i] = static_cast<float>(raw[i] / 255.0);
  return GrayImage(h, w, std::move(px));
}

void save_image(const GrayImage& img, const fs::path& path) {
  std::vector<std::uint8_t> raw(img.size());
  auto px = img.pixels();
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(px[i]);
  write_png(path, img.height(), img.width(), raw.data(), false);
}

BinaryMask load_mask(const fs::path& path) {
  int h = 0, w = 0;
  auto raw = read_gray8(path, h, w);
  for (auto& v : raw) {
    if (v == 255) v = 1;
    else if (v != 0) throw FormatError("'" + path.string() + "' mask contains values other than 0 and 255");
  }
  return BinaryMask(h, w, std::move(raw));
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
  std::vector<std::uint8_t> raw(mask.labels().begin(), mask.labels().end());
  for (auto& v : raw) v = v ? 255 : 0;
  write_png(path, mask.height(), mask.width(), raw.data(), false);
}

void write_png_gray8(const fs::path& path, int height, int width, const std::uint8_t* data) {
  write_png(path, height, width, data, false);
}

void write_png_rgb8(const fs::path& path, int height, int width, const std::uint8_t* data) {
  write_png(path, height, width, data, true);
}

DatasetSplit read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + manifest.string() + "': " + e.what());
  }
  if (!doc.contains("role") || !doc.contains("items") || !doc["items"].is_array()) {
    throw FormatError("manifest '" + manifest.string() + "' needs 'role' and 'items'");
  }
  const fs::path base = manifest.parent_path();
  DatasetSplit split;
  split.role = split_role_from_string(doc["role"].get<std::string>());
  bool any_mask = false, any_null = false;
  std::vector<BinaryMask> masks;
  for (const auto& item : doc["items"]) {
    split.ids.push_back(item.at("id").get<std::string>());
    split.images.push_back(load_image(base / item.at("image").get<std::string>()));
    if (item.contains("mask") && !item["mask"].is_null()) {
      masks.push_back(load_mask(base / item["mask"].get<std::string>()));
      any_mask = true;
    } else {
      any_null = true;
    }
  }
  if (any_mask && any_null) throw FormatError("manifest '" + manifest.string() + "' mixes labeled and unlabeled items");
  if (any_mask) split.masks = std::move(masks);
  split.validate();
  return split;
}

void write_manifest(const fs::path& manifest, SplitRole role, const std::vector<ManifestItem>& items) {
  json doc;
  doc["role"] = std::string(to_string(role));
  doc["items"] = json::array();
  for (const auto& it : items) {
    json j;
    j["id"] = it.id;
    j["image"] = it.image;
    j["mask"] = it.mask.empty() ? json(nullptr) : json(it.mask);
    doc["items"].push_back(std::move(j));
  }
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write manifest '" + manifest.string() + "'");
  out << doc.dump(2) << '\n';
}

fs::path write_split(const DatasetSplit& split, const fs::path& dir, const std::string& manifest_name,
                     const ManifestOptions& opts) {
  split.validate();
  fs::create_directories(dir);
  std::vector<ManifestItem> items;
  items.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    ManifestItem it;
    it.id = split.ids[i];
    const fs::path img_rel = fs::path(opts.image_dir) / (split.ids[i] + ".png");
    save_image(split.images[i], dir / img_rel);
    it.image = generic(img_rel);
    if (split.masks) {
      const fs::path mask_rel = fs::path(opts.mask_dir) / (split.ids[i] + ".png");
      save_mask((*split.masks)[i], dir / mask_rel);
      if (!opts.hide_masks) it.mask = generic(mask_rel);
    }
    items.push_back(std::move(it));
  }
  const fs::path manifest = dir / manifest_name;
  write_manifest(manifest, split.role, items);
  return manifest;
}

}  // namespace hgit
