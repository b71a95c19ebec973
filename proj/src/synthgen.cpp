#include "hgit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "hgit/errors.hpp"
#include "hgit/io.hpp"

namespace hgit {

namespace {

using Rng = std::mt19937_64;

constexpr int kLayoutAttempts = 8;
constexpr int kPathsPerAttempt = 4000;
constexpr double kDensitySlack = 0.03;

void fill_rect(BinaryMask& m, int y0, int x0, int y1, int x1) {
  y0 = std::max(y0, 0);
  x0 = std::max(x0, 0);
  y1 = std::min(y1, m.height());
  x1 = std::min(x1, m.width());
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m(y, x) = 1;
}

// One route: a run along the preferred axis with optional perpendicular jogs.
void draw_route(BinaryMask& m, Rng& rng, bool horizontal, int width, int size) {
  std::uniform_int_distribution<int> pos(0, size - 1);
  std::uniform_int_distribution<int> run(size / 6, size);
  std::uniform_int_distribution<int> jog(width * 2, std::max(width * 2, size / 4));
  std::bernoulli_distribution bend(0.45);
  std::bernoulli_distribution sign(0.5);

  int y = pos(rng), x = pos(rng);
  const int segments = 1 + static_cast<int>(rng() % 3);
  for (int s = 0; s < segments; ++s) {
    const int len = run(rng);
    const int dir = sign(rng) ? 1 : -1;
    if (horizontal) {
      const int xe = x + dir * len;
      fill_rect(m, y, std::min(x, xe), y + width, std::max(x, xe) + width);
      x = xe;
    } else {
      const int ye = y + dir * len;
      fill_rect(m, std::min(y, ye), x, std::max(y, ye) + width, x + width);
      y = ye;
    }
    if (s + 1 < segments && bend(rng)) {
      const int j = jog(rng) * (sign(rng) ? 1 : -1);
      if (horizontal) {
        fill_rect(m, std::min(y, y + j), x, std::max(y, y + j) + width, x + width);
        y += j;
      } else {
        fill_rect(m, y, std::min(x, x + j), y + width, std::max(x, x + j) + width);
        x += j;
      }
    }
    x = std::clamp(x, 0, size - 1);
    y = std::clamp(y, 0, size - 1);
  }
}

std::vector<float> gaussian_kernel(double radius) {
  const int half = static_cast<int>(std::ceil(radius));
  const double sigma = std::max(radius / 2.0, 1e-3);
  std::vector<float> k(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + half)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

int reflect(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

void separable_blur(GrayImage& img, double radius) {
  if (radius <= 0.0) return;
  const auto k = gaussian_kernel(radius);
  const int half = static_cast<int>(k.size() / 2);
  const int h = img.height(), w = img.width();
  GrayImage tmp(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int i = -half; i <= half; ++i) s += k[static_cast<std::size_t>(i + half)] * img(y, reflect(x + i, w));
      tmp(y, x) = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int i = -half; i <= half; ++i) s += k[static_cast<std::size_t>(i + half)] * tmp(reflect(y + i, h), x);
      img(y, x) = s;
    }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a simple combination
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

void DomainStyle::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(bg_level) || !in01(fg_level)) throw ArgumentError("style levels must lie in [0,1]");
  if (fg_level == bg_level) throw ArgumentError("style fg_level must differ from bg_level");
  if (!(noise_sigma >= 0.0 && noise_sigma <= 0.3)) throw ArgumentError("noise_sigma must lie in [0, 0.3]");
  if (!(blur_radius >= 0.0 && blur_radius <= 4.0)) throw ArgumentError("blur_radius must lie in [0, 4]");
  if (!(texture_amp >= 0.0 && texture_amp <= 0.5)) throw ArgumentError("texture_amp must lie in [0, 0.5]");
}

nlohmann::json DomainStyle::to_json() const {
  return {{"name", name},           {"bg_level", bg_level},       {"fg_level", fg_level},
          {"contrast", contrast()}, {"noise_sigma", noise_sigma}, {"blur_radius", blur_radius},
          {"texture_amp", texture_amp}};
}

DomainStyle DomainStyle::from_json(const nlohmann::json& j) {
  if (j.is_string()) return style_preset(j.get<std::string>());
  DomainStyle s;
  if (j.contains("preset")) s = style_preset(j["preset"].get<std::string>());
  s.name = j.value("name", s.name);
  s.bg_level = j.value("bg_level", s.bg_level);
  s.fg_level = j.value("fg_level", s.fg_level);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.blur_radius = j.value("blur_radius", s.blur_radius);
  s.texture_amp = j.value("texture_amp", s.texture_amp);
  s.validate();
  return s;
}

DomainStyle style_preset(const std::string& name) {
  DomainStyle s;
  s.name = name;
  if (name == "source") {
    s.bg_level = 0.22;
    s.fg_level = 0.78;
    s.noise_sigma = 0.04;
    s.blur_radius = 1.0;
    s.texture_amp = 0.05;
  } else if (name == "shifted-bright") {
    s.bg_level = 0.55;
    s.fg_level = 0.95;
    s.noise_sigma = 0.05;
    s.blur_radius = 1.5;
    s.texture_amp = 0.08;
  } else if (name == "shifted-dark-lowcontrast") {
    // darker overall and a much smaller line/background gap
    s.bg_level = 0.10;
    s.fg_level = 0.30;
    s.noise_sigma = 0.035;
    s.blur_radius = 1.5;
    s.texture_amp = 0.10;
  } else if (name == "textured") {
    s.bg_level = 0.35;
    s.fg_level = 0.70;
    s.noise_sigma = 0.07;
    s.blur_radius = 1.0;
    s.texture_amp = 0.35;
  } else {
    throw ArgumentError("unknown style preset '" + name + "'");
  }
  return s;
}

std::vector<std::string> style_preset_names() {
  return {"source", "shifted-bright", "shifted-dark-lowcontrast", "textured"};
}

void LayoutSpec::validate() const {
  if (image_size < 32) throw ArgumentError("layout image_size must be at least 32");
  if (line_width_min < 2) throw ArgumentError("layout min line width must be at least 2");
  if (line_width_max < line_width_min) throw ArgumentError("layout line width range is empty");
  if (!(density >= 0.05 && density <= 0.6)) throw ArgumentError("layout density must lie in [0.05, 0.6]");
}

nlohmann::json LayoutSpec::to_json() const {
  return {{"image_size", image_size},
          {"line_width_range", {line_width_min, line_width_max}},
          {"orientation", "manhattan"},
          {"density", density},
          {"seed", seed}};
}

BinaryMask generate_layout(const LayoutSpec& spec) {
  spec.validate();
  const int size = spec.image_size;
  const double total = static_cast<double>(size) * size;
  for (int attempt = 0; attempt < kLayoutAttempts; ++attempt) {
    Rng rng(derive_seed(spec.seed, 0x1a7, static_cast<std::uint64_t>(attempt)));
    std::uniform_int_distribution<int> width(spec.line_width_min, spec.line_width_max);
    std::bernoulli_distribution preferred(0.75);
    const bool horizontal_first = (rng() & 1) != 0;

    BinaryMask mask(size, size, 0);
    std::size_t fg = 0;
    for (int p = 0; p < kPathsPerAttempt; ++p) {
      BinaryMask trial = mask;
      const bool horiz = preferred(rng) ? horizontal_first : !horizontal_first;
      draw_route(trial, rng, horiz, width(rng), size);
      const std::size_t n = trial.foreground_count();
      if (static_cast<double>(n) / total > spec.density + kDensitySlack) continue;
      mask = std::move(trial);
      fg = n;
      if (static_cast<double>(fg) / total >= spec.density - kDensitySlack) return mask;
    }
  }
  throw GenerationError("could not reach layout density " + std::to_string(spec.density) + " with line widths [" +
                        std::to_string(spec.line_width_min) + "," + std::to_string(spec.line_width_max) + "]");
}

GrayImage render(const BinaryMask& mask, const DomainStyle& style, std::uint64_t seed) {
  style.validate();
  const int h = mask.height(), w = mask.width();
  GrayImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(y, x) = static_cast<float>(mask(y, x) ? style.fg_level : style.bg_level);
  separable_blur(img, style.blur_radius);

  Rng rng(derive_seed(seed, 0x7e4));
  if (style.texture_amp > 0.0) {
    std::uniform_real_distribution<double> freq(0.5, 2.0), phase(0.0, 2.0 * std::numbers::pi);
    std::bernoulli_distribution sgn(0.5);
    double fx[3], fy[3], ph[3];
    for (int k = 0; k < 3; ++k) {
      fx[k] = freq(rng) * (sgn(rng) ? 1 : -1) / w;
      fy[k] = freq(rng) * (sgn(rng) ? 1 : -1) / h;
      ph[k] = phase(rng);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double t = 0.0;
        for (int k = 0; k < 3; ++k) t += std::sin(2.0 * std::numbers::pi * (fx[k] * x + fy[k] * y) + ph[k]);
        img(y, x) = static_cast<float>(img(y, x) * (1.0 + style.texture_amp * t / 3.0));
      }
  }
  if (style.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, style.noise_sigma);
    for (auto& v : img.pixels()) v = static_cast<float>(v + noise(rng));
  }
  img.clip();
  return img;
}

DatasetSplit DomainPair::target_train_labeled() const {
  DatasetSplit s = target_train;
  s.masks = target_train_masks;
  return s;
}

namespace {

DatasetSplit make_split(SplitRole role, const std::string& prefix, int count, const DomainStyle& style,
                        const LayoutSpec& spec, std::uint64_t stream) {
  DatasetSplit s;
  s.role = role;
  s.masks.emplace();
  for (int i = 0; i < count; ++i) {
    LayoutSpec item = spec;
    item.seed = derive_seed(spec.seed, stream, static_cast<std::uint64_t>(i));
    // per-image density jitter keeps the set from being too uniform
    std::mt19937_64 jr(derive_seed(item.seed, 0xd5));
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    item.density = std::clamp(spec.density + jitter(jr), 0.05, 0.6);
    BinaryMask m = generate_layout(item);
    char id[32];
    std::snprintf(id, sizeof(id), "%s_%05d", prefix.c_str(), i);
    s.ids.emplace_back(id);
    s.images.push_back(render(m, style, derive_seed(item.seed, 0x5e7)));
    s.masks->push_back(std::move(m));
  }
  return s;
}

}  // namespace

DomainPair generate_domain_pair(const DomainStyle& source_style, const DomainStyle& target_style, int n_train,
                                int n_test, const LayoutSpec& spec) {
  if (n_train <= 0 || n_test <= 0) throw ArgumentError("n_train and n_test must be positive");
  source_style.validate();
  target_style.validate();
  spec.validate();
  DomainPair p;
  p.source_style = source_style;
  p.target_style = target_style;
  p.spec = spec;
  p.source_train = make_split(SplitRole::SourceTrain, "src_train", n_train, source_style, spec, 1);
  p.source_test = make_split(SplitRole::SourceTest, "src_test", n_test, source_style, spec, 2);
  p.target_train = make_split(SplitRole::TargetTrain, "tgt_train", n_train, target_style, spec, 3);
  p.target_test = make_split(SplitRole::TargetTest, "tgt_test", n_test, target_style, spec, 4);
  p.target_train_masks = std::move(*p.target_train.masks);
  p.target_train.masks.reset();
  return p;
}

ProtocolSize paper_protocol_size() { return {1200, 300, 128}; }

void write_domain_pair(const DomainPair& pair, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_split(pair.source_train, dir / "source_train", "manifest.json");
  write_split(pair.source_test, dir / "source_test", "manifest.json");
  write_split(pair.target_test, dir / "target_test", "manifest.json");

  // Target-train images and masks share one directory; the pipeline manifest
  // hides the masks, the labels manifest exposes them for the supervised
  // reference and evaluation.
  DatasetSplit labeled = pair.target_train_labeled();
  ManifestOptions hidden;
  hidden.hide_masks = true;
  write_split(labeled, dir / "target_train", "manifest.json", hidden);
  std::vector<ManifestItem> items;
  for (const auto& id : labeled.ids) items.push_back({id, "images/" + id + ".png", "masks/" + id + ".png"});
  write_manifest(dir / "target_train" / "labels.json", SplitRole::TargetTrain, items);

  nlohmann::json style{{"source", pair.source_style.to_json()},
                       {"target", pair.target_style.to_json()},
                       {"layout", pair.spec.to_json()},
                       {"n_train", pair.source_train.size()},
                       {"n_test", pair.source_test.size()}};
  std::ofstream out(dir / "style.json");
  if (!out) throw IoError("cannot write style.json in '" + dir.string() + "'");
  out << style.dump(2) << '\n';
}

}  // namespace hgit
