#pragma once

// Minimal RGB raster for the report plots. Internal to the library.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace hgit::plot {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGrey{160, 160, 160};
inline constexpr Rgb kBlue{52, 101, 164};
inline constexpr Rgb kOrange{230, 126, 34};
inline constexpr Rgb kGreen{39, 174, 96};
inline constexpr Rgb kRed{192, 57, 43};

class Canvas {
 public:
  Canvas(int width, int height, Rgb background = kWhite);

  int width() const noexcept { return w_; }
  int height() const noexcept { return h_; }

  void set(int x, int y, Rgb c);
  void fill_rect(int x, int y, int w, int h, Rgb c);
  void frame(int x, int y, int w, int h, Rgb c);
  void hline(int x0, int x1, int y, Rgb c);
  void vline(int x, int y0, int y1, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  /// 5x7 glyphs, upper-cased; unknown characters render as blanks.
  void text(int x, int y, std::string_view s, Rgb c, int scale = 1);
  static int text_width(std::string_view s, int scale = 1) { return static_cast<int>(s.size()) * 6 * scale; }
  /// Grayscale block, nearest-neighbour scaled to w x h.
  void blit_gray(int x, int y, int w, int h, const float* pixels, int src_h, int src_w);

  void save(const std::filesystem::path& path) const;

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

}  // namespace hgit::plot
