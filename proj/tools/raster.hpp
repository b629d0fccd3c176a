#pragma once

// Minimal RGB drawing for loss curves, sweep plots, heatmaps and montages.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skgan/tensor.hpp"

namespace skgan::cli {

using Rgb = std::array<std::uint8_t, 3>;

class Canvas {
 public:
  Canvas(std::size_t width, std::size_t height, Rgb fill = {255, 255, 255});

  std::size_t width() const { return w_; }
  std::size_t height() const { return h_; }
  Rgb at(std::size_t x, std::size_t y) const;

  void set(long x, long y, Rgb c);
  void rect(long x0, long y0, long x1, long y1, Rgb c);  // filled, inclusive
  void frame(long x0, long y0, long x1, long y1, long thickness, Rgb c);
  void line(long x0, long y0, long x1, long y1, Rgb c);
  // Ink 1 drawn dark on a light background.
  void image(const Tensor& img, long x0, long y0);

  void save_png(const std::filesystem::path& path) const;

 private:
  std::size_t w_, h_;
  std::vector<std::uint8_t> rgb_;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Axes with grid lines at the ticks of the y range, one colour per series.
Canvas line_plot(const std::vector<Series>& series, std::size_t width = 640, std::size_t height = 400);

// Row-major grid, first row at the top; values mapped dark (low) to bright.
Canvas heatmap(const std::vector<double>& values, std::size_t rows, std::size_t cols, std::size_t cell = 16);

// Rows of tiles; the first tile of each row is framed.
Canvas montage(const std::vector<std::vector<Tensor>>& rows);

Rgb palette(std::size_t i);

}  // namespace skgan::cli
