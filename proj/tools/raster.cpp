#include "raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "skgan/data.hpp"

namespace skgan::cli {

namespace {

constexpr long kTile = 64;
constexpr long kGap = 6;
constexpr Rgb kAxis{40, 40, 40};
constexpr Rgb kGrid{220, 220, 220};
constexpr Rgb kQueryBox{128, 0, 160};

// Dark blue through teal to yellow.
Rgb ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = t < 0.5 ? 0.1 + 0.2 * t : 0.2 + 1.6 * (t - 0.5);
  const double g = 0.05 + 0.85 * t;
  const double b = t < 0.5 ? 0.35 + 0.5 * t : 0.6 - 1.0 * (t - 0.5);
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); };
  return {q(r), q(g), q(b)};
}

}  // namespace

Rgb palette(std::size_t i) {
  static constexpr Rgb colours[] = {{200, 30, 30},  {30, 90, 200}, {20, 150, 60},
                                    {220, 130, 0},  {130, 40, 170}, {0, 150, 160}};
  return colours[i % std::size(colours)];
}

Canvas::Canvas(std::size_t width, std::size_t height, Rgb fill) : w_(width), h_(height), rgb_(width * height * 3) {
  for (std::size_t i = 0; i < width * height; ++i) std::copy(fill.begin(), fill.end(), rgb_.begin() + 3 * i);
}

Rgb Canvas::at(std::size_t x, std::size_t y) const {
  const std::size_t i = 3 * (y * w_ + x);
  return {rgb_[i], rgb_[i + 1], rgb_[i + 2]};
}

void Canvas::set(long x, long y, Rgb c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(w_) || y >= static_cast<long>(h_)) return;
  std::copy(c.begin(), c.end(), rgb_.begin() + 3 * (static_cast<std::size_t>(y) * w_ + static_cast<std::size_t>(x)));
}

void Canvas::rect(long x0, long y0, long x1, long y1, Rgb c) {
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) set(x, y, c);
  }
}

void Canvas::frame(long x0, long y0, long x1, long y1, long t, Rgb c) {
  rect(x0, y0, x1, y0 + t - 1, c);
  rect(x0, y1 - t + 1, x1, y1, c);
  rect(x0, y0, x0 + t - 1, y1, c);
  rect(x1 - t + 1, y0, x1, y1, c);
}

void Canvas::line(long x0, long y0, long x1, long y1, Rgb c) {
  const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (;;) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::image(const Tensor& img, long x0, long y0) {
  const Shape4& s = img.shape();
  auto v = img.values();
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::clamp(v[y * s.w + x], 0.0, 1.0))));
      set(x0 + static_cast<long>(x), y0 + static_cast<long>(y), {g, g, g});
    }
  }
}

void Canvas::save_png(const std::filesystem::path& path) const { data::write_png_rgb(path, w_, h_, rgb_); }

Canvas line_plot(const std::vector<Series>& series, std::size_t width, std::size_t height) {
  Canvas c(width, height);
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!(xmin <= xmax)) return c;
  if (xmax == xmin) xmax = xmin + 1;
  // Round the y range out to a tick step.
  const double span = std::max(ymax - ymin, 1e-9);
  const double step = std::pow(10.0, std::floor(std::log10(span / 4)));
  const double tick = span / step > 20 ? 5 * step : span / step > 8 ? 2 * step : step;
  ymin = std::floor(ymin / tick) * tick;
  ymax = std::ceil(ymax / tick) * tick;
  if (ymax == ymin) ymax = ymin + tick;

  const long left = 40, right = static_cast<long>(width) - 15, top = 15, bottom = static_cast<long>(height) - 30;
  auto px = [&](double x) { return left + std::lround((x - xmin) / (xmax - xmin) * static_cast<double>(right - left)); };
  auto py = [&](double y) {
    return bottom - std::lround((y - ymin) / (ymax - ymin) * static_cast<double>(bottom - top));
  };
  for (double y = ymin; y <= ymax + tick / 2; y += tick) {
    c.line(left, py(y), right, py(y), kGrid);
    c.line(left - 5, py(y), left, py(y), kAxis);
  }
  if (xmin < 0 && xmax > 0) c.line(px(0), top, px(0), bottom, kGrid);
  c.line(left, top, left, bottom, kAxis);
  c.line(left, bottom, right, bottom, kAxis);

  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const Rgb col = palette(k);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      if (i > 0 && std::isfinite(s.y[i - 1])) c.line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), col);
      if (s.x.size() <= 100) c.rect(px(s.x[i]) - 1, py(s.y[i]) - 1, px(s.x[i]) + 1, py(s.y[i]) + 1, col);
    }
    // Legend swatch per series, top right.
    const long ly = top + 4 + 10 * static_cast<long>(k);
    c.rect(right - 24, ly, right - 4, ly + 5, col);
  }
  return c;
}

Canvas heatmap(const std::vector<double>& values, std::size_t rows, std::size_t cols, std::size_t cell) {
  if (values.size() != rows * cols) throw std::invalid_argument("heatmap value count does not match grid");
  double lo = INFINITY, hi = -INFINITY;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  Canvas c(cols * cell, rows * cell);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < cols; ++k) {
      const long x0 = static_cast<long>(k * cell), y0 = static_cast<long>(r * cell);
      c.rect(x0, y0, x0 + static_cast<long>(cell) - 1, y0 + static_cast<long>(cell) - 1,
             ramp((values[r * cols + k] - lo) / span));
    }
  }
  return c;
}

Canvas montage(const std::vector<std::vector<Tensor>>& rows) {
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  const auto n = static_cast<long>(cols), m = static_cast<long>(rows.size());
  Canvas c(static_cast<std::size_t>(kGap + n * (kTile + kGap)), static_cast<std::size_t>(kGap + m * (kTile + kGap)),
           {235, 235, 235});
  for (long r = 0; r < m; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    for (long k = 0; k < static_cast<long>(row.size()); ++k) {
      const long x0 = kGap + k * (kTile + kGap), y0 = kGap + r * (kTile + kGap);
      c.image(row[static_cast<std::size_t>(k)], x0, y0);
      if (k == 0) c.frame(x0 - 3, y0 - 3, x0 + kTile + 2, y0 + kTile + 2, 3, kQueryBox);
    }
  }
  return c;
}

}  // namespace skgan::cli
