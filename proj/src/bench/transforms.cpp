#include <cmath>
#include <numbers>

#include "skgan/errors.hpp"
#include "skgan/invariance.hpp"

namespace skgan::bench {

namespace {

constexpr std::size_t kSide = 64;
constexpr double kCentre = 31.5;

void check_image(const Tensor& image) {
  const Shape4& s = image.shape();
  if (s.n != 1 || s.c != 1 || s.h != kSide || s.w != kSide) {
    throw DimensionError(s.h != kSide ? "h" : s.w != kSide ? "w" : s.c != 1 ? "c" : "n",
                         "transform expects (1,1,64,64), got " + s.str());
  }
}

// Bilinear read at (x, y); neighbours outside the image contribute 0.
double sample(std::span<const double> src, double x, double y) {
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const double ax = x - fx0, ay = y - fy0;
  const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
  double acc = 0.0;
  for (int dy = 0; dy < 2; ++dy) {
    const long yy = y0 + dy;
    if (yy < 0 || yy >= static_cast<long>(kSide)) continue;
    const double wy = dy ? ay : 1.0 - ay;
    for (int dx = 0; dx < 2; ++dx) {
      const long xx = x0 + dx;
      if (xx < 0 || xx >= static_cast<long>(kSide)) continue;
      const double wx = dx ? ax : 1.0 - ax;
      acc += wy * wx * src[static_cast<std::size_t>(yy) * kSide + static_cast<std::size_t>(xx)];
    }
  }
  return acc;
}

// Fills out(x, y) = image(source(x, y)).
template <typename Map>
Tensor resample(const Tensor& image, Map source) {
  Tensor out(image.shape());
  auto src = image.values();
  auto dst = out.mutable_values();
  for (std::size_t y = 0; y < kSide; ++y) {
    for (std::size_t x = 0; x < kSide; ++x) {
      const auto [sx, sy] = source(static_cast<double>(x) - kCentre, static_cast<double>(y) - kCentre);
      dst[y * kSide + x] = sample(src, kCentre + sx, kCentre + sy);
    }
  }
  return out;
}

}  // namespace

Tensor rotate(const Tensor& image, double degrees) {
  check_image(image);
  if (degrees == 0.0) return image.clone();
  const double t = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  // Inverse of the on-screen counter-clockwise turn in row-down coordinates.
  return resample(image, [c, s](double u, double v) { return std::pair{c * u - s * v, s * u + c * v}; });
}

Tensor rescale(const Tensor& image, double factor) {
  check_image(image);
  if (!(factor >= 0.5 && factor <= 1.5)) throw DomainError("scale factor must lie in [0.5, 1.5]");
  if (factor == 1.0) return image.clone();
  return resample(image, [factor](double u, double v) { return std::pair{u / factor, v / factor}; });
}

Tensor shift(const Tensor& image, int dx, int dy) {
  check_image(image);
  Tensor out(image.shape());
  auto src = image.values();
  auto dst = out.mutable_values();
  const long side = static_cast<long>(kSide);
  for (long y = 0; y < side; ++y) {
    const long sy = y - dy;
    if (sy < 0 || sy >= side) continue;
    for (long x = 0; x < side; ++x) {
      const long sx = x - dx;
      if (sx < 0 || sx >= side) continue;
      dst[static_cast<std::size_t>(y * side + x)] = src[static_cast<std::size_t>(sy * side + sx)];
    }
  }
  return out;
}

}  // namespace skgan::bench
