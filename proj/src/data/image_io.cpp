#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "../common/binary_io.hpp"
#include "skgan/data.hpp"
#include "skgan/errors.hpp"

namespace skgan::data {

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

class PgmHeader {
 public:
  explicit PgmHeader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

  void magic() {
    if (b_.size() < 2 || b_[0] != 'P' || b_[1] != '5') throw ParseError(0, "not a binary PGM (P5)");
    pos_ = 2;
  }

  // Skips whitespace and '#' comments, then reads a decimal field.
  std::size_t number(const char* what) {
    for (;;) {
      if (pos_ >= b_.size()) throw ParseError(pos_, std::string("truncated PGM header before ") + what);
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
    if (!std::isdigit(b_[pos_])) throw ParseError(pos_, std::string("expected ") + what);
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) throw ParseError(pos_, std::string(what) + " too large");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw ParseError(pos_, "expected whitespace before raster");
    return pos_ + 1;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

bool is_png(std::span<const std::uint8_t> bytes) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

Tensor decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw ParseError(0, std::string("bad PNG: ") + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ParseError(0, "bad PNG: " + msg);
  }
  Tensor out(Shape4{1, 1, img.height, img.width});
  auto v = out.mutable_values();
  for (std::size_t i = 0; i < buf.size(); ++i) v[i] = buf[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + img.message);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_pgm(const Tensor& image) {
  const Shape4 s = image.shape();
  if (s.n != 1 || s.c != 1) throw DimensionError(s.n != 1 ? "n" : "c", "PGM needs a single-channel image");
  const std::string header = "P5\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.values()) out.push_back(quantize(v));
  return out;
}

Tensor decode_pgm(std::span<const std::uint8_t> bytes) {
  PgmHeader h(bytes);
  h.magic();
  const std::size_t w = h.number("width");
  const std::size_t ht = h.number("height");
  const std::size_t maxval = h.number("maxval");
  if (w == 0 || ht == 0) throw ParseError(0, "empty PGM");
  if (maxval == 0 || maxval > 65535) throw ParseError(0, "PGM maxval out of range");
  const std::size_t start = h.raster_start();
  const std::size_t depth = maxval > 255 ? 2 : 1;
  const std::size_t need = w * ht * depth;
  if (bytes.size() - start < need) throw ParseError(bytes.size(), "truncated PGM raster");
  Tensor out(Shape4{1, 1, ht, w});
  auto v = out.mutable_values();
  for (std::size_t i = 0; i < w * ht; ++i) {
    const std::size_t p = start + i * depth;
    // 16-bit samples are big-endian.
    const unsigned sample = depth == 2 ? (bytes[p] << 8) | bytes[p + 1] : bytes[p];
    if (sample > maxval) throw ParseError(p, "PGM sample exceeds maxval");
    v[i] = static_cast<double>(sample) / static_cast<double>(maxval);
  }
  return out;
}

Tensor read_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = detail::read_file(path);
  return is_png(bytes) ? decode_png(bytes) : decode_pgm(bytes);
}

Tensor load_image(const std::filesystem::path& path) {
  Tensor img = read_image(path);
  if (img.shape().h != kImageSize) throw DimensionError("h", path.string() + " is not 64x64");
  if (img.shape().w != kImageSize) throw DimensionError("w", path.string() + " is not 64x64");
  return img;
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  if (path.extension() == ".png") {
    const Shape4 s = image.shape();
    if (s.n != 1 || s.c != 1) throw DimensionError(s.n != 1 ? "n" : "c", "PNG needs a single-channel image");
    std::vector<std::uint8_t> px;
    px.reserve(image.numel());
    for (double v : image.values()) px.push_back(quantize(v));
    write_png(path, s.w, s.h, px, PNG_FORMAT_GRAY);
    return;
  }
  detail::write_file(path, encode_pgm(image));
}

void write_png_rgb(const std::filesystem::path& path, std::size_t width, std::size_t height,
                   std::span<const std::uint8_t> rgb) {
  if (rgb.size() != width * height * 3) throw std::invalid_argument("RGB buffer size mismatch");
  write_png(path, width, height, rgb, PNG_FORMAT_RGB);
}

}  // namespace skgan::data
