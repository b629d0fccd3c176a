#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "skgan/tensor.hpp"

namespace skgan::data {

inline constexpr std::size_t kImageSize = 64;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// A stroke primitive drawn in a [-1,1]^2 box, y pointing down.
struct Part {
  int id = 0;
  std::string name;
  std::vector<std::vector<Point>> strokes;
};

// The fixed library of 20 parts.
const std::vector<Part>& part_library();

struct PlacedPart {
  int part = 0;
  double dx = 0.0;
  double dy = 0.0;
  double scale = 1.0;
  double rotation_deg = 0.0;
};

struct MarkSpec {
  std::vector<PlacedPart> parts;
  double stroke_width = 1.5;
  std::uint64_t seed = 0;
  // Identifier of the mark this one was jittered from, if any.
  std::optional<std::string> duplicate_of;
};

// Geometry of the composed mark: its longest side is scaled to this many
// pixels and centred in the frame.
inline constexpr double kFitExtent = 54.0;

MarkSpec random_mark(std::mt19937_64& rng);
// Small offset/scale/rotation jitter of every part; stroke width kept.
MarkSpec jitter_mark(const MarkSpec& source, std::mt19937_64& rng);
// Binary raster (1,1,64,64): ink 1 where a pixel centre lies within half a
// stroke width of a segment, 0 elsewhere.
Tensor render_mark(const MarkSpec& spec);

std::string mark_to_json(const MarkSpec& spec);
MarkSpec mark_from_json(const std::string& text);

// --- images ---------------------------------------------------------------

// Binary PGM (P5). Values map to round(v * 255) after clamping to [0,1].
std::vector<std::uint8_t> encode_pgm(const Tensor& image);
// Any P5 file with maxval <= 65535; values are sample / maxval.
// Returns (1,1,h,w).
Tensor decode_pgm(std::span<const std::uint8_t> bytes);

// PGM or PNG chosen by file signature; any size.
Tensor read_image(const std::filesystem::path& path);
// read_image restricted to 64x64.
Tensor load_image(const std::filesystem::path& path);
// PNG when the extension is .png, PGM otherwise.
void save_image(const Tensor& image, const std::filesystem::path& path);

// 8-bit RGB PNG, row-major, 3 bytes per pixel.
void write_png_rgb(const std::filesystem::path& path, std::size_t width, std::size_t height,
                   std::span<const std::uint8_t> rgb);

// --- dataset --------------------------------------------------------------

struct ManifestRecord {
  std::string id;
  // Relative to the manifest's directory unless absolute.
  std::string path;
  // Compact JSON MarkSpec, or "external".
  std::string spec;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  double duplicate_fraction = 0.0;
  std::string hash;
  std::vector<ManifestRecord> records;
};

struct GenerateConfig {
  std::size_t count = 2000;
  std::uint64_t seed = 17;
  double duplicate_fraction = 0.1;
};

inline constexpr const char* kManifestName = "manifest.tsv";

// Writes PGM images under out_dir/images and out_dir/manifest.tsv.
// Exactly floor(count * duplicate_fraction) marks are jittered copies of
// earlier originals.
DatasetManifest generate_dataset(const GenerateConfig& cfg, const std::filesystem::path& out_dir);

// SHA-256 over (id, NUL, canonical PGM bytes) for every record in order.
std::string dataset_hash(const std::vector<ManifestRecord>& records, const std::vector<Tensor>& images);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

// All images of a manifest held in memory, in manifest order.
class SampleStore {
 public:
  SampleStore() = default;
  SampleStore(std::vector<std::string> ids, std::vector<Tensor> images, std::string hash = {});

  // Loads every image and recomputes the content hash; throws IoError when it
  // differs from the manifest header.
  static SampleStore from_manifest(const std::filesystem::path& manifest_path);

  std::size_t size() const { return images_.size(); }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const Tensor& image(std::size_t i) const { return images_.at(i); }
  std::optional<std::size_t> find(const std::string& id) const;
  const std::string& hash() const { return hash_; }
  const std::vector<std::string>& ids() const { return ids_; }

  // Stacks the chosen images into (m,1,64,64).
  Tensor batch(std::span<const std::size_t> indices) const;

 private:
  std::vector<std::string> ids_;
  std::vector<Tensor> images_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::string hash_;
};

}  // namespace skgan::data
