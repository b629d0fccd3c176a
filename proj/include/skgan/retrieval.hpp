#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skgan/data.hpp"
#include "skgan/network.hpp"
#include "skgan/tensor.hpp"

namespace skgan::retrieval {

// Unit-length feature vector, or all zeros with `degenerate` set when the
// raw features were all zero.
struct Embedding {
  std::string id;
  std::vector<double> values;
  bool degenerate = false;
};

// Divides by the L2 norm. A zero vector is returned unchanged and flagged.
Embedding normalize(std::span<const double> raw, std::string id = {});

// Dot product of two embeddings; 0 when either is degenerate.
double similarity(const Embedding& a, const Embedding& b);

// Maps images of shape (n,1,64,64), values in [0,1], to embeddings.
// Implementations are immutable and encode() may be called concurrently.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual std::size_t dim() const = 0;
  // Identifies the weights behind the features (checkpoint hash).
  virtual const std::string& id() const = 0;

  Embedding encode(const Tensor& image, std::string id = {}) const;
  std::vector<Embedding> encode_batch(const Tensor& images, std::span<const std::string> ids = {}) const;

 protected:
  // Raw (unnormalised) features, one row of dim() values per sample.
  virtual std::vector<double> features(const Tensor& images) const = 0;
};

// A discriminator run in eval mode up to, not including, its final fc.
class DiscriminatorEncoder final : public Encoder {
 public:
  explicit DiscriminatorEncoder(nn::Model d);

  std::size_t dim() const override { return dim_; }
  const std::string& id() const override { return id_; }
  const nn::Model& model() const { return model_; }
  std::size_t prefix_layers() const { return prefix_; }

 protected:
  std::vector<double> features(const Tensor& images) const override;

 private:
  nn::Model model_;
  std::size_t prefix_ = 0;
  std::size_t dim_ = 0;
  std::string id_;
};

// Throws BuildError when the model is not a discriminator ending in fc and
// sigmoid.
DiscriminatorEncoder make_encoder(nn::Model d);

// Flattened pixels. Similarity is then the uncentred normalised
// cross-correlation of the two images.
class PixelEncoder final : public Encoder {
 public:
  PixelEncoder();
  std::size_t dim() const override { return 64 * 64; }
  const std::string& id() const override { return id_; }

 protected:
  std::vector<double> features(const Tensor& images) const override;

 private:
  std::string id_;
};

struct Hit {
  std::string id;
  double similarity = 0.0;
};

class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  EmbeddingIndex(std::string encoder_id, std::string dataset_hash, std::size_t dim);

  const std::string& encoder_id() const { return encoder_id_; }
  const std::string& dataset_hash() const { return dataset_hash_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Embedding>& entries() const { return entries_; }
  std::optional<std::size_t> find(const std::string& id) const;

  // Throws std::invalid_argument on a duplicate id and DimensionError on a
  // length mismatch.
  void add(Embedding e);

  // Descending similarity, ties by ascending id. 1 <= k <= size().
  std::vector<Hit> top_k(const Embedding& query, std::size_t k) const;

  // "SKIDX1", str32 encoder id, str32 dataset hash, u64 count, u64 dim, then
  // per record str32 id, u8 degenerate flag and dim f64, little-endian.
  std::vector<std::uint8_t> serialize() const;
  static EmbeddingIndex deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static EmbeddingIndex load(const std::filesystem::path& path);

 private:
  std::string encoder_id_;
  std::string dataset_hash_;
  std::size_t dim_ = 0;
  std::vector<Embedding> entries_;
};

// Encodes every sample of the store in batches.
EmbeddingIndex build_index(const Encoder& enc, const data::SampleStore& store, std::size_t batch = 64);

// "rank,identifier,similarity", rank from 1.
void write_hits_csv(std::ostream& out, std::span<const Hit> hits);

}  // namespace skgan::retrieval
