#include <cmath>

#include "skgan/errors.hpp"
#include "skgan/hashing.hpp"
#include "skgan/retrieval.hpp"

namespace skgan::retrieval {

namespace {

constexpr Shape4 kImage{1, 1, 64, 64};

void check_images(const Tensor& images) {
  const Shape4& s = images.shape();
  if (s.c != kImage.c) throw DimensionError("c", "encoder input " + s.str() + " is not (n,1,64,64)");
  if (s.h != kImage.h) throw DimensionError("h", "encoder input " + s.str() + " is not (n,1,64,64)");
  if (s.w != kImage.w) throw DimensionError("w", "encoder input " + s.str() + " is not (n,1,64,64)");
  if (s.n == 0) throw DimensionError("n", "encoder input is an empty batch");
  for (double v : images.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("encoder input pixel " + std::to_string(v) + " outside [0,1]");
  }
}

}  // namespace

Embedding normalize(std::span<const double> raw, std::string id) {
  Embedding e{std::move(id), std::vector<double>(raw.begin(), raw.end()), false};
  double ss = 0.0;
  for (double v : raw) ss += v * v;
  if (ss == 0.0) {
    e.degenerate = true;
    return e;
  }
  const double norm = std::sqrt(ss);
  for (double& v : e.values) v /= norm;
  return e;
}

double similarity(const Embedding& a, const Embedding& b) {
  if (a.values.size() != b.values.size()) {
    throw DimensionError("dim", "embedding lengths differ: " + std::to_string(a.values.size()) + " vs " +
                                    std::to_string(b.values.size()));
  }
  if (a.degenerate || b.degenerate) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

Embedding Encoder::encode(const Tensor& image, std::string id) const {
  if (image.shape().n != 1) throw DimensionError("n", "encode takes a single image, got " + image.shape().str());
  std::vector<std::string> ids{std::move(id)};
  return std::move(encode_batch(image, ids).front());
}

std::vector<Embedding> Encoder::encode_batch(const Tensor& images, std::span<const std::string> ids) const {
  check_images(images);
  const std::size_t n = images.shape().n;
  if (!ids.empty() && ids.size() != n) {
    throw DimensionError("n", std::to_string(ids.size()) + " ids for " + std::to_string(n) + " images");
  }
  const std::vector<double> raw = features(images);
  const std::size_t d = dim();
  std::vector<Embedding> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(normalize(std::span(raw).subspan(i * d, d), ids.empty() ? std::string() : ids[i]));
  }
  return out;
}

DiscriminatorEncoder::DiscriminatorEncoder(nn::Model d) : model_(std::move(d)) {
  const nn::NetworkSpec& spec = model_.spec();
  const auto& layers = spec.layers;
  if (spec.role != nn::Role::kDiscriminator) throw BuildError(0, spec.name + " is not a discriminator");
  if (layers.size() < 3 || layers.back().kind != nn::LayerKind::kSigmoid ||
      layers[layers.size() - 2].kind != nn::LayerKind::kFc) {
    throw BuildError(layers.size(), spec.name + " does not end in fc followed by sigmoid");
  }
  prefix_ = layers.size() - 2;
  const Shape4 feat = nn::shape_chain(spec)[prefix_];
  dim_ = feat.c * feat.h * feat.w;
  id_ = sha256_hex(nn::serialize_checkpoint(model_));
}

std::vector<double> DiscriminatorEncoder::features(const Tensor& images) const {
  const Tensor f = model_.infer_prefix(images, prefix_);
  return {f.values().begin(), f.values().end()};
}

DiscriminatorEncoder make_encoder(nn::Model d) { return DiscriminatorEncoder(std::move(d)); }

PixelEncoder::PixelEncoder() : id_("pixels") {}

std::vector<double> PixelEncoder::features(const Tensor& images) const {
  return {images.values().begin(), images.values().end()};
}

}  // namespace skgan::retrieval
