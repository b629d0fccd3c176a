#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "skgan/ops.hpp"
#include "skgan/tape.hpp"
#include "skgan/tensor.hpp"

namespace skgan::nn {

enum class LayerKind { kConv, kTConv, kFc, kBatchNorm, kRelu, kSigmoid, kReshape };

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t out_c = 0;
  std::size_t in_c = 0;
  std::size_t kh = 0;
  std::size_t kw = 0;
  // Convolution stride, or the upsampling factor of a transposed convolution.
  std::size_t stride = 1;
  // Per-sample target of a reshape (n is ignored).
  Shape4 target{};

  static LayerSpec conv(std::size_t out_c, std::size_t in_c, std::size_t k, std::size_t stride);
  static LayerSpec tconv(std::size_t out_c, std::size_t in_c, std::size_t k, std::size_t up);
  static LayerSpec fc(std::size_t out_features, std::size_t in_features);
  static LayerSpec batchnorm(std::size_t channels);
  static LayerSpec relu();
  static LayerSpec sigmoid();
  static LayerSpec reshape(std::size_t c, std::size_t h, std::size_t w);

  // Zero padding per side: floor(k / 2).
  std::size_t pad() const { return kh / 2; }
  bool has_params() const;
  std::string describe() const;
};

enum class Role { kGenerator, kDiscriminator };

struct NetworkSpec {
  std::string name;
  Role role = Role::kDiscriminator;
  std::vector<LayerSpec> layers;
  // Per-sample shapes; n is always 1.
  Shape4 input{};
  Shape4 output{};
};

NetworkSpec sketch_generator(std::size_t latent_dim = 2);
NetworkSpec sketch_discriminator();
NetworkSpec thin_generator(std::size_t latent_dim = 2);
NetworkSpec thin_discriminator();

// "sketch-G", "sketch-D", "thin-G" or "thin-D".
NetworkSpec spec_by_name(const std::string& name, std::size_t latent_dim = 2);

// Per-sample shape before the first layer and after each layer. Throws
// BuildError naming the first boundary that does not chain.
std::vector<Shape4> shape_chain(const NetworkSpec& spec);

struct InitConfig {
  double weight_std = 0.02;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
};

struct ParamCounts {
  std::size_t weights = 0;
  std::size_t biases = 0;
  std::size_t gammas = 0;
  std::size_t betas = 0;
  std::size_t total() const { return weights + biases + gammas + betas; }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Model {
 public:
  Model() = default;
  // Copies are deep; tensors are never shared between two models.
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const NetworkSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  // Full forward pass. Train-mode batchnorm uses batch statistics and, when
  // update_stats is set, refreshes the running statistics.
  Tensor forward(const Tensor& input, ops::Mode mode, Tape* tape = nullptr, bool update_stats = true);

  // Eval-mode forward through the first `layer_count` layers; const and
  // safe to call concurrently.
  Tensor infer(const Tensor& input) const;
  Tensor infer_prefix(const Tensor& input, std::size_t layer_count) const;
  // Eval-mode output of every layer (index 0 is the input).
  std::vector<Tensor> trace(const Tensor& input) const;

  // Trainable tensors: weights, biases, gammas, betas, in layer order.
  std::vector<NamedTensor> parameters() const;
  // Trainable tensors plus batchnorm running statistics.
  std::vector<NamedTensor> state() const;
  // One (1,2,1,1) tensor per batchnorm layer holding (eps, momentum).
  std::vector<NamedTensor> batchnorm_configs() const;

  ParamCounts count_params() const;
  void zero_grad();
  void set_requires_grad(bool on);

  // Bitwise equality of the full state.
  bool identical(const Model& other) const;

 private:
  friend Model build_model(const NetworkSpec&, std::uint64_t, const InitConfig&);
  friend Model deserialize_checkpoint(std::span<const std::uint8_t>);

  struct Layer {
    LayerSpec spec;
    Tensor weight;  // conv/tconv/fc weight, or batchnorm gamma
    Tensor bias;    // conv/tconv/fc bias, or batchnorm beta
    ops::BatchNormState bn;
  };

  // Self is Model or const Model; only the former may update running stats.
  template <typename Self>
  static Tensor run_layers(Self& self, const Tensor& input, std::size_t layer_count, ops::Mode mode,
                           Tape* tape, bool update_stats, std::vector<Tensor>* trace);
  void check_input(const Tensor& input) const;

  NetworkSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<Layer> layers_;
};

// Weights ~ N(0, weight_std) drawn in layer order from the seed; biases and
// betas zero; gammas one; running mean 0 and variance 1.
Model build_model(const NetworkSpec& spec, std::uint64_t seed, const InitConfig& init = {});

inline ParamCounts count_params(const Model& model) { return model.count_params(); }

// Checkpoint file, all integers little-endian:
//   "SKGAN1"
//   u32 spec-name length, spec-name bytes
//   u64 seed
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u64 n, u64 c, u64 h, u64 w, n*c*h*w f64
// The tensors are the model's state(): parameters, running statistics, and
// one (eps, momentum) pair per batchnorm layer.
std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace skgan::nn
