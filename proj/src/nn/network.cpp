#include "skgan/network.hpp"

#include <algorithm>
#include <bit>
#include <random>
#include <sstream>
#include <type_traits>

#include "skgan/errors.hpp"

namespace skgan::nn {

LayerSpec LayerSpec::conv(std::size_t out_c, std::size_t in_c, std::size_t k, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::kConv;
  s.out_c = out_c;
  s.in_c = in_c;
  s.kh = s.kw = k;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::tconv(std::size_t out_c, std::size_t in_c, std::size_t k, std::size_t up) {
  LayerSpec s = conv(out_c, in_c, k, up);
  s.kind = LayerKind::kTConv;
  return s;
}

LayerSpec LayerSpec::fc(std::size_t out_features, std::size_t in_features) {
  LayerSpec s;
  s.kind = LayerKind::kFc;
  s.out_c = out_features;
  s.in_c = in_features;
  return s;
}

LayerSpec LayerSpec::batchnorm(std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::kBatchNorm;
  s.out_c = s.in_c = channels;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::sigmoid() {
  LayerSpec s;
  s.kind = LayerKind::kSigmoid;
  return s;
}

LayerSpec LayerSpec::reshape(std::size_t c, std::size_t h, std::size_t w) {
  LayerSpec s;
  s.kind = LayerKind::kReshape;
  s.target = Shape4{1, c, h, w};
  return s;
}

bool LayerSpec::has_params() const {
  return kind == LayerKind::kConv || kind == LayerKind::kTConv || kind == LayerKind::kFc ||
         kind == LayerKind::kBatchNorm;
}

std::string LayerSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case LayerKind::kConv:
      os << "c: " << out_c << "x" << in_c << "x" << kh << "x" << kw << " stride " << stride;
      break;
    case LayerKind::kTConv:
      os << "d: " << out_c << "x" << in_c << "x" << kh << "x" << kw << " up " << stride;
      break;
    case LayerKind::kFc:
      os << "fc: " << out_c << "x" << in_c;
      break;
    case LayerKind::kBatchNorm:
      os << "batchnorm(" << out_c << ")";
      break;
    case LayerKind::kRelu:
      os << "relu";
      break;
    case LayerKind::kSigmoid:
      os << "sigmoid";
      break;
    case LayerKind::kReshape:
      os << "reshape(" << target.c << "," << target.h << "," << target.w << ")";
      break;
  }
  return os.str();
}

namespace {

void add_block(NetworkSpec& spec, LayerSpec conv, bool batchnorm) {
  const std::size_t channels = conv.out_c;
  spec.layers.push_back(conv);
  if (batchnorm) spec.layers.push_back(LayerSpec::batchnorm(channels));
  spec.layers.push_back(LayerSpec::relu());
}

NetworkSpec finish(NetworkSpec spec) {
  spec.output = shape_chain(spec).back();
  return spec;
}

}  // namespace

NetworkSpec sketch_generator(std::size_t latent_dim) {
  NetworkSpec s{"sketch-G", Role::kGenerator, {}, Shape4{1, latent_dim, 1, 1}, {}};
  s.layers.push_back(LayerSpec::fc(128, latent_dim));
  s.layers.push_back(LayerSpec::reshape(8, 4, 4));
  s.layers.push_back(LayerSpec::relu());
  add_block(s, LayerSpec::tconv(16, 8, 3, 2), true);
  add_block(s, LayerSpec::tconv(16, 16, 5, 2), true);
  add_block(s, LayerSpec::tconv(16, 16, 5, 2), true);
  add_block(s, LayerSpec::tconv(16, 16, 5, 2), true);
  s.layers.push_back(LayerSpec::tconv(1, 16, 9, 1));
  s.layers.push_back(LayerSpec::sigmoid());
  return finish(std::move(s));
}

NetworkSpec sketch_discriminator() {
  NetworkSpec s{"sketch-D", Role::kDiscriminator, {}, Shape4{1, 1, 64, 64}, {}};
  add_block(s, LayerSpec::conv(8, 1, 9, 1), false);
  add_block(s, LayerSpec::conv(16, 8, 5, 2), true);
  add_block(s, LayerSpec::conv(16, 16, 5, 2), true);
  add_block(s, LayerSpec::conv(16, 16, 5, 2), true);
  s.layers.push_back(LayerSpec::reshape(1024, 1, 1));
  s.layers.push_back(LayerSpec::fc(1, 1024));
  s.layers.push_back(LayerSpec::sigmoid());
  return finish(std::move(s));
}

NetworkSpec thin_generator(std::size_t latent_dim) {
  NetworkSpec s{"thin-G", Role::kGenerator, {}, Shape4{1, latent_dim, 1, 1}, {}};
  s.layers.push_back(LayerSpec::fc(1024, latent_dim));
  s.layers.push_back(LayerSpec::reshape(64, 4, 4));
  s.layers.push_back(LayerSpec::relu());
  add_block(s, LayerSpec::tconv(32, 64, 3, 2), true);
  add_block(s, LayerSpec::tconv(16, 32, 3, 2), true);
  add_block(s, LayerSpec::tconv(8, 16, 3, 2), true);
  s.layers.push_back(LayerSpec::tconv(1, 8, 3, 2));
  s.layers.push_back(LayerSpec::sigmoid());
  return finish(std::move(s));
}

NetworkSpec thin_discriminator() {
  NetworkSpec s{"thin-D", Role::kDiscriminator, {}, Shape4{1, 1, 64, 64}, {}};
  add_block(s, LayerSpec::conv(8, 1, 3, 2), false);
  add_block(s, LayerSpec::conv(16, 8, 3, 2), true);
  add_block(s, LayerSpec::conv(32, 16, 3, 2), true);
  add_block(s, LayerSpec::conv(64, 32, 3, 2), true);
  s.layers.push_back(LayerSpec::reshape(1024, 1, 1));
  s.layers.push_back(LayerSpec::fc(1, 1024));
  s.layers.push_back(LayerSpec::sigmoid());
  return finish(std::move(s));
}

NetworkSpec spec_by_name(const std::string& name, std::size_t latent_dim) {
  if (name == "sketch-G") return sketch_generator(latent_dim);
  if (name == "sketch-D") return sketch_discriminator();
  if (name == "thin-G") return thin_generator(latent_dim);
  if (name == "thin-D") return thin_discriminator();
  throw std::invalid_argument("unknown network \"" + name + "\"");
}

std::vector<Shape4> shape_chain(const NetworkSpec& spec) {
  std::vector<Shape4> chain{spec.input};
  Shape4 cur = spec.input;
  auto fail = [&](std::size_t i, const std::string& why) {
    throw BuildError(i, spec.name + ": layer " + std::to_string(i) + " (" + spec.layers[i].describe() +
                            ") cannot follow shape " + cur.str() + ": " + why);
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::kConv:
        if (l.stride == 0 || l.kh == 0 || l.kw == 0) fail(i, "empty kernel or zero stride");
        if (cur.c != l.in_c) fail(i, "channel count differs");
        cur = Shape4{1, l.out_c, ops::strided_extent(cur.h, l.stride), ops::strided_extent(cur.w, l.stride)};
        break;
      case LayerKind::kTConv:
        if (l.stride == 0 || l.kh == 0 || l.kw == 0) fail(i, "empty kernel or zero upsampling");
        if (cur.c != l.in_c) fail(i, "channel count differs");
        cur = Shape4{1, l.out_c, cur.h * l.stride, cur.w * l.stride};
        break;
      case LayerKind::kFc:
        if (cur.per_sample() != l.in_c) fail(i, "feature count differs");
        cur = Shape4{1, l.out_c, 1, 1};
        break;
      case LayerKind::kBatchNorm:
        if (cur.c != l.in_c) fail(i, "channel count differs");
        break;
      case LayerKind::kReshape:
        if (cur.per_sample() != l.target.per_sample()) fail(i, "element count differs");
        cur = l.target;
        break;
      case LayerKind::kRelu:
      case LayerKind::kSigmoid:
        break;
    }
    chain.push_back(cur);
  }
  return chain;
}

Model build_model(const NetworkSpec& spec, std::uint64_t seed, const InitConfig& init) {
  shape_chain(spec);
  Model m;
  m.spec_ = spec;
  m.seed_ = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init.weight_std);
  for (const LayerSpec& l : spec.layers) {
    Model::Layer layer{l, {}, {}, ops::BatchNormState{}};
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kTConv:
      case LayerKind::kFc: {
        const Shape4 ws = l.kind == LayerKind::kFc ? Shape4{l.out_c, l.in_c, 1, 1}
                                                   : Shape4{l.out_c, l.in_c, l.kh, l.kw};
        std::vector<double> w(ws.numel());
        for (double& v : w) v = normal(rng);
        layer.weight = Tensor(ws, std::move(w));
        layer.bias = Tensor(Shape4::vec(l.out_c));
        break;
      }
      case LayerKind::kBatchNorm:
        layer.weight = Tensor(Shape4::vec(l.out_c), std::vector<double>(l.out_c, 1.0));
        layer.bias = Tensor(Shape4::vec(l.out_c));
        layer.bn = ops::BatchNormState(l.out_c);
        layer.bn.eps = init.bn_eps;
        layer.bn.momentum = init.bn_momentum;
        break;
      default:
        break;
    }
    m.layers_.push_back(std::move(layer));
  }
  return m;
}

Model::Model(const Model& other) : spec_(other.spec_), seed_(other.seed_), layers_(other.layers_) {
  for (Layer& l : layers_) {
    l.weight = l.weight.clone();
    l.bias = l.bias.clone();
    l.bn.running_mean = l.bn.running_mean.clone();
    l.bn.running_var = l.bn.running_var.clone();
  }
}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

void Model::check_input(const Tensor& input) const {
  const Shape4& s = input.shape();
  const Shape4& want = spec_.input;
  if (s.c != want.c) throw DimensionError("c", spec_.name + ": input " + s.str() + " does not match " + want.str());
  if (s.h != want.h) throw DimensionError("h", spec_.name + ": input " + s.str() + " does not match " + want.str());
  if (s.w != want.w) throw DimensionError("w", spec_.name + ": input " + s.str() + " does not match " + want.str());
  if (s.n == 0) throw DimensionError("n", spec_.name + ": empty batch");
}

template <typename Self>
Tensor Model::run_layers(Self& self, const Tensor& input, std::size_t layer_count, ops::Mode mode,
                         Tape* tape, bool update_stats, std::vector<Tensor>* trace) {
  self.check_input(input);
  Tensor x = input;
  if (trace) trace->push_back(x);
  for (std::size_t i = 0; i < layer_count && i < self.layers_.size(); ++i) {
    auto& layer = self.layers_[i];
    const LayerSpec& l = layer.spec;
    switch (l.kind) {
      case LayerKind::kConv:
        x = ops::conv2d(x, layer.weight, layer.bias, l.stride, l.pad(), tape);
        break;
      case LayerKind::kTConv:
        x = ops::conv2d_transpose(x, layer.weight, layer.bias, l.stride, l.pad(), tape);
        break;
      case LayerKind::kFc:
        x = ops::fully_connected(x, layer.weight, layer.bias, tape);
        break;
      case LayerKind::kBatchNorm:
        if (mode == ops::Mode::kEval) {
          x = ops::batch_norm_eval(x, layer.weight, layer.bias, layer.bn, tape);
        } else if constexpr (!std::is_const_v<Self>) {
          x = ops::batch_norm(x, layer.weight, layer.bias, layer.bn, mode, tape, update_stats);
        } else {
          throw std::logic_error("train-mode forward on a const model");
        }
        break;
      case LayerKind::kRelu:
        x = ops::relu(x, tape);
        break;
      case LayerKind::kSigmoid:
        x = ops::sigmoid(x, tape);
        break;
      case LayerKind::kReshape:
        x = ops::reshape(x, Shape4{x.shape().n, l.target.c, l.target.h, l.target.w}, tape);
        break;
    }
    if (trace) trace->push_back(x);
  }
  return x;
}

Tensor Model::forward(const Tensor& input, ops::Mode mode, Tape* tape, bool update_stats) {
  return run_layers(*this, input, layers_.size(), mode, tape, update_stats, nullptr);
}

Tensor Model::infer(const Tensor& input) const {
  return run_layers(*this, input, layers_.size(), ops::Mode::kEval, nullptr, false, nullptr);
}

Tensor Model::infer_prefix(const Tensor& input, std::size_t layer_count) const {
  return run_layers(*this, input, layer_count, ops::Mode::kEval, nullptr, false, nullptr);
}

std::vector<Tensor> Model::trace(const Tensor& input) const {
  std::vector<Tensor> out;
  run_layers(*this, input, layers_.size(), ops::Mode::kEval, nullptr, false, &out);
  return out;
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const std::string prefix = "l" + std::to_string(i) + ".";
    if (l.spec.kind == LayerKind::kBatchNorm) {
      out.push_back({prefix + "gamma", l.weight});
      out.push_back({prefix + "beta", l.bias});
    } else if (l.spec.has_params()) {
      out.push_back({prefix + "weight", l.weight});
      out.push_back({prefix + "bias", l.bias});
    }
  }
  return out;
}

std::vector<NamedTensor> Model::state() const {
  std::vector<NamedTensor> out = parameters();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.spec.kind != LayerKind::kBatchNorm) continue;
    const std::string prefix = "l" + std::to_string(i) + ".";
    out.push_back({prefix + "running_mean", l.bn.running_mean});
    out.push_back({prefix + "running_var", l.bn.running_var});
  }
  return out;
}

std::vector<NamedTensor> Model::batchnorm_configs() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.spec.kind != LayerKind::kBatchNorm) continue;
    out.push_back({"l" + std::to_string(i) + ".bn_config", Tensor(Shape4::vec(2), {l.bn.eps, l.bn.momentum})});
  }
  return out;
}

ParamCounts Model::count_params() const {
  ParamCounts counts;
  for (const Layer& l : layers_) {
    if (l.spec.kind == LayerKind::kBatchNorm) {
      counts.gammas += l.weight.numel();
      counts.betas += l.bias.numel();
    } else if (l.spec.has_params()) {
      counts.weights += l.weight.numel();
      counts.biases += l.bias.numel();
    }
  }
  return counts;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

void Model::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

bool Model::identical(const Model& other) const {
  if (spec_.name != other.spec_.name || seed_ != other.seed_) return false;
  const auto a = state();
  const auto b = other.state();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].tensor.shape() != b[i].tensor.shape()) return false;
    const auto va = a[i].tensor.values();
    const auto vb = b[i].tensor.values();
    if (!std::equal(va.begin(), va.end(), vb.begin(), [](double x, double y) {
          return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
        })) {
      return false;
    }
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bn.eps != other.layers_[i].bn.eps ||
        layers_[i].bn.momentum != other.layers_[i].bn.momentum) {
      return false;
    }
  }
  return true;
}

}  // namespace skgan::nn
