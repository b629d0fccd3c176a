#include <map>

#include "../common/binary_io.hpp"
#include "skgan/errors.hpp"
#include "skgan/network.hpp"

namespace skgan::nn {
namespace {

constexpr std::string_view kMagic = "SKGAN1";

void put_tensor(detail::ByteWriter& w, const std::string& name, const Tensor& t) {
  w.str32(name);
  const Shape4& s = t.shape();
  w.le<std::uint64_t>(s.n);
  w.le<std::uint64_t>(s.c);
  w.le<std::uint64_t>(s.h);
  w.le<std::uint64_t>(s.w);
  for (double v : t.values()) w.f64(v);
}

// Generators carry their latent size in the first fc weight.
std::size_t latent_dim_of(const std::string& spec_name, const std::map<std::string, Tensor>& tensors) {
  if (spec_name.size() < 2 || spec_name.substr(spec_name.size() - 2) != "-G") return 2;
  auto it = tensors.find("l0.weight");
  if (it == tensors.end()) throw ParseError(0, "generator checkpoint without l0.weight");
  return it->second.shape().c;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
  detail::ByteWriter w;
  w.raw(kMagic);
  w.str32(model.spec().name);
  w.le<std::uint64_t>(model.seed());
  const auto state = model.state();
  const auto configs = model.batchnorm_configs();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(state.size() + configs.size()));
  for (const auto& nt : state) put_tensor(w, nt.name, nt.tensor);
  for (const auto& nt : configs) put_tensor(w, nt.name, nt.tensor);
  return std::move(w.bytes());
}

Model deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect(kMagic);
  const std::string name = r.str32("spec name");
  const auto seed = r.le<std::uint64_t>("seed");
  const auto count = r.le<std::uint32_t>("tensor count");
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    std::string tname = r.str32("tensor name");
    Shape4 s;
    s.n = r.le<std::uint64_t>("shape");
    s.c = r.le<std::uint64_t>("shape");
    s.h = r.le<std::uint64_t>("shape");
    s.w = r.le<std::uint64_t>("shape");
    const std::size_t numel = s.numel();
    if (numel > (bytes.size() - r.offset()) / 8) throw ParseError(r.offset(), "tensor " + tname + " exceeds file");
    std::vector<double> v(numel);
    for (double& x : v) x = r.f64("tensor values");
    if (!tensors.emplace(tname, Tensor(s, std::move(v))).second) {
      throw ParseError(at, "duplicate tensor " + tname);
    }
  }
  if (!r.at_end()) throw ParseError(r.offset(), "trailing bytes after checkpoint");

  NetworkSpec spec;
  try {
    spec = spec_by_name(name, latent_dim_of(name, tensors));
  } catch (const std::invalid_argument& e) {
    throw ParseError(kMagic.size(), e.what());
  }
  Model m = build_model(spec, seed);
  auto take = [&](const std::string& key, Tensor& dst) {
    auto it = tensors.find(key);
    if (it == tensors.end()) throw ParseError(bytes.size(), "checkpoint is missing tensor " + key);
    if (it->second.shape() != dst.shape()) {
      throw ParseError(bytes.size(), "tensor " + key + " has shape " + it->second.shape().str() +
                                         ", model expects " + dst.shape().str());
    }
    dst = it->second;
    tensors.erase(it);
  };
  for (std::size_t i = 0; i < m.layers_.size(); ++i) {
    Model::Layer& l = m.layers_[i];
    const std::string prefix = "l" + std::to_string(i) + ".";
    if (l.spec.kind == LayerKind::kBatchNorm) {
      take(prefix + "gamma", l.weight);
      take(prefix + "beta", l.bias);
      take(prefix + "running_mean", l.bn.running_mean);
      take(prefix + "running_var", l.bn.running_var);
      Tensor cfg(Shape4::vec(2));
      take(prefix + "bn_config", cfg);
      l.bn.eps = cfg.values()[0];
      l.bn.momentum = cfg.values()[1];
    } else if (l.spec.has_params()) {
      take(prefix + "weight", l.weight);
      take(prefix + "bias", l.bias);
    }
  }
  if (!tensors.empty()) throw ParseError(bytes.size(), "unexpected tensor " + tensors.begin()->first);
  return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  detail::write_file(path, bytes);
}

Model load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return deserialize_checkpoint(bytes);
}

}  // namespace skgan::nn
