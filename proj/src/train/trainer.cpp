#include "skgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "skgan/errors.hpp"
#include "skgan/ops.hpp"

namespace skgan::train {

namespace {

void check_probabilities(const Tensor& p, const char* what) {
  for (double v : p.values()) {
    if (!(v > 0.0 && v < 1.0)) throw DomainError(std::string(what) + " must lie in (0,1), got " + std::to_string(v));
  }
}

double clamped(double p, double clamp) { return std::clamp(p, clamp, 1.0 - clamp); }

// Scalar sum over i of coef * log(q_i), with q = p or 1 - p after clamping.
// The gradient treats the clamp as the identity.
struct LogTerm {
  Tensor p;
  bool complement;
  double coef;

  double value(double clamp) const {
    double acc = 0.0;
    for (double v : p.values()) {
      const double c = clamped(v, clamp);
      acc += std::log(complement ? 1.0 - c : c);
    }
    return coef * acc;
  }

  void backward(double upstream, double clamp) const {
    if (!p.requires_grad()) return;
    auto g = p.mutable_grad();
    auto v = p.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double c = clamped(v[i], clamp);
      g[i] += upstream * coef * (complement ? -1.0 / (1.0 - c) : 1.0 / c);
    }
  }
};

Tensor log_loss(std::vector<LogTerm> terms, Tape* tape, double clamp) {
  double total = 0.0;
  for (const LogTerm& t : terms) total += t.value(clamp);
  Tensor out(Shape4::scalar(), std::vector<double>{total});
  bool wanted = false;
  for (const LogTerm& t : terms) wanted = wanted || Tape::wants(tape, {&t.p});
  if (wanted) {
    std::vector<Tensor> inputs;
    for (const LogTerm& t : terms) inputs.push_back(t.p);
    tape->record(inputs, out, [terms, out, clamp]() {
      const double up = out.grad()[0];
      for (const LogTerm& t : terms) t.backward(up, clamp);
    });
  }
  return out;
}

double mean_of(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v;
  return acc / static_cast<double>(t.numel());
}

void check_pair(const nn::Model& g, const nn::Model& d, const TrainConfig& cfg) {
  if (g.spec().role != nn::Role::kGenerator) throw std::invalid_argument(g.spec().name + " is not a generator");
  if (d.spec().role != nn::Role::kDiscriminator) {
    throw std::invalid_argument(d.spec().name + " is not a discriminator");
  }
  if (g.spec().input.c != cfg.latent_dim) {
    throw std::invalid_argument("generator latent width " + std::to_string(g.spec().input.c) +
                                " differs from latent_dim " + std::to_string(cfg.latent_dim));
  }
  if (g.spec().output != d.spec().input) {
    throw std::invalid_argument("generator output " + g.spec().output.str() + " does not match discriminator input " +
                                d.spec().input.str());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch < 1) throw std::invalid_argument("batch must be at least 1");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be at least 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  if (!(loss_clamp > 0.0 && loss_clamp < 0.5)) throw std::invalid_argument("loss_clamp must lie in (0,0.5)");
}

void adam_step(const std::vector<nn::NamedTensor>& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const nn::NamedTensor& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("Adam state does not match parameter list");
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor w = params[i].tensor;
    auto m = std::span(state.m[i]);
    auto v = std::span(state.v[i]);
    if (m.size() != w.numel()) throw std::invalid_argument("Adam moment size differs for " + params[i].name);
    auto x = w.mutable_values();
    const bool has = w.has_grad();
    auto g = has ? w.grad() : std::span<const double>();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double gj = has ? g[j] : 0.0;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      x[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

Tensor sample_latent(std::size_t m, std::size_t latent_dim, std::mt19937_64& rng) {
  if (m < 1 || latent_dim < 1) throw std::invalid_argument("sample_latent needs m, dz >= 1");
  Tensor z(Shape4{m, latent_dim, 1, 1});
  for (double& v : z.mutable_values()) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return z;
}

Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake, Tape* tape, double clamp) {
  if (d_real.numel() != d_fake.numel()) throw DimensionError("n", "real and fake batches differ in size");
  check_probabilities(d_real, "D(x)");
  check_probabilities(d_fake, "D(G(z))");
  const double coef = -1.0 / (2.0 * static_cast<double>(d_real.numel()));
  return log_loss({{d_real, false, coef}, {d_fake, true, coef}}, tape, clamp);
}

Tensor generator_loss(const Tensor& d_fake, Tape* tape, double clamp, bool minimax) {
  check_probabilities(d_fake, "D(G(z))");
  const double m = static_cast<double>(d_fake.numel());
  if (minimax) return log_loss({{d_fake, true, 1.0 / m}}, tape, clamp);
  return log_loss({{d_fake, false, -1.0 / m}}, tape, clamp);
}

TrainResult train(const data::SampleStore& dataset, nn::Model& g, nn::Model& d, const TrainConfig& cfg,
                  const TrainSink& sink) {
  cfg.validate();
  check_pair(g, d, cfg);
  if (dataset.size() < cfg.batch) {
    throw std::invalid_argument("dataset has " + std::to_string(dataset.size()) + " samples, fewer than batch " +
                                std::to_string(cfg.batch));
  }
  const AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps};
  const std::vector<nn::NamedTensor> g_params = g.parameters();
  const std::vector<nn::NamedTensor> d_params = d.parameters();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> picks(cfg.batch);
  TrainResult result;

  auto checkpoint = [&](CheckpointKind kind, std::size_t it) {
    if (sink.on_checkpoint) sink.on_checkpoint(kind, it, g, d);
  };
  // A NaN discriminator output would otherwise surface as a DomainError from
  // the loss precondition; it is reported as a non-finite loss instead.
  auto fail = [&](std::size_t it, const std::string& what, double value) {
    checkpoint(CheckpointKind::kDiagnostic, it);
    g.set_requires_grad(false);
    d.set_requires_grad(false);
    char buf[160];
    std::snprintf(buf, sizeof buf, "non-finite %s (%g) at iteration %zu", what.c_str(), value, it);
    throw NonFiniteLoss(it, buf);
  };

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    LossRecord rec;
    rec.iteration = it;

    d.set_requires_grad(true);
    g.set_requires_grad(false);
    for (std::size_t step = 0; step < cfg.k; ++step) {
      for (std::size_t& p : picks) p = rng() % dataset.size();
      const Tensor x = dataset.batch(picks);
      const Tensor z = sample_latent(cfg.batch, cfg.latent_dim, rng);
      const Tensor fake = g.forward(z, ops::Mode::kTrain);
      d.zero_grad();
      Tape tape;
      const Tensor d_real = d.forward(x, ops::Mode::kTrain, &tape);
      const Tensor d_fake = d.forward(fake, ops::Mode::kTrain, &tape);
      if (!d_real.all_finite() || !d_fake.all_finite()) fail(it, "J_D", std::nan(""));
      const Tensor loss = discriminator_loss(d_real, d_fake, &tape, cfg.loss_clamp);
      rec.j_d = loss.item();
      rec.mean_d_real = mean_of(d_real);
      rec.mean_d_fake = mean_of(d_fake);
      if (!std::isfinite(rec.j_d)) fail(it, "J_D", rec.j_d);
      tape.backward(loss);
      adam_step(d_params, result.adam_d, adam);
    }

    // Generator step: gradients flow through D to G, but only G moves and
    // D's running statistics are left alone.
    d.set_requires_grad(false);
    g.set_requires_grad(true);
    g.zero_grad();
    {
      const Tensor z = sample_latent(cfg.batch, cfg.latent_dim, rng);
      Tape tape;
      const Tensor fake = g.forward(z, ops::Mode::kTrain, &tape);
      const Tensor d_fake = d.forward(fake, ops::Mode::kTrain, &tape, false);
      if (!d_fake.all_finite()) fail(it, "J_G", std::nan(""));
      const Tensor loss = generator_loss(d_fake, &tape, cfg.loss_clamp, cfg.minimax_generator);
      rec.j_g = loss.item();
      if (!std::isfinite(rec.j_g)) fail(it, "J_G", rec.j_g);
      tape.backward(loss);
      adam_step(g_params, result.adam_g, adam);
    }

    result.history.push_back(rec);
    if (sink.on_record) sink.on_record(rec);
    if (cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0 && it != cfg.iterations) {
      checkpoint(CheckpointKind::kPeriodic, it);
    }
  }
  g.set_requires_grad(false);
  d.set_requires_grad(false);
  g.zero_grad();
  d.zero_grad();
  checkpoint(CheckpointKind::kFinal, cfg.iterations);
  return result;
}

std::string loss_csv_header() { return "iteration,j_d,j_g,mean_d_real,mean_d_fake"; }

std::string loss_csv_row(const LossRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", r.iteration, r.j_d, r.j_g, r.mean_d_real,
                r.mean_d_fake);
  return buf;
}

}  // namespace skgan::train
